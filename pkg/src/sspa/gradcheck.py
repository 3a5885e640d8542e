"""Central-difference gradient verification.

The finite-difference estimate is the independent oracle every analytic
backward pass in this package is checked against; it never calls into the
reverse-mode machinery itself.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Array, DiffNode, backward


def finite_difference_gradient(
    f: Callable[[Array], float], theta: Array, eps: float = 1e-5
) -> Array:
    """Central differences (f(t+e_i*eps) - f(t-e_i*eps)) / (2*eps), per coordinate."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.ravel()
    for i in range(flat.size):
        up = theta.copy()
        up.flat[i] = flat[i] + eps
        down = theta.copy()
        down.flat[i] = flat[i] - eps
        f_up = float(f(up))
        f_down = float(f(down))
        if not (np.isfinite(f_up) and np.isfinite(f_down)):
            raise ValueError("non-finite function value during finite differences")
        grad.flat[i] = (f_up - f_down) / (2.0 * eps)
    return grad


def relative_error(a: Array, b: Array) -> float:
    """||a - b|| / max(||a||, ||b||); zero when both vanish."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / max(na, nb, 1e-12)


def check_against_fd(
    build: Callable[[dict[str, DiffNode]], DiffNode],
    arrays: dict[str, Array],
    eps: float = 1e-5,
) -> float:
    """Compare reverse-mode gradients of ``build`` with finite differences.

    ``build`` maps named leaf nodes to a scalar DiffNode.  Returns the worst
    relative error over all named inputs (inputs whose gradient is absent are
    treated as zero).
    """
    params = {k: DiffNode(np.asarray(v, dtype=np.float64), requires_grad=True) for k, v in arrays.items()}
    loss = build(params)
    backward(loss)

    worst = 0.0
    for key in arrays:
        analytic = params[key].grad
        if analytic is None:
            analytic = np.zeros_like(params[key].data)

        def f_scalar(theta, _key=key):
            trial = {
                k: DiffNode(theta.reshape(params[_key].data.shape) if k == _key else p.data)
                for k, p in params.items()
            }
            return float(build(trial).data)

        fd = finite_difference_gradient(f_scalar, params[key].data.ravel().copy(), eps)
        worst = max(worst, relative_error(analytic.ravel(), fd))
    return worst
