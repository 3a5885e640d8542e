"""Quaternion linear algebra: Hamilton-product layers and the two-layer
semantic synthesis block.

A quaternion linear layer over feature width ``d`` stores four real blocks of
shape (d/4, d/4) — one quarter of the weights of a dense d x d layer — and
acts through the structured block matrix of the Hamilton product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode
from .layers import uniform_weight, zeros_param


@dataclass
class QuaternionLinearParams:
    """Four real weight blocks (each (d/4) x (d/4)) plus an optional bias of length d."""

    w_r: DiffNode
    w_i: DiffNode
    w_j: DiffNode
    w_k: DiffNode
    bias: DiffNode | None = None

    @property
    def d(self) -> int:
        return 4 * self.w_r.shape[0]

    def weight_count(self) -> int:
        return self.w_r.data.size + self.w_i.data.size + self.w_j.data.size + self.w_k.data.size


def _check_divisible(d: int) -> None:
    if d % 4 != 0:
        raise ValueError(f"feature width {d} is not divisible by 4")


def init_quaternion_linear(
    rng: np.random.Generator, d: int, bias: bool = True
) -> QuaternionLinearParams:
    _check_divisible(d)
    q = d // 4
    # fan-in of the realized dense map is d, not d/4
    blocks = [uniform_weight(rng, d, (q, q)) for _ in range(4)]
    return QuaternionLinearParams(*blocks, bias=zeros_param(d) if bias else None)


def hamilton_block_matrix(p: QuaternionLinearParams) -> DiffNode:
    """Assemble the structured d x d matrix realizing the Hamilton product.

    Block layout (rows of blocks):
        [ R  -I  -J  -K ]
        [ I   R  -K   J ]
        [ J   K   R  -I ]
        [ K  -J   I   R ]
    """
    r, i, j, k = p.w_r, p.w_i, p.w_j, p.w_k
    ni, nj, nk = ad.neg(i), ad.neg(j), ad.neg(k)
    rows = [
        ad.concat([r, ni, nj, nk], axis=-1),
        ad.concat([i, r, nk, j], axis=-1),
        ad.concat([j, k, r, ni], axis=-1),
        ad.concat([k, nj, i, r], axis=-1),
    ]
    return ad.concat(rows, axis=-2)


def quaternion_linear(p: QuaternionLinearParams, h) -> DiffNode:
    """Apply the layer to row-major features: h @ H^T (+ bias)."""
    h = ad.as_node(h)
    d = p.d
    if h.shape[-1] != d:
        raise ValueError(f"input width {h.shape[-1]} != layer width {d}")
    out = ad.matmul(h, ad.swaplast(hamilton_block_matrix(p)))
    if p.bias is not None:
        out = ad.add(out, p.bias)
    return out


def quaternion_linear_by_blocks(p: QuaternionLinearParams, h) -> DiffNode:
    """Equivalent evaluation through four block multiplications.

    Kept as the second route of the dual-path consistency check against
    :func:`quaternion_linear`.
    """
    h = ad.as_node(h)
    hr, hi, hj, hk = quaternion_split(h)
    r, i, j, k = p.w_r, p.w_i, p.w_j, p.w_k

    def m(x, w):
        return ad.matmul(x, ad.swaplast(w))

    out_r = ad.sub(ad.sub(ad.sub(m(hr, r), m(hi, i)), m(hj, j)), m(hk, k))
    out_i = ad.add(ad.add(ad.sub(m(hi, r), m(hj, k)), m(hr, i)), m(hk, j))
    out_j = ad.add(ad.add(ad.sub(m(hj, r), m(hk, i)), m(hr, j)), m(hi, k))
    out_k = ad.add(ad.add(ad.sub(m(hj, i), m(hi, j)), m(hk, r)), m(hr, k))
    out = ad.concat([out_r, out_i, out_j, out_k], axis=-1)
    if p.bias is not None:
        out = ad.add(out, p.bias)
    return out


def quaternion_split(f) -> tuple[DiffNode, DiffNode, DiffNode, DiffNode]:
    """Slice features into four contiguous column blocks (real, i, j, k)."""
    f = ad.as_node(f)
    d = f.shape[-1]
    _check_divisible(d)
    q = d // 4
    return tuple(ad.narrow(f, -1, a * q, (a + 1) * q) for a in range(4))


@dataclass
class QsmParams:
    """Pre-projection plus exactly two stacked quaternion linear layers."""

    w_q: DiffNode
    layer1: QuaternionLinearParams
    layer2: QuaternionLinearParams


def init_qsm(rng: np.random.Generator, d: int) -> QsmParams:
    _check_divisible(d)
    return QsmParams(
        w_q=uniform_weight(rng, d, (d, d)),
        layer1=init_quaternion_linear(rng, d),
        layer2=init_quaternion_linear(rng, d),
    )


def qsm_forward(p: QsmParams, t_ca, t_ka, x0) -> DiffNode:
    """Fuse context embeddings, knowledge embeddings and the global visual
    feature, then refine in quaternion space.

    The global feature is added to every category row; the fused matrix is
    projected by ``w_q`` and passed through two quaternion layers, each
    followed by ReLU.
    """
    t_ca, t_ka, x0 = ad.as_node(t_ca), ad.as_node(t_ka), ad.as_node(x0)
    d = p.w_q.shape[0]
    if x0.ndim == 1:
        x0 = ad.reshape(x0, (1, d))
    base = ad.add(ad.add(t_ca, t_ka), x0)
    f_mp = ad.matmul(base, p.w_q)
    hidden = ad.relu(quaternion_linear(p.layer1, f_mp))
    return ad.relu(quaternion_linear(p.layer2, hidden))
