"""AdamW with decoupled weight decay, cosine schedule, and parameter EMA."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Array, DiffNode
from .errors import NumericsError


@dataclass
class OptimizerState:
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


def adamw_step(
    state: OptimizerState, params: dict[str, DiffNode], grads: dict[str, Array]
) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Raises :class:`NumericsError` on non-finite gradients.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericsError(f"gradient blow-up in parameter '{name}'")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p.data)


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """base_lr * (1 + cos(pi * epoch / total_epochs)) / 2."""
    if total_epochs == 0:
        raise ValueError("total_epochs must be positive")
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    return base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs)) / 2.0


@dataclass
class EmaState:
    decay: float
    shadow: dict[str, Array]
    anchor: dict[str, Array] = field(default_factory=dict)
    updates: int = 0

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("EMA decay must lie in [0, 1)")


def init_ema(params: dict[str, DiffNode], decay: float = 0.9997) -> EmaState:
    return EmaState(
        decay=decay,
        shadow={k: p.data.copy() for k, p in params.items()},
        anchor={k: p.data.copy() for k, p in params.items()},
    )


def ema_update(state: EmaState, params: dict[str, DiffNode]) -> None:
    """shadow <- decay * shadow + (1 - decay) * param, elementwise."""
    d = state.decay
    for name, p in params.items():
        s = state.shadow[name]
        if s.shape != p.data.shape:
            raise ValueError(f"EMA shadow shape mismatch for '{name}'")
        s *= d
        s += (1.0 - d) * p.data
    state.updates += 1


def ema_weights(state: EmaState) -> dict[str, Array]:
    """Zero-debiased average weights.

    The shadow starts at the initial parameters, so after t updates it still
    carries weight decay^t on them; dividing that component out yields a
    proper weighted average of the visited parameters (the same bias
    correction Adam applies to its moments).  With decay -> 0 this reduces to
    the raw current weights.
    """
    t = state.updates
    if t == 0:
        return {k: s.copy() for k, s in state.shadow.items()}
    ct = state.decay**t
    scale = 1.0 - ct
    return {
        k: (state.shadow[k] - ct * state.anchor[k]) / scale for k in state.shadow
    }


def ema_swap_in(state: EmaState, params: dict[str, DiffNode]) -> dict[str, Array]:
    """Install debiased average weights into params; returns a backup for
    ema_swap_out."""
    averaged = ema_weights(state)
    backup = {}
    for name, p in params.items():
        backup[name] = p.data
        p.data = averaged[name]
    return backup


def ema_swap_out(params: dict[str, DiffNode], backup: dict[str, Array]) -> None:
    for name, p in params.items():
        p.data = backup[name]
