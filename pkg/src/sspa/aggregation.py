"""Regional score aggregation and the asymmetric multi-label objective.

Patch-category logits are raw dot products.  The soft aggregator weighs each
patch by a temperature-controlled softmax over patches before squashing; hard
and average aggregators are the ablation baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode

PROB_CLAMP = 1e-7


@dataclass
class LossConfig:
    gamma_pos: float = 0.0
    gamma_neg: float = 2.0
    lam: float = 1.0

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0 or self.lam < 0:
            raise ValueError("loss parameters must be non-negative")


@dataclass
class Prediction:
    """Fused per-category probabilities; branch fields are None when skipped."""

    p_g: np.ndarray | None
    p_r_hat: np.ndarray | None
    p: np.ndarray


def regional_logits(x_fn, t_fn) -> DiffNode:
    """Raw dot products between patch rows and category rows: (..., M, C)."""
    return ad.matmul(ad.as_node(x_fn), ad.swaplast(t_fn))


def _colwise_softmax(p_r_t) -> DiffNode:
    # operates on the transposed view (..., C, M); softmax over patches
    return ad.softmax_lastaxis(p_r_t)


def soft_aggregate(p_r, tau) -> tuple[DiffNode, DiffNode]:
    """Temperature-weighted aggregation over patches.

    gamma[:, j] = softmax_i(p_r[i, j] / tau); out_j = sigmoid(sum_i gamma[i, j] * p_r[i, j]).
    ``tau`` may be a float or a scalar node (trained temperature).  Returns
    (probabilities (..., C), gamma (..., M, C)).
    """
    p_r = ad.as_node(p_r)
    if isinstance(tau, DiffNode):
        inv = ad.power(tau, -1.0)
    else:
        if tau <= 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        inv = 1.0 / tau
    p_r_t = ad.swaplast(p_r)
    gamma_t = _colwise_softmax(ad.mul(p_r_t, inv))
    agg = ad.sum_(ad.mul(gamma_t, p_r_t), axis=-1)
    return ad.sigmoid(agg), ad.swaplast(gamma_t)


def hard_aggregate(p_r) -> DiffNode:
    """sigmoid of the column-wise maximum over patches."""
    return ad.sigmoid(ad.max_(ad.as_node(p_r), axis=-2))


def average_aggregate(p_r) -> DiffNode:
    """sigmoid of the column-wise mean over patches."""
    return ad.sigmoid(ad.mean(ad.as_node(p_r), axis=-2))


def asymmetric_loss(p, y, cfg: LossConfig) -> DiffNode:
    """Asymmetric focusing loss, averaged over categories (and batch).

    L = -mean_j [ y_j (1-p_j)^g+ log p_j + (1-y_j) p_j^g- log(1-p_j) ],
    with probabilities clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    p = ad.as_node(p)
    y_arr = np.asarray(y.data if isinstance(y, DiffNode) else y, dtype=np.float64)
    if not np.isin(y_arr, (0.0, 1.0)).all():
        raise ValueError("labels must be multi-hot 0/1")
    pc = ad.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.mul(y_arr, ad.mul(ad.power(ad.sub(1.0, pc), cfg.gamma_pos), ad.log(pc)))
    neg = ad.mul(1.0 - y_arr, ad.mul(ad.power(pc, cfg.gamma_neg), ad.log(ad.sub(1.0, pc))))
    return ad.neg(ad.mean(ad.add(pos, neg)))


def global_predict(x0, t_g) -> DiffNode:
    """sigmoid(x0 @ t_g^T): per-category probabilities from the global feature."""
    x0 = ad.as_node(x0)
    squeeze = x0.ndim == 1
    if squeeze:
        x0 = ad.reshape(x0, (1, x0.shape[0]))
    out = ad.sigmoid(ad.matmul(x0, ad.swaplast(t_g)))
    if squeeze:
        out = ad.reshape(out, (out.shape[-1],))
    return out


def fuse(p_g: np.ndarray, p_r_hat: np.ndarray) -> np.ndarray:
    """Final score: the mean of global and regional probabilities."""
    return (p_g + p_r_hat) / 2.0


def total_loss(p_g, p_r_hat, y, cfg: LossConfig) -> DiffNode:
    """Global loss plus lambda-weighted regional loss."""
    return ad.add(
        asymmetric_loss(p_g, y, cfg), ad.mul(asymmetric_loss(p_r_hat, y, cfg), cfg.lam)
    )
