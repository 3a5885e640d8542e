"""Cross-modal attention with a query-only projection, the tanh/sigmoid gate,
and the two symmetric gated attention blocks that align label semantics with
patch features.

Both directions share one kernel: attend, gate against the residual stream,
then an MLP with residual.  Layer normalization is applied to the query
before attention and to the gate output before the MLP; keys and values pass
through untouched so the incoming features keep their original scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode
from .layers import LayerNormParams, MlpParams, init_layer_norm, init_mlp, layer_norm, mlp_apply, uniform_weight, zeros_param


@dataclass
class CmaParams:
    """Single query projection; keys and values are used as given."""

    w_e: DiffNode


def init_cma(rng: np.random.Generator, d: int) -> CmaParams:
    return CmaParams(w_e=uniform_weight(rng, d, (d, d)))


def cma(e, z, p: CmaParams) -> DiffNode:
    """softmax((e @ w_e) @ z^T / sqrt(d)) @ z, softmax over keys."""
    e, z = ad.as_node(e), ad.as_node(z)
    if z.shape[-2] == 0:
        raise ValueError("empty visual context: attention needs at least one key")
    d = e.shape[-1]
    scores = ad.mul(ad.matmul(ad.matmul(e, p.w_e), ad.swaplast(z)), 1.0 / np.sqrt(d))
    attn = ad.softmax_rows(scores)
    return ad.matmul(attn, z)


@dataclass
class GateParams:
    """Mixing gate over the concatenation [P, U, P-U, P*U] (width 4d)."""

    w_f: DiffNode
    w_g: DiffNode
    b_f: DiffNode
    b_g: DiffNode


def init_gate(rng: np.random.Generator, d: int) -> GateParams:
    return GateParams(
        w_f=uniform_weight(rng, 4 * d, (4 * d, d)),
        w_g=uniform_weight(rng, 4 * d, (4 * d, d)),
        b_f=zeros_param(d),
        b_g=zeros_param(d),
    )


def gate(p_in, u, params: GateParams) -> tuple[DiffNode, DiffNode]:
    """Gated mix g = v * f + (1 - v) * u.

    f = tanh([P, U, P-U, P*U] @ w_f + b_f) is the modulated signal and
    v = sigmoid(same concat @ w_g + b_g) the per-coordinate gate vector.
    Returns (g, v); v is kept for inspection dumps.
    """
    p_in, u = ad.as_node(p_in), ad.as_node(u)
    if p_in.shape != u.shape:
        raise ValueError(f"gate inputs must share a shape, got {p_in.shape} vs {u.shape}")
    cat = ad.concat([p_in, u, ad.sub(p_in, u), ad.mul(p_in, u)], axis=-1)
    f = ad.tanh(ad.add(ad.matmul(cat, params.w_f), params.b_f))
    v = ad.sigmoid(ad.add(ad.matmul(cat, params.w_g), params.b_g))
    g = ad.add(ad.mul(v, f), ad.mul(ad.sub(1.0, v), u))
    return g, v


@dataclass
class GatedBlockParams:
    """One direction of the dual alignment: attention + gate + MLP residual."""

    cma: CmaParams
    gate: GateParams
    mlp: MlpParams
    ln_attn: LayerNormParams
    ln_mlp: LayerNormParams


def init_gated_block(rng: np.random.Generator, d: int) -> GatedBlockParams:
    return GatedBlockParams(
        cma=init_cma(rng, d),
        gate=init_gate(rng, d),
        mlp=init_mlp(rng, d, d, d),
        ln_attn=init_layer_norm(d),
        ln_mlp=init_layer_norm(d),
    )


@dataclass
class GdmaParams:
    v2s: GatedBlockParams | None
    s2v: GatedBlockParams | None
    enable_v2s: bool = True
    enable_s2v: bool = True
    enable_gate: bool = True


def init_gdma(
    rng: np.random.Generator,
    d: int,
    enable_v2s: bool = True,
    enable_s2v: bool = True,
    enable_gate: bool = True,
) -> GdmaParams:
    return GdmaParams(
        v2s=init_gated_block(rng, d),
        s2v=init_gated_block(rng, d),
        enable_v2s=enable_v2s,
        enable_s2v=enable_s2v,
        enable_gate=enable_gate,
    )


def gated_block(
    e, z, p: GatedBlockParams, enable_gate: bool = True
) -> tuple[DiffNode, DiffNode, DiffNode | None]:
    """Shared kernel of both directions.

    attended = cma(norm(e), z); g = gate(attended, e) (or attended + e when
    the gate is bypassed); out = mlp(norm(g)) + g.  Returns (g, out, v).
    """
    e = ad.as_node(e)
    attended = cma(layer_norm(e, p.ln_attn), z, p.cma)
    if enable_gate:
        g, v = gate(attended, e, p.gate)
    else:
        g, v = ad.add(attended, e), None
    out = ad.add(mlp_apply(p.mlp, layer_norm(g, p.ln_mlp)), g)
    return g, out, v


def gdma_v2s(t_uf, x, p: GatedBlockParams, enable_gate: bool = True):
    """Visual-to-semantic direction: label rows query patch features.

    Returns (t_g, t_fn): the gated label representations consumed by the
    global branch and the final category centers.
    """
    t_g, t_fn, _ = gated_block(t_uf, x, p, enable_gate)
    return t_g, t_fn


def gdma_s2v(x, t_uf, p: GatedBlockParams, enable_gate: bool = True) -> DiffNode:
    """Semantic-to-visual direction: patch rows query label representations."""
    _, x_fn, _ = gated_block(x, t_uf, p, enable_gate)
    return x_fn


def gdma_apply(
    t_uf, x, p: GdmaParams, intermediates: dict | None = None
) -> tuple[DiffNode, DiffNode, DiffNode]:
    """Run both directions on the same (t_uf, x) inputs, honoring toggles.

    A disabled direction passes its input through unchanged (and t_g falls
    back to t_uf).  Directions never chain: both read the original inputs.
    Returns (t_g, t_fn, x_fn).
    """
    t_uf, x = ad.as_node(t_uf), ad.as_node(x)
    if p.enable_v2s and p.v2s is None or p.enable_s2v and p.s2v is None:
        raise ValueError("enabled direction has no parameters")
    if p.enable_v2s:
        t_g, t_fn, v_t = gated_block(t_uf, x, p.v2s, p.enable_gate)
    else:
        t_g, t_fn, v_t = t_uf, t_uf, None
    if p.enable_s2v:
        _, x_fn, v_x = gated_block(x, t_uf, p.s2v, p.enable_gate)
    else:
        x_fn, v_x = x, None
    if intermediates is not None:
        intermediates["gate_v2s"] = None if v_t is None else v_t.data
        intermediates["gate_s2v"] = None if v_x is None else v_x.data
    return t_g, t_fn, x_fn
