"""Parameter containers and small building blocks: linear init, MLP, layer norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffNode

LN_EPS = 1e-5


def uniform_weight(rng: np.random.Generator, fan_in: int, shape) -> DiffNode:
    """Weight matrix drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return ad.parameter(rng.uniform(-bound, bound, size=shape))


def zeros_param(shape) -> DiffNode:
    return ad.parameter(np.zeros(shape))


@dataclass
class MlpParams:
    """Two linear layers around one hidden activation."""

    w1: DiffNode
    b1: DiffNode
    w2: DiffNode
    b2: DiffNode


def init_mlp(rng: np.random.Generator, d_in: int, hidden: int, d_out: int) -> MlpParams:
    return MlpParams(
        w1=uniform_weight(rng, d_in, (d_in, hidden)),
        b1=zeros_param(hidden),
        w2=uniform_weight(rng, hidden, (hidden, d_out)),
        b2=zeros_param(d_out),
    )


def zero_mlp(d_in: int, hidden: int, d_out: int) -> MlpParams:
    return MlpParams(
        w1=zeros_param((d_in, hidden)),
        b1=zeros_param(hidden),
        w2=zeros_param((hidden, d_out)),
        b2=zeros_param(d_out),
    )


def mlp_apply(params: MlpParams, x) -> DiffNode:
    """hidden = relu(x @ w1 + b1); return hidden @ w2 + b2."""
    x = ad.as_node(x)
    if x.shape[-1] != params.w1.shape[0]:
        raise ValueError(
            f"mlp input width {x.shape[-1]} != weight fan-in {params.w1.shape[0]}"
        )
    hidden = ad.relu(ad.add(ad.matmul(x, params.w1), params.b1))
    return ad.add(ad.matmul(hidden, params.w2), params.b2)


@dataclass
class LayerNormParams:
    scale: DiffNode
    shift: DiffNode


def init_layer_norm(d: int) -> LayerNormParams:
    return LayerNormParams(scale=ad.parameter(np.ones(d)), shift=zeros_param(d))


def layer_norm(x, params: LayerNormParams | None = None, eps: float = LN_EPS) -> DiffNode:
    """Normalize over the last (feature) axis, optionally with learned scale/shift."""
    x = ad.as_node(x)
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = ad.sub(x, mu)
    var = ad.mean(ad.mul(centered, centered), axis=-1, keepdims=True)
    inv = ad.power(ad.add(var, eps), -0.5)
    normed = ad.mul(centered, inv)
    if params is None:
        return normed
    return ad.add(ad.mul(normed, params.scale), params.shift)
