"""Finite-difference verification suite for every differentiable block.

Each check draws randomized micro-instances (feature width <= 16, <= 4
categories, <= 6 patches), reduces the block output to a scalar through a
fixed random projection, and compares reverse-mode gradients of all inputs
and parameters against central differences.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .aggregation import (
    LossConfig,
    asymmetric_loss,
    average_aggregate,
    hard_aggregate,
    soft_aggregate,
    total_loss,
)
from .alignments import CmaParams, GateParams, GatedBlockParams, cma, gate, gated_block
from .gradcheck import check_against_fd
from .layers import LayerNormParams, MlpParams, layer_norm, mlp_apply
from .prompting import DsfParams, PromptBank, cap_forward, toy_text_encode_all
from .quaternion import QsmParams, QuaternionLinearParams, qsm_forward, quaternion_linear

REL_TOL = 1e-4


def _mlp_from(p: dict, prefix: str) -> MlpParams:
    return MlpParams(p[f"{prefix}w1"], p[f"{prefix}b1"], p[f"{prefix}w2"], p[f"{prefix}b2"])


def _block_from(p: dict, prefix: str = "") -> GatedBlockParams:
    return GatedBlockParams(
        cma=CmaParams(p[f"{prefix}w_e"]),
        gate=GateParams(p[f"{prefix}w_f"], p[f"{prefix}w_g"], p[f"{prefix}b_f"], p[f"{prefix}b_g"]),
        mlp=_mlp_from(p, prefix),
        ln_attn=LayerNormParams(p[f"{prefix}ln_a_s"], p[f"{prefix}ln_a_b"]),
        ln_mlp=LayerNormParams(p[f"{prefix}ln_m_s"], p[f"{prefix}ln_m_b"]),
    )


def _block_arrays(rng, d: int, prefix: str = "") -> dict:
    return {
        f"{prefix}w_e": rng.standard_normal((d, d)) * 0.4,
        f"{prefix}w_f": rng.standard_normal((4 * d, d)) * 0.3,
        f"{prefix}w_g": rng.standard_normal((4 * d, d)) * 0.3,
        f"{prefix}b_f": rng.standard_normal(d) * 0.1,
        f"{prefix}b_g": rng.standard_normal(d) * 0.1,
        f"{prefix}w1": rng.standard_normal((d, d)) * 0.4,
        f"{prefix}b1": rng.standard_normal(d) * 0.1,
        f"{prefix}w2": rng.standard_normal((d, d)) * 0.4,
        f"{prefix}b2": rng.standard_normal(d) * 0.1,
        f"{prefix}ln_a_s": 1.0 + 0.2 * rng.standard_normal(d),
        f"{prefix}ln_a_b": 0.1 * rng.standard_normal(d),
        f"{prefix}ln_m_s": 1.0 + 0.2 * rng.standard_normal(d),
        f"{prefix}ln_m_b": 0.1 * rng.standard_normal(d),
    }


def _check_cma(rng):
    n, k, d = 2, 3, 8
    arrays = {
        "w_e": rng.standard_normal((d, d)) * 0.5,
        "e": rng.standard_normal((n, d)),
        "z": rng.standard_normal((k, d)),
    }
    w = rng.standard_normal((n, d))
    return lambda p: ad.sum_(ad.mul(cma(p["e"], p["z"], CmaParams(p["w_e"])), w)), arrays


def _check_gate(rng):
    n, d = 2, 6
    arrays = {
        "w_f": rng.standard_normal((4 * d, d)) * 0.4,
        "w_g": rng.standard_normal((4 * d, d)) * 0.4,
        "b_f": rng.standard_normal(d) * 0.2,
        "b_g": rng.standard_normal(d) * 0.2,
        "p_in": rng.standard_normal((n, d)),
        "u": rng.standard_normal((n, d)),
    }
    w = rng.standard_normal((n, d))

    def build(p):
        g, _ = gate(p["p_in"], p["u"], GateParams(p["w_f"], p["w_g"], p["b_f"], p["b_g"]))
        return ad.sum_(ad.mul(g, w))

    return build, arrays


def _check_quaternion_linear(rng):
    n, d = 2, 8
    q = d // 4
    arrays = {
        "w_r": rng.standard_normal((q, q)) * 0.5,
        "w_i": rng.standard_normal((q, q)) * 0.5,
        "w_j": rng.standard_normal((q, q)) * 0.5,
        "w_k": rng.standard_normal((q, q)) * 0.5,
        "bias": rng.standard_normal(d) * 0.2,
        "h": rng.standard_normal((n, d)),
    }
    w = rng.standard_normal((n, d))

    def build(p):
        layer = QuaternionLinearParams(p["w_r"], p["w_i"], p["w_j"], p["w_k"], p["bias"])
        return ad.sum_(ad.mul(quaternion_linear(layer, p["h"]), w))

    return build, arrays


def _check_qsm(rng):
    c, d = 2, 4
    q = d // 4
    arrays = {
        "w_q": rng.standard_normal((d, d)) * 0.5,
        "t_ca": rng.standard_normal((c, d)),
        "t_ka": rng.standard_normal((c, d)),
        "x0": rng.standard_normal(d),
    }
    for tag in ("1", "2"):
        for part in ("r", "i", "j", "k"):
            arrays[f"q{tag}_{part}"] = rng.standard_normal((q, q)) * 0.6
        arrays[f"q{tag}_bias"] = rng.standard_normal(d) * 0.2
    w = rng.standard_normal((c, d))

    def build(p):
        qsm = QsmParams(
            w_q=p["w_q"],
            layer1=QuaternionLinearParams(p["q1_r"], p["q1_i"], p["q1_j"], p["q1_k"], p["q1_bias"]),
            layer2=QuaternionLinearParams(p["q2_r"], p["q2_i"], p["q2_j"], p["q2_k"], p["q2_bias"]),
        )
        return ad.sum_(ad.mul(qsm_forward(qsm, p["t_ca"], p["t_ka"], p["x0"]), w))

    return build, arrays


def _check_dsf(rng):
    c, m, d = 2, 3, 4
    arrays = _block_arrays(rng, d)
    del arrays["w_f"], arrays["w_g"], arrays["b_f"], arrays["b_g"]
    arrays["t_ln"] = rng.standard_normal((c, d))
    arrays["x"] = rng.standard_normal((m, d))
    w = rng.standard_normal((c, d))

    def build(p):
        dsf = DsfParams(
            cma=CmaParams(p["w_e"]),
            mlp=_mlp_from(p, ""),
            ln_attn=LayerNormParams(p["ln_a_s"], p["ln_a_b"]),
            ln_mlp=LayerNormParams(p["ln_m_s"], p["ln_m_b"]),
        )
        return ad.sum_(ad.mul(cap_forward(p["t_ln"], p["x"], dsf), w))

    return build, arrays


def _check_gated_v2s(rng):
    c, m, d = 2, 3, 4
    arrays = _block_arrays(rng, d)
    arrays["t_uf"] = rng.standard_normal((c, d))
    arrays["x"] = rng.standard_normal((m, d))
    w = rng.standard_normal((c, d))

    def build(p):
        _, out, _ = gated_block(p["t_uf"], p["x"], _block_from(p))
        return ad.sum_(ad.mul(out, w))

    return build, arrays


def _check_gated_s2v(rng):
    c, m, d = 2, 3, 4
    arrays = _block_arrays(rng, d)
    arrays["t_uf"] = rng.standard_normal((c, d))
    arrays["x"] = rng.standard_normal((m, d))
    w = rng.standard_normal((m, d))

    def build(p):
        _, out, _ = gated_block(p["x"], p["t_uf"], _block_from(p))
        return ad.sum_(ad.mul(out, w))

    return build, arrays


def _check_soft_aggregate(rng):
    m, c = 4, 3
    arrays = {"p_r": rng.standard_normal((m, c)) * 2.0, "log_tau": rng.standard_normal(())}
    w = rng.standard_normal(c)

    def build(p):
        probs, _ = soft_aggregate(p["p_r"], ad.exp(p["log_tau"]))
        return ad.sum_(ad.mul(probs, w))

    return build, arrays


def _check_hard_aggregate(rng):
    m, c = 4, 3
    arrays = {"p_r": rng.standard_normal((m, c)) * 2.0}
    w = rng.standard_normal(c)
    return lambda p: ad.sum_(ad.mul(hard_aggregate(p["p_r"]), w)), arrays


def _check_average_aggregate(rng):
    m, c = 4, 3
    arrays = {"p_r": rng.standard_normal((m, c)) * 2.0}
    w = rng.standard_normal(c)
    return lambda p: ad.sum_(ad.mul(average_aggregate(p["p_r"]), w)), arrays


def _check_asymmetric_loss(rng):
    c = 4
    y = (rng.random(c) < 0.5).astype(np.float64)
    cfg = LossConfig(gamma_pos=float(rng.random()), gamma_neg=2.0 * float(rng.random()))
    arrays = {"logits": rng.standard_normal(c) * 1.5}

    def build(p):
        return asymmetric_loss(ad.sigmoid(p["logits"]), y, cfg)

    return build, arrays


def _check_total_loss(rng):
    c = 4
    y = (rng.random(c) < 0.5).astype(np.float64)
    cfg = LossConfig()
    arrays = {
        "logits_g": rng.standard_normal(c) * 1.5,
        "logits_r": rng.standard_normal(c) * 1.5,
    }

    def build(p):
        return total_loss(ad.sigmoid(p["logits_g"]), ad.sigmoid(p["logits_r"]), y, cfg)

    return build, arrays


def _check_temperature(rng):
    m, c = 5, 3
    y = (rng.random(c) < 0.5).astype(np.float64)
    y[0] = 1.0
    p_r = rng.standard_normal((m, c)) * 2.0
    arrays = {"log_tau": rng.standard_normal(()) * 0.5}

    def build(p):
        probs, _ = soft_aggregate(p_r, ad.exp(p["log_tau"]))
        return asymmetric_loss(probs, y, LossConfig())

    return build, arrays


def _check_mlp(rng):
    n, d = 3, 5
    arrays = {
        "w1": rng.standard_normal((d, d)) * 0.5,
        "b1": rng.standard_normal(d) * 0.2,
        "w2": rng.standard_normal((d, d)) * 0.5,
        "b2": rng.standard_normal(d) * 0.2,
        "x": rng.standard_normal((n, d)),
    }
    w = rng.standard_normal((n, d))
    return lambda p: ad.sum_(ad.mul(mlp_apply(_mlp_from(p, ""), p["x"]), w)), arrays


def _check_layer_norm(rng):
    n, d = 3, 6
    arrays = {
        "scale": 1.0 + 0.3 * rng.standard_normal(d),
        "shift": 0.2 * rng.standard_normal(d),
        "x": rng.standard_normal((n, d)) * 2.0,
    }
    w = rng.standard_normal((n, d))
    return (
        lambda p: ad.sum_(ad.mul(layer_norm(p["x"], LayerNormParams(p["scale"], p["shift"])), w)),
        arrays,
    )


def _check_softmax(rng):
    n, k = 3, 5
    arrays = {"x": rng.standard_normal((n, k)) * 2.0}
    w = rng.standard_normal((n, k))
    return lambda p: ad.sum_(ad.mul(ad.softmax_rows(p["x"]), w)), arrays


def _check_text_encoder(rng):
    c, l, d_tok, d = 3, 4, 6, 4
    arrays = {
        "tokens": rng.standard_normal((l, d_tok)) * 0.3,
        "words": rng.standard_normal((c, d_tok)),
    }
    proj = ad.constant(rng.standard_normal((d_tok, d)) * 0.5)
    w = rng.standard_normal((c, d))

    def build(p):
        bank = PromptBank(tokens=p["tokens"], word_embeddings=p["words"])
        return ad.sum_(ad.mul(toy_text_encode_all(bank, proj), w))

    return build, arrays


CHECKS = [
    ("cma", _check_cma),
    ("gate", _check_gate),
    ("quaternion_linear", _check_quaternion_linear),
    ("qsm", _check_qsm),
    ("dsf", _check_dsf),
    ("gated_v2s", _check_gated_v2s),
    ("gated_s2v", _check_gated_s2v),
    ("soft_aggregate", _check_soft_aggregate),
    ("hard_aggregate", _check_hard_aggregate),
    ("average_aggregate", _check_average_aggregate),
    ("asymmetric_loss", _check_asymmetric_loss),
    ("total_loss", _check_total_loss),
    ("temperature", _check_temperature),
    ("mlp", _check_mlp),
    ("layer_norm", _check_layer_norm),
    ("softmax", _check_softmax),
    ("text_encoder", _check_text_encoder),
]


@dataclass
class OracleResult:
    name: str
    worst_rel_err: float
    instances: int

    @property
    def passed(self) -> bool:
        return self.worst_rel_err < REL_TOL


def run_gradient_oracle(seed: int = 0, instances: int = 20) -> list[OracleResult]:
    """Run every check for the given number of random instances each."""
    results = []
    for name, maker in CHECKS:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        worst = 0.0
        for _ in range(instances):
            build, arrays = maker(rng)
            worst = max(worst, check_against_fd(build, arrays))
        results.append(OracleResult(name=name, worst_rel_err=worst, instances=instances))
    return results
