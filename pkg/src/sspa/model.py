"""Full recognition head: configuration, parameter construction, forward pass.

The head consumes precomputed features (global vector, patch matrix) plus a
category-embedding matrix, and produces per-category probabilities from a
global branch and a soft-aggregated regional branch.  Every ablation axis is
a flag on :class:`ModelConfig`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .aggregation import (
    LossConfig,
    Prediction,
    average_aggregate,
    fuse,
    hard_aggregate,
    regional_logits,
    soft_aggregate,
)
from .alignments import GdmaParams, init_gdma, gdma_apply
from .autodiff import DiffNode
from .errors import ConfigError
from .layers import MlpParams, init_mlp, uniform_weight
from .prompting import (
    DsfParams,
    PromptBank,
    cap_forward,
    init_dsf,
    init_encoder_projection,
    init_prompt_bank,
    toy_text_encode_all,
)
from .quaternion import QsmParams, init_qsm, quaternion_linear

SSP_VARIANTS = ("qsm", "mlp", "concat", "sum", "none")
AGGREGATORS = ("soft", "hard", "average")
BRANCHES = ("G", "R", "G+R")


@dataclass
class ModelConfig:
    c: int = 8
    m: int = 16
    d: int = 32
    l: int = 4
    d_tok: int | None = None
    ssp_variant: str = "qsm"
    kap: bool = True
    cap: bool = True
    dsf: bool = True
    enable_v2s: bool = True
    enable_s2v: bool = True
    enable_gate: bool = True
    aggregator: str = "soft"
    branch: str = "G+R"
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0

    def __post_init__(self):
        if self.d_tok is None:
            self.d_tok = self.d
        self.validate()

    def validate(self) -> None:
        if self.ssp_variant not in SSP_VARIANTS:
            raise ConfigError(f"unknown ssp_variant {self.ssp_variant!r}")
        if self.aggregator not in AGGREGATORS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.branch not in BRANCHES:
            raise ConfigError(f"unknown branch {self.branch!r}")
        if self.ssp_variant == "qsm" and self.d % 4 != 0:
            raise ConfigError("quaternion synthesis requires d divisible by 4")
        if self.ssp_variant != "none" and not (self.kap or self.cap):
            raise ConfigError("synthesis needs at least one embedding family (kap or cap)")
        if min(self.c, self.m, self.d, self.l + 1) <= 0:
            raise ConfigError("c, m, d must be positive and l non-negative")

    def fusion_parts(self) -> int:
        """Inputs entering the synthesis stage: x0 plus enabled embedding families."""
        return 1 + int(self.kap) + int(self.cap)


@dataclass
class SynthesisParams:
    w_q: DiffNode | None = None
    qsm: QsmParams | None = None
    mlp: MlpParams | None = None
    w_cat: DiffNode | None = None


@dataclass
class SspaParams:
    bank: PromptBank | None
    encoder_proj: DiffNode | None
    dsf: DsfParams | None
    synthesis: SynthesisParams
    gdma: GdmaParams
    log_tau: DiffNode | None


def init_params(cfg: ModelConfig, seed: int | None = None) -> SspaParams:
    """Build the parameter families the configuration actually uses, all
    drawn from one seeded stream in a fixed order."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    d = cfg.d
    bank = proj = dsf = None
    if cfg.cap:
        bank = init_prompt_bank(rng, cfg.c, cfg.d_tok, cfg.l)
        proj = init_encoder_projection(rng, cfg.d_tok, d)
        if cfg.dsf:
            dsf = init_dsf(rng, d)
    synthesis = SynthesisParams()
    if cfg.ssp_variant == "qsm":
        synthesis.qsm = init_qsm(rng, d)
        synthesis.w_q = synthesis.qsm.w_q
    elif cfg.ssp_variant == "mlp":
        synthesis.w_q = uniform_weight(rng, d, (d, d))
        # hidden width d/4 matches the weight budget of two quaternion layers
        synthesis.mlp = init_mlp(rng, d, max(d // 4, 1), d)
    elif cfg.ssp_variant == "sum":
        synthesis.w_q = uniform_weight(rng, d, (d, d))
    elif cfg.ssp_variant == "concat":
        width = cfg.fusion_parts() * d
        synthesis.w_cat = uniform_weight(rng, width, (width, d))
    gdma = init_gdma(
        rng, d, enable_v2s=cfg.enable_v2s, enable_s2v=cfg.enable_s2v, enable_gate=cfg.enable_gate
    )
    if not cfg.enable_v2s:
        gdma.v2s = None
    if not cfg.enable_s2v:
        gdma.s2v = None
    log_tau = None
    if cfg.aggregator == "soft":
        log_tau = ad.parameter(np.zeros(()))  # temperature starts at exp(0) = 1
    return SspaParams(
        bank=bank, encoder_proj=proj, dsf=dsf, synthesis=synthesis, gdma=gdma, log_tau=log_tau
    )


def named_parameters(params: SspaParams) -> dict[str, DiffNode]:
    """Trainable leaves in a stable order."""
    out: dict[str, DiffNode] = {}

    def add_mlp(prefix: str, m: MlpParams):
        out[f"{prefix}.w1"] = m.w1
        out[f"{prefix}.b1"] = m.b1
        out[f"{prefix}.w2"] = m.w2
        out[f"{prefix}.b2"] = m.b2

    def add_block(prefix: str, b):
        out[f"{prefix}.w_e"] = b.cma.w_e
        out[f"{prefix}.gate.w_f"] = b.gate.w_f
        out[f"{prefix}.gate.w_g"] = b.gate.w_g
        out[f"{prefix}.gate.b_f"] = b.gate.b_f
        out[f"{prefix}.gate.b_g"] = b.gate.b_g
        add_mlp(f"{prefix}.mlp", b.mlp)
        out[f"{prefix}.ln_attn.scale"] = b.ln_attn.scale
        out[f"{prefix}.ln_attn.shift"] = b.ln_attn.shift
        out[f"{prefix}.ln_mlp.scale"] = b.ln_mlp.scale
        out[f"{prefix}.ln_mlp.shift"] = b.ln_mlp.shift

    if params.bank is not None:
        out["bank.tokens"] = params.bank.tokens
    if params.dsf is not None:
        out["dsf.w_e"] = params.dsf.cma.w_e
        add_mlp("dsf.mlp", params.dsf.mlp)
        out["dsf.ln_attn.scale"] = params.dsf.ln_attn.scale
        out["dsf.ln_attn.shift"] = params.dsf.ln_attn.shift
        out["dsf.ln_mlp.scale"] = params.dsf.ln_mlp.scale
        out["dsf.ln_mlp.shift"] = params.dsf.ln_mlp.shift

    s = params.synthesis
    if s.qsm is not None:
        out["synthesis.w_q"] = s.qsm.w_q
        for tag, layer in (("q1", s.qsm.layer1), ("q2", s.qsm.layer2)):
            out[f"synthesis.{tag}.w_r"] = layer.w_r
            out[f"synthesis.{tag}.w_i"] = layer.w_i
            out[f"synthesis.{tag}.w_j"] = layer.w_j
            out[f"synthesis.{tag}.w_k"] = layer.w_k
            out[f"synthesis.{tag}.bias"] = layer.bias
    elif s.w_q is not None:
        out["synthesis.w_q"] = s.w_q
    if s.mlp is not None:
        add_mlp("synthesis.mlp", s.mlp)
    if s.w_cat is not None:
        out["synthesis.w_cat"] = s.w_cat

    if params.gdma.v2s is not None:
        add_block("gdma.v2s", params.gdma.v2s)
    if params.gdma.s2v is not None:
        add_block("gdma.s2v", params.gdma.s2v)
    if params.log_tau is not None:
        out["log_tau"] = params.log_tau
    return out


@dataclass
class ForwardOut:
    """Prediction plus the loss-side nodes and retained intermediates."""

    prediction: Prediction
    p_g_node: DiffNode | None
    p_r_node: DiffNode | None
    gamma: np.ndarray | None
    gate_v2s: np.ndarray | None
    gate_s2v: np.ndarray | None


def _synthesize(cfg: ModelConfig, params: SspaParams, t_ca, t_ka_node, x0_node) -> DiffNode:
    parts = []
    if cfg.cap:
        parts.append(t_ca)
    if cfg.kap:
        parts.append(t_ka_node)
    parts.append(x0_node)
    variant = cfg.ssp_variant
    if variant == "concat":
        # broadcast every part to a common (..., C, d) shape before concat
        target = np.broadcast_shapes(*(tuple(p.shape) for p in parts))
        widened = [
            p if tuple(p.shape) == target else ad.add(p, ad.constant(np.zeros(target)))
            for p in parts
        ]
        return ad.matmul(ad.concat(widened, axis=-1), params.synthesis.w_cat)
    base = parts[0]
    for p in parts[1:]:
        base = ad.add(base, p)
    f_mp = ad.matmul(base, params.synthesis.w_q)
    if variant == "sum":
        return f_mp
    if variant == "mlp":
        m = params.synthesis.mlp
        hidden = ad.relu(ad.add(ad.matmul(f_mp, m.w1), m.b1))
        return ad.relu(ad.add(ad.matmul(hidden, m.w2), m.b2))
    # qsm
    hidden = ad.relu(quaternion_linear(params.synthesis.qsm.layer1, f_mp))
    return ad.relu(quaternion_linear(params.synthesis.qsm.layer2, hidden))


def forward(
    cfg: ModelConfig,
    params: SspaParams,
    x0: np.ndarray,
    x: np.ndarray,
    t_ka: np.ndarray,
    audit: bool = False,
) -> ForwardOut:
    """Run the head on a batch.

    ``x0``: (B, d) global features; ``x``: (B, M, d) patch features;
    ``t_ka``: (C, d) category embeddings.  With ``audit=True`` the call
    raises :class:`ConfigError` if no trainable parameter can receive
    gradient from the configured loss.
    """
    b = x0.shape[0]
    x_node = ad.constant(x)
    x0_node = ad.constant(x0.reshape(b, 1, cfg.d))

    if cfg.ssp_variant == "none":
        t_uf = ad.constant(np.broadcast_to(t_ka, (b, cfg.c, cfg.d)).copy())
    else:
        t_ca = None
        if cfg.cap:
            t_ln = toy_text_encode_all(params.bank, params.encoder_proj)
            t_ca = cap_forward(t_ln, x_node, params.dsf) if cfg.dsf else t_ln
        t_uf = _synthesize(cfg, params, t_ca, ad.constant(t_ka), x0_node)

    intermediates: dict = {}
    t_g, t_fn, x_fn = gdma_apply(t_uf, x_node, params.gdma, intermediates)

    p_g_node = None
    p_r_node = None
    gamma = None
    if cfg.branch in ("G", "G+R"):
        p_g_node = ad.reshape(
            ad.sigmoid(ad.matmul(x0_node, ad.swaplast(t_g))), (b, cfg.c)
        )
    if cfg.branch in ("R", "G+R"):
        p_r = regional_logits(x_fn, t_fn)
        if cfg.aggregator == "soft":
            tau = ad.exp(params.log_tau)
            p_r_node, gamma_node = soft_aggregate(p_r, tau)
            gamma = gamma_node.data
        elif cfg.aggregator == "hard":
            p_r_node = hard_aggregate(p_r)
        else:
            p_r_node = average_aggregate(p_r)

    if audit:
        roots = [n for n in (p_g_node, p_r_node) if n is not None]
        if not ad.reachable_parameters(roots):
            raise ConfigError("degenerate config: loss reaches no trainable parameter")

    if cfg.branch == "G":
        pred = Prediction(p_g=p_g_node.data, p_r_hat=None, p=p_g_node.data.copy())
    elif cfg.branch == "R":
        pred = Prediction(p_g=None, p_r_hat=p_r_node.data, p=p_r_node.data.copy())
    else:
        pred = Prediction(
            p_g=p_g_node.data,
            p_r_hat=p_r_node.data,
            p=fuse(p_g_node.data, p_r_node.data),
        )
    return ForwardOut(
        prediction=pred,
        p_g_node=p_g_node,
        p_r_node=p_r_node,
        gamma=gamma,
        gate_v2s=intermediates.get("gate_v2s"),
        gate_s2v=intermediates.get("gate_s2v"),
    )


def config_to_dict(cfg: ModelConfig) -> dict:
    out = asdict(cfg)
    out["loss"] = {"gamma_pos": cfg.loss.gamma_pos, "gamma_neg": cfg.loss.gamma_neg, "lam": cfg.loss.lam}
    return out
