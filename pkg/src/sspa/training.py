"""Training loop, EMA-weighted evaluation, and the ablation driver."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .aggregation import asymmetric_loss
from .autodiff import backward
from .data import SyntheticDataset
from .errors import NumericsError
from .metrics import EvalReport, evaluate
from .model import ForwardOut, ModelConfig, SspaParams, forward, init_params, named_parameters
from .optim import (
    EmaState,
    OptimizerState,
    adamw_step,
    cosine_lr,
    ema_swap_in,
    ema_swap_out,
    ema_update,
    init_ema,
)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch: int = 32
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ema_decay: float = 0.9997


@dataclass
class TrainResult:
    params: SspaParams
    ema: EmaState
    history: list[dict] = field(default_factory=list)
    final_eval: EvalReport | None = None


def _loss_node(cfg: ModelConfig, out: ForwardOut, y: np.ndarray):
    if cfg.branch == "G":
        return asymmetric_loss(out.p_g_node, y, cfg.loss)
    if cfg.branch == "R":
        return asymmetric_loss(out.p_r_node, y, cfg.loss)
    return ad.add(
        asymmetric_loss(out.p_g_node, y, cfg.loss),
        ad.mul(asymmetric_loss(out.p_r_node, y, cfg.loss), cfg.loss.lam),
    )


def trainable_parameters(
    cfg: ModelConfig, params: SspaParams, dataset: SyntheticDataset
) -> dict[str, ad.DiffNode]:
    """Parameters the configured loss actually reaches, probed on one sample."""
    out = forward(cfg, params, dataset.x0[:1], dataset.x[:1], dataset.t_ka, audit=True)
    reachable = ad.reachable_parameters([out.p_g_node, out.p_r_node])
    return {k: p for k, p in named_parameters(params).items() if id(p) in reachable}


def predict_scores(
    cfg: ModelConfig,
    params: SspaParams,
    dataset: SyntheticDataset,
    batch: int = 64,
) -> np.ndarray:
    """Fused probabilities for a whole dataset; parallelizes over batches when
    SSPA_THREADS is set above 1 (forward with frozen parameters is pure)."""
    n = dataset.n
    scores = np.empty((n, dataset.y.shape[1]))
    ranges = [(s, min(s + batch, n)) for s in range(0, n, batch)]

    def run(span):
        s, e = span
        out = forward(cfg, params, dataset.x0[s:e], dataset.x[s:e], dataset.t_ka)
        scores[s:e] = out.prediction.p

    threads = int(os.environ.get("SSPA_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, ranges))
    else:
        for span in ranges:
            run(span)
    return scores


def evaluate_model(
    cfg: ModelConfig,
    params: SspaParams,
    dataset: SyntheticDataset,
    ema: EmaState | None = None,
    trainable: dict[str, ad.DiffNode] | None = None,
) -> EvalReport:
    """Metrics on a dataset, with EMA weights swapped in when provided."""
    if ema is not None and trainable is not None:
        backup = ema_swap_in(ema, trainable)
        try:
            scores = predict_scores(cfg, params, dataset)
        finally:
            ema_swap_out(trainable, backup)
    else:
        scores = predict_scores(cfg, params, dataset)
    return evaluate(scores, dataset.y)


def train(
    cfg: ModelConfig,
    train_data: SyntheticDataset,
    test_data: SyntheticDataset,
    tc: TrainConfig | None = None,
    params: SspaParams | None = None,
) -> TrainResult:
    """Minibatch training with the cosine schedule and EMA-weighted evaluation.

    Deterministic for a fixed (cfg, data, TrainConfig): shuffling and
    initialization derive from cfg.seed only.
    """
    tc = tc or TrainConfig()
    if train_data.n == 0:
        raise ValueError("empty training dataset")
    if params is None:
        params = init_params(cfg)
    try:
        trainable = trainable_parameters(cfg, params, train_data)
    except ValueError as exc:
        if "non-finite" in str(exc):
            raise NumericsError(f"non-finite values in initial forward pass: {exc}") from exc
        raise
    opt = OptimizerState(
        lr=tc.lr,
        weight_decay=tc.weight_decay,
        beta1=tc.beta1,
        beta2=tc.beta2,
        eps=tc.eps,
    )
    ema = init_ema(trainable, tc.ema_decay)
    shuffle_rng = np.random.default_rng(cfg.seed + 1)

    history: list[dict] = []
    final_eval: EvalReport | None = None
    for epoch in range(tc.epochs):
        opt.lr = cosine_lr(tc.lr, epoch, tc.epochs)
        order = shuffle_rng.permutation(train_data.n)
        losses = []
        for start in range(0, train_data.n, tc.batch):
            idx = order[start : start + tc.batch]
            try:
                out = forward(cfg, params, train_data.x0[idx], train_data.x[idx], train_data.t_ka)
                loss = _loss_node(cfg, out, train_data.y[idx])
            except ValueError as exc:
                if "non-finite" in str(exc):
                    raise NumericsError(
                        f"non-finite values at epoch {epoch} step {start // tc.batch}: {exc}"
                    ) from exc
                raise
            if not np.isfinite(loss.data):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch} step {start // tc.batch}: {loss.data}"
                )
            losses.append(float(loss.data))
            for p in trainable.values():
                p.zero_grad()
            backward(loss)
            grads = {
                k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for k, p in trainable.items()
            }
            adamw_step(opt, trainable, grads)
            ema_update(ema, trainable)
        report = evaluate_model(cfg, params, test_data, ema=ema, trainable=trainable)
        final_eval = report
        row = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": float(np.mean(losses)),
            "mAP": report.m_ap,
        }
        for table in (report.all_at_05, report.top3):
            prefix = "" if table.variant.startswith("ALL") else "top3_"
            row.update(
                {
                    f"{prefix}CP": table.cp,
                    f"{prefix}CR": table.cr,
                    f"{prefix}CF1": table.cf1,
                    f"{prefix}OP": table.op,
                    f"{prefix}OR": table.or_,
                    f"{prefix}OF1": table.of1,
                }
            )
        history.append(row)
    return TrainResult(params=params, ema=ema, history=history, final_eval=final_eval)


# ---------------------------------------------------------------------------
# ablation driver

ABLATION_AXES = ("synthesis", "gdma", "gate", "aggregator", "branch", "ssp")


def ablation_variants(base: ModelConfig, axis: str) -> list[tuple[str, ModelConfig]]:
    """Named config variants for one ablation axis, in report row order."""
    if axis == "synthesis":
        return [
            ("sum", replace(base, ssp_variant="sum")),
            ("concat", replace(base, ssp_variant="concat")),
            ("MLP", replace(base, ssp_variant="mlp")),
            ("QSM", replace(base, ssp_variant="qsm")),
        ]
    if axis == "gdma":
        return [
            ("none", replace(base, enable_v2s=False, enable_s2v=False)),
            ("V-to-S", replace(base, enable_v2s=True, enable_s2v=False)),
            ("S-to-V", replace(base, enable_v2s=False, enable_s2v=True)),
            ("both", replace(base, enable_v2s=True, enable_s2v=True)),
        ]
    if axis == "gate":
        return [
            ("without-gate", replace(base, enable_gate=False)),
            ("with-gate", replace(base, enable_gate=True)),
        ]
    if axis == "aggregator":
        return [(name, replace(base, aggregator=name)) for name in ("soft", "hard", "average")]
    if axis == "branch":
        return [(name, replace(base, branch=name)) for name in ("G", "R", "G+R")]
    if axis == "ssp":
        return [
            ("baseline", replace(base, ssp_variant="none", enable_v2s=False, enable_s2v=False)),
            ("ssp", replace(base, ssp_variant="qsm", enable_v2s=False, enable_s2v=False)),
            ("ssp+gdma", replace(base, ssp_variant="qsm", enable_v2s=True, enable_s2v=True)),
        ]
    raise ValueError(f"unknown ablation axis {axis!r}")


@dataclass
class AblationRow:
    name: str
    m_ap: float
    cf1: float
    of1: float


def run_ablation(
    base_cfg: ModelConfig,
    train_data: SyntheticDataset,
    test_data: SyntheticDataset,
    axis: str,
    tc: TrainConfig | None = None,
) -> list[AblationRow]:
    """Train every variant of one axis on identical data with identical seeds."""
    rows = []
    for name, cfg in ablation_variants(base_cfg, axis):
        result = train(cfg, train_data, test_data, tc)
        report = result.final_eval
        rows.append(AblationRow(name=name, m_ap=report.m_ap, cf1=report.all_at_05.cf1, of1=report.all_at_05.of1))
    return rows


def ablation_text(axis: str, rows: list[AblationRow]) -> str:
    lines = [f"axis: {axis}", f"{'variant':<14}{'mAP':>9}{'CF1':>9}{'OF1':>9}"]
    for r in rows:
        lines.append(f"{r.name:<14}{r.m_ap:>9.4f}{r.cf1:>9.4f}{r.of1:>9.4f}")
    return "\n".join(lines)


def ablation_csv(rows: list[AblationRow]) -> str:
    lines = ["variant,mAP,CF1,OF1"]
    for r in rows:
        lines.append(f"{r.name},{r.m_ap!r},{r.cf1!r},{r.of1!r}")
    return "\n".join(lines) + "\n"
