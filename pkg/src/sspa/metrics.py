"""Ranking and thresholded multi-label metrics.

Conventions (exposed in the JSON output for auditability):

* average precision is the mean of precision-at-rank over the ranks of the
  positives, with no interpolation; ties are broken by stable index order;
* mAP averages AP over classes that have at least one positive, and reports
  the excluded classes;
* CF1 is the harmonic mean of the class-averaged precision and recall (not
  the mean of per-class F1); OF1 is the harmonic mean of the pooled
  precision and recall;
* in threshold mode a class predicted positive for no sample gets precision
  0 and is flagged; top-3 mode marks exactly the three highest-scoring
  classes of each image as positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVENTIONS = {
    "ap": "mean-precision-at-positive-ranks",
    "cf1": "harmonic-mean-of-class-averaged-precision-recall",
    "of1": "harmonic-mean-of-pooled-precision-recall",
    "threshold": 0.5,
    "top_k": 3,
}


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP of one class; requires at least one positive label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.sum() == 0:
        raise ValueError("average precision undefined without positive labels")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order].astype(np.float64)
    cum_pos = np.cumsum(ranked)
    precision_at = cum_pos / np.arange(1, len(scores) + 1)
    return float(precision_at[ranked == 1].mean())


def _harmonic(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


@dataclass
class EvalTable:
    variant: str  # "ALL@0.5" or "top-3"
    cp: float
    cr: float
    cf1: float
    op: float
    or_: float
    of1: float
    zero_prediction_classes: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "CP": self.cp,
            "CR": self.cr,
            "CF1": self.cf1,
            "OP": self.op,
            "OR": self.or_,
            "OF1": self.of1,
            "zero_prediction_classes": self.zero_prediction_classes,
        }


def prf1(scores: np.ndarray, labels: np.ndarray, mode: str = "threshold") -> EvalTable:
    """Class-averaged and pooled precision/recall/F1.

    ``mode`` is "threshold" (decision at 0.5, scores must lie in [0, 1]) or
    "top3" (the three highest-scoring classes per image are the positives).
    Classes without any true positive are excluded from the class averages.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n, c = scores.shape
    if mode == "threshold":
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("threshold mode requires scores in [0, 1]")
        preds = scores > 0.5
        variant = "ALL@0.5"
    elif mode == "top3":
        k = min(3, c)
        preds = np.zeros_like(labels, dtype=bool)
        top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
        preds[np.arange(n)[:, None], top] = True
        variant = "top-3"
    else:
        raise ValueError(f"unknown mode {mode!r}")

    tp = (preds & (labels == 1)).sum(axis=0).astype(np.float64)
    pred_pos = preds.sum(axis=0).astype(np.float64)
    actual_pos = labels.sum(axis=0)

    has_pos = actual_pos > 0
    zero_pred = np.flatnonzero((pred_pos == 0) & has_pos)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(pred_pos > 0, tp / np.where(pred_pos > 0, pred_pos, 1), 0.0)
        rec = np.where(has_pos, tp / np.where(has_pos, actual_pos, 1), 0.0)
    cp = float(prec[has_pos].mean()) if has_pos.any() else 0.0
    cr = float(rec[has_pos].mean()) if has_pos.any() else 0.0
    op = float(tp.sum() / pred_pos.sum()) if pred_pos.sum() > 0 else 0.0
    or_ = float(tp.sum() / actual_pos.sum()) if actual_pos.sum() > 0 else 0.0
    return EvalTable(
        variant=variant,
        cp=cp,
        cr=cr,
        cf1=_harmonic(cp, cr),
        op=op,
        or_=or_,
        of1=_harmonic(op, or_),
        zero_prediction_classes=[int(i) for i in zero_pred],
    )


@dataclass
class EvalReport:
    per_class_ap: list[float | None]
    m_ap: float
    excluded_classes: list[int]
    all_at_05: EvalTable
    top3: EvalTable

    def as_dict(self) -> dict:
        return {
            "mAP": self.m_ap,
            "per_class_AP": self.per_class_ap,
            "excluded_classes": self.excluded_classes,
            "ALL": self.all_at_05.as_dict(),
            "top3": self.top3.as_dict(),
            "conventions": CONVENTIONS,
        }

    def text_table(self) -> str:
        header = f"{'variant':<10}{'CP':>8}{'CR':>8}{'CF1':>8}{'OP':>8}{'OR':>8}{'OF1':>8}"
        lines = [f"mAP: {self.m_ap:.4f}", header]
        for table in (self.all_at_05, self.top3):
            lines.append(
                f"{table.variant:<10}"
                f"{table.cp:>8.4f}{table.cr:>8.4f}{table.cf1:>8.4f}"
                f"{table.op:>8.4f}{table.or_:>8.4f}{table.of1:>8.4f}"
            )
        return "\n".join(lines)


def evaluate(scores: np.ndarray, labels: np.ndarray) -> EvalReport:
    """Full report: per-class AP, mAP, and both P/R/F1 variants."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    c = scores.shape[1]
    per_class: list[float | None] = []
    excluded: list[int] = []
    for j in range(c):
        if labels[:, j].sum() == 0:
            per_class.append(None)
            excluded.append(j)
        else:
            per_class.append(average_precision(scores[:, j], labels[:, j]))
    included = [ap for ap in per_class if ap is not None]
    m_ap = float(np.mean(included)) if included else 0.0
    return EvalReport(
        per_class_ap=per_class,
        m_ap=m_ap,
        excluded_classes=excluded,
        all_at_05=prf1(scores, labels, "threshold"),
        top3=prf1(scores, labels, "top3"),
    )
