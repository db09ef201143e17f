"""AU F1, emotion F1, valence/arousal CCC and the composite challenge score."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .loss import N_AU, N_EXPR
from .taskhead import RawOutputs, activate
from .tensor import ContractError


def ccc(pred, truth) -> float:
    """Concordance correlation coefficient with population (1/n) moments.

    Two constant series score 1 when equal and 0 otherwise.
    """
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.shape != t.shape or p.size < 2:
        raise ContractError(f"ccc needs two equal-length series of length >= 2, got {p.size} and {t.size}")
    mp, mt = p.mean(), t.mean()
    vp, vt = ((p - mp) ** 2).mean(), ((t - mt) ** 2).mean()
    cov = ((p - mp) * (t - mt)).mean()
    denom = vp + vt + (mp - mt) ** 2
    if denom == 0.0:
        return 1.0
    if vp == 0.0 and vt == 0.0:
        return 0.0
    return float(2.0 * cov / denom)


def _f1_from_counts(tp, fp, fn) -> np.ndarray:
    tp, fp, fn = (np.asarray(x, dtype=np.float64) for x in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    # a class never predicted and never present counts as perfect
    return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 1.0)


def _average(tp, fp, fn, support, average: str) -> float:
    per = _f1_from_counts(tp, fp, fn)
    if average == "macro":
        return float(per.mean())
    if average == "micro":
        return float(_f1_from_counts(tp.sum(), fp.sum(), fn.sum()))
    if average == "weighted":
        w = np.asarray(support, dtype=np.float64)
        return float((per * w).sum() / w.sum()) if w.sum() > 0 else float(per.mean())
    raise ContractError(f"unknown F1 averaging {average!r}")


def binary_counts(pred: np.ndarray, truth: np.ndarray) -> tuple:
    """Column-wise TP, FP, FN for 0/1 matrices."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = (pred & truth).sum(axis=0)
    fp = (pred & ~truth).sum(axis=0)
    fn = (~pred & truth).sum(axis=0)
    return tp, fp, fn


def au_f1(pred_probs, truth, threshold: float = 0.5, average: str = "macro") -> tuple:
    """(average F1, per-AU F1). An AU is predicted on when its probability exceeds ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ContractError("threshold must lie in (0, 1)")
    probs = np.asarray(pred_probs, dtype=np.float64).reshape(-1, N_AU)
    truth = np.asarray(truth).reshape(-1, N_AU)
    tp, fp, fn = binary_counts(probs > threshold, truth > 0.5)
    return _average(tp, fp, fn, tp + fn, average), _f1_from_counts(tp, fp, fn)


def expr_f1(pred_probs, truth, average: str = "macro") -> tuple:
    """(average F1, per-class F1) of the argmax decision, one-vs-rest per class."""
    probs = np.asarray(pred_probs, dtype=np.float64).reshape(-1, N_EXPR)
    truth = np.asarray(truth, dtype=int).reshape(-1)
    if len(truth) != len(probs):
        raise ContractError("prediction and label counts differ")
    eye = np.eye(N_EXPR, dtype=bool)
    tp, fp, fn = binary_counts(eye[probs.argmax(axis=1)], eye[truth])
    return _average(tp, fp, fn, tp + fn, average), _f1_from_counts(tp, fp, fn)


def abaw4_score(au_f1: float, expr_f1: float, va_ccc: float) -> float:
    """Plain sum of the three task metrics."""
    return au_f1 + expr_f1 + va_ccc


@dataclass
class MetricReport:
    au_f1: float
    expr_f1: float
    va_ccc: float
    abaw4_score: float
    valence_ccc: float
    arousal_ccc: float
    per_au_f1: list = field(default_factory=list)
    per_expr_f1: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{k}: {getattr(self, k):.6f}" for k in
                 ("au_f1", "expr_f1", "va_ccc", "abaw4_score", "valence_ccc", "arousal_ccc")]
        lines.append("per_au_f1: " + " ".join(f"{x:.4f}" for x in self.per_au_f1))
        lines.append("per_expr_f1: " + " ".join(f"{x:.4f}" for x in self.per_expr_f1))
        lines += [f"n_{k}: {v}" for k, v in self.counts.items()]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def metric_report(va_pred, va_true, au_probs, au_true, expr_probs, expr_true,
                  threshold: float = 0.5, average: str = "macro") -> MetricReport:
    va_pred = np.asarray(va_pred, dtype=np.float64).reshape(-1, 2)
    va_true = np.asarray(va_true, dtype=np.float64).reshape(-1, 2)
    v_ccc = ccc(va_pred[:, 0], va_true[:, 0])
    a_ccc = ccc(va_pred[:, 1], va_true[:, 1])
    va = (v_ccc + a_ccc) / 2.0
    au, per_au = au_f1(au_probs, au_true, threshold, average)
    ex, per_ex = expr_f1(expr_probs, expr_true, average)
    return MetricReport(
        au_f1=au, expr_f1=ex, va_ccc=va, abaw4_score=abaw4_score(au, ex, va),
        valence_ccc=v_ccc, arousal_ccc=a_ccc,
        per_au_f1=[float(x) for x in per_au], per_expr_f1=[float(x) for x in per_ex],
        counts={"va": len(va_pred), "au": len(np.asarray(au_true).reshape(-1, N_AU)),
                "expr": len(np.asarray(expr_true).reshape(-1))},
    )


def evaluate(records: Sequence, probs, examples: Sequence, t_au: float = 1.0, t_expr: float = 5.0,
             threshold: float = 0.5, average: str = "macro") -> MetricReport:
    """Join prediction-log frames with manifest labels on (video_id, frame_index).

    ``probs`` is the [n, 20] probability block of a smoothed log, or None to
    activate the raw logits with the given temperatures. Each task is scored
    only on frames that carry its label.
    """
    truth = {(ex.video_id, int(ex.frame_index)): ex.target for ex in examples}
    va_p, va_t, au_p, au_t, ex_p, ex_t = [], [], [], [], [], []
    raw = RawOutputs(np.array([np.asarray(r.raw.v_hat) for r in records]).reshape(-1, 2),
                     np.array([np.asarray(r.raw.u_au) for r in records]).reshape(-1, N_AU),
                     np.array([np.asarray(r.raw.u_expr) for r in records]).reshape(-1, N_EXPR))
    if probs is None:
        pred = activate(raw, t_au, t_expr)
        a_hat, e_hat = pred.a_hat, pred.e_hat
    else:
        probs = np.asarray(probs)
        a_hat, e_hat = probs[:, :N_AU], probs[:, N_AU:]
    for i, r in enumerate(records):
        t = truth.get((r.video_id, int(r.frame_index)))
        if t is None:
            continue
        if t.va is not None:
            va_p.append(raw.v_hat[i])
            va_t.append(t.va)
        if t.au is not None:
            au_p.append(a_hat[i])
            au_t.append(t.au)
        if t.expr is not None:
            ex_p.append(e_hat[i])
            ex_t.append(int(t.expr))
    if not va_p or not au_p or not ex_p:
        raise ContractError("every task needs at least one labelled frame to evaluate")
    return metric_report(va_p, va_t, au_p, au_t, ex_p, ex_t, threshold, average)
