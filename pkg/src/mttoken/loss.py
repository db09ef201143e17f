"""Uncertainty-weighted multi-task loss with missing-label masking.

Per task, for one example:

    va:   MSE(v_hat, va) / (2 * sigma2_va)              (mean over 2 components)
    au:   BCE(sigmoid(u_au / T_au), au) / (2 * T_au)     (mean over 12 AUs)
    expr: CCE(softmax(u_expr / T_expr), q) / T_expr      (q one-hot or soft)

The classification terms act on temperature-scaled logits, so the
probabilities being trained are the ones ``activate`` reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .config import HeadConfig
from .tensor import ContractError, Tensor

N_AU = 12
N_EXPR = 8


@dataclass
class MultiTaskTarget:
    """Labels for one example; ``None`` marks a missing annotation.

    ``expr`` is a class index, or an 8-vector of class weights after MixUp.
    """

    va: Optional[Sequence[float]] = None
    au: Optional[Sequence[float]] = None
    expr: Optional[object] = None

    @property
    def mask(self) -> tuple:
        return (self.va is not None, self.au is not None, self.expr is not None)


@dataclass
class TargetBatch:
    va: np.ndarray    # [B, 2]
    au: np.ndarray    # [B, 12], values in [0, 1]
    expr: np.ndarray  # [B, 8], rows on the simplex (zeros when absent)
    mask: np.ndarray  # [B, 3] bool, columns (va, au, expr)

    def __len__(self) -> int:
        return len(self.mask)

    def take(self, idx) -> "TargetBatch":
        return TargetBatch(self.va[idx], self.au[idx], self.expr[idx], self.mask[idx])


def one_hot(cls: int, n: int = N_EXPR) -> np.ndarray:
    if not 0 <= int(cls) < n:
        raise ContractError(f"class index {cls} outside 0..{n - 1}")
    v = np.zeros(n)
    v[int(cls)] = 1.0
    return v


def expr_distribution(expr) -> np.ndarray:
    if np.ndim(expr) == 0:
        return one_hot(int(expr))
    q = np.asarray(expr, dtype=np.float64)
    if q.shape != (N_EXPR,):
        raise ContractError(f"soft emotion label must have {N_EXPR} entries, got {q.shape}")
    return q


def collate_targets(targets: Sequence[MultiTaskTarget]) -> TargetBatch:
    B = len(targets)
    va, au, expr = np.zeros((B, 2)), np.zeros((B, N_AU)), np.zeros((B, N_EXPR))
    mask = np.zeros((B, 3), dtype=bool)
    for i, t in enumerate(targets):
        mask[i] = t.mask
        if t.va is not None:
            va[i] = t.va
        if t.au is not None:
            au[i] = t.au
        if t.expr is not None:
            expr[i] = expr_distribution(t.expr)
    return TargetBatch(va, au, expr, mask)


def va_loss(v_hat, va, sigma2_va: float) -> Tensor:
    """Reduces over the last axis; batched inputs give one value per example."""
    if sigma2_va <= 0:
        raise ContractError("sigma2_va must be positive")
    diff = T.as_tensor(v_hat) - T.as_tensor(va)
    return (diff * diff).mean(axis=-1) * (1.0 / (2.0 * sigma2_va))


def au_loss(u_au, au, t_au: float) -> Tensor:
    if t_au <= 0:
        raise ContractError("T_au must be positive")
    z = T.as_tensor(u_au) / t_au
    # -[y log s(z) + (1 - y) log(1 - s(z))] == softplus(z) - y z
    bce = T.softplus(z) - T.as_tensor(au) * z
    return bce.mean(axis=-1) * (1.0 / (2.0 * t_au))


def expr_loss(u_expr, expr, t_expr: float) -> Tensor:
    """``expr`` may be a class index, an array of indices, or class weights on the last axis."""
    if t_expr <= 0:
        raise ContractError("T_expr must be positive")
    u = T.as_tensor(u_expr)
    if isinstance(expr, Tensor):
        q = expr
    elif np.ndim(expr) == u.ndim:
        q = Tensor(np.asarray(expr, dtype=np.float64))
    else:
        idx = np.asarray(expr)
        if idx.dtype.kind not in "iu" or (idx < 0).any() or (idx >= u.shape[-1]).any():
            raise ContractError(f"emotion class {expr!r} outside 0..{u.shape[-1] - 1}")
        q = Tensor(np.eye(u.shape[-1])[idx])
    cce = -(q * T.log_softmax(u / t_expr, axis=-1)).sum(axis=-1)
    return cce * (1.0 / t_expr)


def task_losses(raw, targets: TargetBatch, head: HeadConfig) -> Tensor:
    """Per-example, per-task losses, shape [B, 3], masked entries included (unweighted)."""
    B = len(targets)
    cols = [
        va_loss(raw.v_hat, targets.va, head.sigma2_va),
        au_loss(raw.u_au, targets.au, head.t_au),
        expr_loss(raw.u_expr, targets.expr, head.t_expr),
    ]
    return T.concat([c.reshape(B, 1) for c in cols], axis=1)


def total_loss(raw, targets: TargetBatch, head: HeadConfig, reweight: str = "per_example") -> Tensor:
    """Masked, reweighted batch loss.

    per_example: each example averages its present task losses, then examples
    with at least one label are averaged. per_task: each task is averaged over
    the examples that carry it and the task means are summed.
    """
    mask = np.asarray(targets.mask, dtype=np.float64)
    if not mask.any():
        raise ContractError("batch has no labels at all")
    losses = task_losses(raw, targets, head)
    if reweight == "per_example":
        counts = mask.sum(axis=1)
        labelled = counts > 0
        weights = np.where(labelled[:, None], mask / np.maximum(counts, 1.0)[:, None], 0.0)
        return (losses * weights).sum() * (1.0 / labelled.sum())
    if reweight == "per_task":
        per_task = mask.sum(axis=0)
        weights = mask / np.maximum(per_task, 1.0)[None, :]
        return (losses * weights).sum()
    raise ContractError(f"unknown reweight mode {reweight!r}")
