"""Windowed temporal means over per-frame raw outputs, plus the prediction-log CSV.

Each frame's window holds the present frames of the same video whose index
falls in the window range; missing indices add nothing to the sum or the
count. VA outputs and the AU/emotion logits are averaged, then activated.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .loss import N_AU, N_EXPR
from .taskhead import Predictions, RawOutputs, activate
from .tensor import ContractError


@dataclass
class FrameRecord:
    video_id: str
    frame_index: int
    raw: RawOutputs  # numpy fields, shapes [2], [12], [8]


@dataclass
class SmoothedRecord:
    video_id: str
    frame_index: int
    predictions: Predictions
    raw: Optional[RawOutputs] = None  # the averaged logits the predictions came from


def window_bounds(t: np.ndarray, window: int, align: str = "centered") -> tuple:
    """Inclusive frame-index range for each frame index in ``t``.

    centered: [t - S//2, t + S//2] for odd S, [t - S/2, t + S/2 - 1] for even S.
    trailing: [t - S + 1, t].
    """
    if window < 1:
        raise ContractError(f"window size must be at least 1, got {window}")
    if align == "centered":
        half = window // 2
        return t - half, t + (half if window % 2 else half - 1)
    if align == "trailing":
        return t - window + 1, t
    raise ContractError(f"unknown window alignment {align!r}")


def _flatten(raw: RawOutputs) -> np.ndarray:
    return np.concatenate([np.asarray(raw.v_hat, float).reshape(-1),
                           np.asarray(raw.u_au, float).reshape(-1),
                           np.asarray(raw.u_expr, float).reshape(-1)])


def _split(row: np.ndarray) -> RawOutputs:
    return RawOutputs(row[:2].copy(), row[2:2 + N_AU].copy(), row[2 + N_AU:].copy())


def smooth_values(frames: np.ndarray, values: np.ndarray, window: int, align: str = "centered") -> np.ndarray:
    """Window means for one video. ``frames``: distinct ints, ``values``: [n, k]."""
    order = np.argsort(frames, kind="stable")
    f = np.asarray(frames)[order]
    if np.any(np.diff(f) == 0):
        raise ContractError("duplicate frame index within a video")
    v = np.asarray(values, dtype=np.float64)[order]
    lo, _ = window_bounds(f, window, align)
    # one pass per window offset, vectorised over frames; sums run in frame order
    acc = np.zeros_like(v)
    count = np.zeros(len(f))
    for off in range(window):
        target = lo + off
        pos = np.minimum(np.searchsorted(f, target), len(f) - 1)
        hit = f[pos] == target
        acc[hit] += v[pos[hit]]
        count += hit
    means = acc / count[:, None]
    out = np.empty_like(means)
    out[order] = means
    return out


def smooth_stream(frames: Sequence[FrameRecord], window: int, t_au: float, t_expr: float,
                  align: str = "centered") -> list:
    """Smoothed, activated records in the same order as ``frames``."""
    if window < 1:
        raise ContractError(f"window size must be at least 1, got {window}")
    groups: "OrderedDict[str, list]" = OrderedDict()
    for pos, rec in enumerate(frames):
        groups.setdefault(rec.video_id, []).append(pos)
    out: list = [None] * len(frames)
    for video_id, positions in groups.items():
        idx = np.array([frames[p].frame_index for p in positions])
        vals = np.stack([_flatten(frames[p].raw) for p in positions])
        sm = smooth_values(idx, vals, window, align)
        raw = RawOutputs(sm[:, :2], sm[:, 2:2 + N_AU], sm[:, 2 + N_AU:])
        pred = activate(raw, t_au, t_expr)
        for j, p in enumerate(positions):
            out[p] = SmoothedRecord(
                video_id, int(idx[j]),
                Predictions(pred.v_hat[j].copy(), pred.a_hat[j].copy(), pred.e_hat[j].copy()),
                _split(sm[j]),
            )
    return out


# ---- prediction log ----

RAW_COLUMNS = ["video_id", "frame_index", "v", "a"] + \
    [f"u_au_{i}" for i in range(1, N_AU + 1)] + [f"u_expr_{i}" for i in range(1, N_EXPR + 1)]
PROB_COLUMNS = [f"a_hat_{i}" for i in range(1, N_AU + 1)] + [f"e_hat_{i}" for i in range(1, N_EXPR + 1)]


def _fmt(x: float) -> str:
    return f"{float(x):.9g}"


def write_predlog(path, records: Sequence) -> None:
    """FrameRecords give the raw schema; SmoothedRecords add probability columns."""
    smoothed = bool(records) and isinstance(records[0], SmoothedRecord)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS + (PROB_COLUMNS if smoothed else []))
        for r in records:
            raw = r.raw
            row = [r.video_id, int(r.frame_index)] + [_fmt(x) for x in _flatten(raw)]
            if smoothed:
                p = r.predictions
                row += [_fmt(x) for x in np.concatenate([p.a_hat, p.e_hat])]
            w.writerow(row)


def read_predlog(path) -> tuple:
    """Returns (frame records, probabilities [n, 20] or None)."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path}: empty prediction log")
    header, body = rows[0], rows[1:]
    if header[:len(RAW_COLUMNS)] != RAW_COLUMNS:
        raise ContractError(f"{path}: unexpected header")
    has_probs = header[len(RAW_COLUMNS):] == PROB_COLUMNS
    if not has_probs and len(header) != len(RAW_COLUMNS):
        raise ContractError(f"{path}: unexpected extra columns")
    frames, probs = [], []
    for n, row in enumerate(body, 2):
        if len(row) != len(header):
            raise ContractError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        vals = np.array([float(x) for x in row[2:len(RAW_COLUMNS)]])
        if not np.isfinite(vals).all():
            raise ContractError(f"{path}:{n}: non-finite value")
        frames.append(FrameRecord(row[0], int(row[1]), _split(vals)))
        if has_probs:
            probs.append([float(x) for x in row[len(RAW_COLUMNS):]])
    return frames, (np.array(probs).reshape(-1, N_AU + N_EXPR) if has_probs else None)
