"""Finite-difference check of the full model + loss gradient, per parameter tensor.

Error measure for a tensor with analytic gradient a and numeric gradient n:

    max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|)

i.e. the worst coordinate error relative to the tensor's gradient scale.
"""

from __future__ import annotations

import time
from typing import Mapping

import numpy as np

from .config import TrainConfig, gradcheck_preset
from .data import Batch
from .loss import TargetBatch, total_loss
from .taskhead import forward, init_model
from .tensor import GradientTape, Tensor

TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    diff = np.abs(analytic - numeric).max(initial=0.0)
    return float(diff / scale) if scale > 0 else float(diff)


def mixed_presence_batch(cfg: TrainConfig, n: int = 4, seed: int = 0) -> Batch:
    """Random images and labels; every task is present somewhere and missing somewhere."""
    rng = np.random.default_rng(seed)
    H, W, C = cfg.encoder.image_size
    images = rng.random((n, H, W, C))
    va = rng.uniform(-1, 1, size=(n, 2))
    au = (rng.random((n, 12)) < 0.5).astype(float)
    expr = np.eye(8)[rng.integers(8, size=n)]
    base = np.array([[1, 1, 1], [0, 0, 1], [1, 0, 0], [0, 1, 1], [0, 0, 0], [1, 1, 0]], dtype=bool)
    mask = base[np.arange(n) % len(base)]
    va[~mask[:, 0]] = 0.0
    au[~mask[:, 1]] = 0.0
    expr[~mask[:, 2]] = 0.0
    return Batch(images, TargetBatch(va, au, expr, mask))


def model_loss(params: Mapping[str, Tensor], batch: Batch, cfg: TrainConfig) -> Tensor:
    raw = forward(batch.images, params, cfg)
    return total_loss(raw, batch.targets, cfg.head, cfg.loss.reweight)


def run_gradcheck(cfg: TrainConfig | None = None, batch: Batch | None = None, eps: float = 1e-5,
                  seed: int = 0) -> dict:
    """Returns {parameter name: relative error}."""
    cfg = gradcheck_preset() if cfg is None else cfg
    batch = mixed_presence_batch(cfg, seed=seed) if batch is None else batch
    params = init_model(cfg, seed=seed)
    names = list(params)
    with GradientTape() as tape:
        loss = model_loss(params, batch, cfg)
    analytic = dict(zip(names, tape.gradient(loss, [params[k] for k in names])))

    errors = {}
    for name in names:
        p = params[name]
        flat = p.data.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            hi = model_loss(params, batch, cfg).item()
            flat[i] = old - eps
            lo = model_loss(params, batch, cfg).item()
            flat[i] = old
            numeric[i] = (hi - lo) / (2 * eps)
        errors[name] = relative_error(analytic[name].reshape(-1), numeric)
    return errors


def main(scale: str = "desk", out=print) -> int:
    """Print one line per parameter tensor; non-zero exit if any error exceeds the tolerance."""
    if scale != "desk":
        raise ValueError(f"unknown gradcheck scale {scale!r}")
    t0 = time.perf_counter()
    errors = run_gradcheck()
    worst = max(errors.values())
    for name, err in errors.items():
        out(f"{name:40s} {err:.3e} {'ok' if err < TOLERANCE else 'FAIL'}")
    out(f"max relative error {worst:.3e} over {len(errors)} tensors in {time.perf_counter() - t0:.1f}s")
    return 0 if worst < TOLERANCE else 1
