"""Training step, training loop, and batched inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import TrainConfig
from .data import Batch, DatasetExample, affine_augment, load_images, make_batch, mixup_batch
from .loss import total_loss
from .optim import make_optimizer
from .smoothing import FrameRecord
from .taskhead import RawOutputs, forward, init_model
from .tensor import GradientTape, Tensor

log = logging.getLogger(__name__)


def loss_and_grads(params: Mapping[str, Tensor], batch: Batch, cfg: TrainConfig) -> tuple:
    """(loss value, {name: gradient array}) for one batch."""
    with GradientTape() as tape:
        raw = forward(batch.images, params, cfg)
        loss = total_loss(raw, batch.targets, cfg.head, cfg.loss.reweight)
    names = list(params)
    grads = tape.gradient(loss, [params[n] for n in names])
    return loss.item(), dict(zip(names, grads))


def train_step(params: Mapping[str, Tensor], batch: Batch, optimizer, cfg: TrainConfig) -> Optional[float]:
    """One forward/backward/update. Returns the pre-update loss, or None when the batch has no labels."""
    if not np.asarray(batch.targets.mask).any():
        log.warning("skipping a batch with no labels")
        return None
    value, grads = loss_and_grads(params, batch, cfg)
    optimizer.step(params, grads)
    return value


@dataclass
class TrainResult:
    params: dict
    losses: list = field(default_factory=list)  # (step, loss) for every step that updated


def _augment(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return np.stack([affine_augment(img, rng) for img in images])


def train_loop(cfg: TrainConfig, examples: Sequence[DatasetExample], images: Optional[np.ndarray] = None,
               root=None) -> TrainResult:
    """Run ``cfg.steps`` updates over shuffled epochs of ``examples``.

    Everything random (init, shuffling, augmentation, MixUp) derives from
    ``cfg.seed``; the same config and data give the same parameters.
    """
    if not examples:
        raise ValueError("training needs at least one example")
    if images is None:
        images = load_images(examples, cfg.encoder.image_size, root)
    full = make_batch(examples, images)
    params = init_model(cfg)
    opt = make_optimizer(cfg.optimizer)
    rng = np.random.default_rng([cfg.seed, 1])
    aug_rng = np.random.default_rng([cfg.seed, 2])
    n, bs = len(examples), min(cfg.batch_size, len(examples))
    order, cursor = rng.permutation(n), 0
    result = TrainResult(params)
    for step in range(1, cfg.steps + 1):
        if cursor + bs > n:
            order, cursor = rng.permutation(n), 0
        idx = order[cursor:cursor + bs]
        cursor += bs
        batch = Batch(full.images[idx], full.targets.take(idx))
        if cfg.augment:
            batch = Batch(_augment(batch.images, aug_rng), batch.targets)
        if cfg.mixup is not None and len(batch) >= 2:
            batch = mixup_batch(batch, cfg.mixup, aug_rng)
        value = train_step(params, batch, opt, cfg)
        if value is None:
            continue
        result.losses.append((step, value))
        if cfg.log_every and (step % cfg.log_every == 0 or step == 1):
            log.info("step %d loss %.6f", step, value)
    return result


def predict_raw(params: Mapping[str, Tensor], images: np.ndarray, cfg: TrainConfig, batch_size: int = 64) -> RawOutputs:
    """Raw outputs for a stack of images, no tape."""
    outs = []
    for s in range(0, len(images), batch_size):
        outs.append(forward(images[s:s + batch_size], params, cfg).numpy())
    return RawOutputs(*(np.concatenate([getattr(o, f) for o in outs]) for f in ("v_hat", "u_au", "u_expr")))


def predict_records(params: Mapping[str, Tensor], examples: Sequence[DatasetExample], cfg: TrainConfig,
                    images: Optional[np.ndarray] = None, root=None) -> list:
    if images is None:
        images = load_images(examples, cfg.encoder.image_size, root)
    raw = predict_raw(params, images, cfg)
    return [FrameRecord(ex.video_id, int(ex.frame_index),
                        RawOutputs(raw.v_hat[i], raw.u_au[i], raw.u_expr[i]))
            for i, ex in enumerate(examples)]
