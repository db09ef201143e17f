"""Synthetic partially-labelled video datasets, the manifest format, and augmentation.

Seed splitting: every (master seed, video_id, frame_index) maps to a 63-bit
``sub_seed`` via BLAKE2b (see ``sub_seed``). The sub-seed alone determines the
rendered image and its latent labels, so a manifest line
``"image": "synthetic:<sub_seed>"`` is enough to regenerate the pixels.
Label dropping and frame dropping use separate streams of the same sub-seed.

Synthetic image layout on a 4x4 block grid:
  channel 0  blocks 0..11 are bright when the matching AU is on
  channel 1  block ``expr`` (0..7) is bright, the other seven dim
  channel 2  top-left quadrant encodes valence, bottom-right arousal
Uniform noise of +-0.05 is added and the result clipped to [0, 1].
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .loss import N_AU, N_EXPR, MultiTaskTarget, TargetBatch, collate_targets
from .tensor import ContractError


@dataclass
class SyntheticSpec:
    n_videos: int = 4
    frames_per_video: int = 8
    image_size: tuple = (32, 32, 3)
    missing_va: float = 0.0
    missing_au: float = 0.0
    missing_expr: float = 0.0
    frame_drop: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        for name in ("missing_va", "missing_au", "missing_expr", "frame_drop"):
            r = getattr(self, name)
            if not 0.0 <= r <= 1.0:
                raise ContractError(f"{name}={r} is not a rate in [0, 1]")


@dataclass
class DatasetExample:
    video_id: str
    frame_index: int
    image: str  # path to a .npy array, or "synthetic:<sub_seed>"
    target: MultiTaskTarget = field(default_factory=MultiTaskTarget)


@dataclass
class Batch:
    images: np.ndarray  # [B, H, W, C]
    targets: TargetBatch

    def __len__(self) -> int:
        return len(self.images)


def sub_seed(master: int, video_id: str, frame_index: int) -> int:
    digest = hashlib.blake2b(f"{master}/{video_id}/{frame_index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def latent_labels(seed: int) -> tuple:
    rng = np.random.default_rng([seed, 0])
    va = rng.uniform(-1.0, 1.0, size=2)
    au = (rng.random(N_AU) < 0.5).astype(int)
    expr = int(rng.integers(N_EXPR))
    return va, au, expr


def render_synthetic(seed: int, image_size=(32, 32, 3)) -> np.ndarray:
    H, W, C = image_size
    if H % 4 or W % 4:
        raise ContractError(f"synthetic images need sides divisible by 4, got {H}x{W}")
    va, au, expr = latent_labels(seed)
    bh, bw = H // 4, W // 4
    planes = np.full((3, 4, 4), 0.5)
    planes[0].flat[:N_AU] = np.where(au > 0, 0.8, 0.2)
    planes[1] = 0.1
    planes[1].flat[expr] = 0.9
    planes[2, :2, :2] = (va[0] + 1.0) / 2.0
    planes[2, 2:, 2:] = (va[1] + 1.0) / 2.0
    img = np.zeros((H, W, C))
    for k in range(3):
        img[:, :, k % C] += np.kron(planes[k], np.ones((bh, bw)))
    if C < 3:
        img /= math.ceil(3 / C)
    noise = np.random.default_rng([seed, 1]).uniform(-0.05, 0.05, size=img.shape)
    return np.clip(img + noise, 0.0, 1.0)


def generate_synthetic(spec: SyntheticSpec) -> list:
    if spec.n_videos < 1 or spec.frames_per_video < 1:
        raise ContractError("synthetic dataset needs at least one video and one frame per video")
    out = []
    rates = (spec.missing_va, spec.missing_au, spec.missing_expr)
    for v in range(spec.n_videos):
        video_id = f"video{v:03d}"
        for f in range(spec.frames_per_video):
            s = sub_seed(spec.seed, video_id, f)
            draws = np.random.default_rng([s, 2]).random(4)
            if draws[3] < spec.frame_drop:
                continue
            va, au, expr = latent_labels(s)
            target = MultiTaskTarget(
                va=None if draws[0] < rates[0] else [float(x) for x in va],
                au=None if draws[1] < rates[1] else [int(x) for x in au],
                expr=None if draws[2] < rates[2] else expr,
            )
            out.append(DatasetExample(video_id, f, f"synthetic:{s}", target))
    return out


# ---- manifest ----

def example_to_json(ex: DatasetExample) -> str:
    t = ex.target
    rec = {
        "video_id": ex.video_id,
        "frame_index": int(ex.frame_index),
        "image": ex.image,
        "va": None if t.va is None else [float(x) for x in t.va],
        "au": None if t.au is None else [int(x) for x in t.au],
        "expr": None if t.expr is None else int(t.expr),
    }
    return json.dumps(rec)


def example_from_json(line: str) -> DatasetExample:
    rec = json.loads(line)
    va, au, expr = rec.get("va"), rec.get("au"), rec.get("expr")
    if va is not None and len(va) != 2:
        raise ContractError(f"va needs two values, got {va!r}")
    if au is not None and (len(au) != N_AU or any(a not in (0, 1) for a in au)):
        raise ContractError(f"au needs {N_AU} values in {{0, 1}}, got {au!r}")
    if expr is not None and not (isinstance(expr, int) and 0 <= expr < N_EXPR):
        raise ContractError(f"expr must be an integer in 0..{N_EXPR - 1}, got {expr!r}")
    return DatasetExample(str(rec["video_id"]), int(rec["frame_index"]), str(rec["image"]),
                          MultiTaskTarget(va=va, au=au, expr=expr))


def write_manifest(path, examples: Sequence[DatasetExample]) -> None:
    seen = set()
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            key = (ex.video_id, ex.frame_index)
            if key in seen:
                raise ContractError(f"duplicate frame {key} in manifest")
            seen.add(key)
            fh.write(example_to_json(ex) + "\n")


def read_manifest(path) -> list:
    out, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            ex = example_from_json(line)
            key = (ex.video_id, ex.frame_index)
            if key in seen:
                raise ContractError(f"line {n}: duplicate frame {key}")
            seen.add(key)
            out.append(ex)
    return out


def load_image(ref: str, image_size, root=None) -> np.ndarray:
    """Regenerate a synthetic image or load a raw ``.npy`` array (H x W x C, values in [0, 1])."""
    if ref.startswith("synthetic:"):
        return render_synthetic(int(ref.split(":", 1)[1]), image_size)
    p = Path(ref)
    if root is not None and not p.is_absolute():
        p = Path(root) / p
    img = np.load(p).astype(np.float64)
    if img.shape != tuple(image_size):
        raise ContractError(f"{p}: image shape {img.shape} does not match {tuple(image_size)}")
    return img


def load_images(examples: Sequence[DatasetExample], image_size, root=None) -> np.ndarray:
    return np.stack([load_image(ex.image, image_size, root) for ex in examples])


def make_batch(examples: Sequence[DatasetExample], images: np.ndarray) -> Batch:
    return Batch(np.asarray(images, dtype=np.float64), collate_targets([ex.target for ex in examples]))


# ---- augmentation ----

def affine_transform(image: np.ndarray, angle_deg: float = 0.0, shift=(0.0, 0.0), zoom: float = 1.0) -> np.ndarray:
    """Rotate/translate/zoom about the image centre; bilinear sampling, zeros outside.

    ``shift`` is (rows, cols) as a fraction of the side length.
    """
    H, W = image.shape[:2]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    th = math.radians(angle_deg)
    c, s = math.cos(th), math.sin(th)
    yy, xx = np.meshgrid(np.arange(H, dtype=np.float64), np.arange(W, dtype=np.float64), indexing="ij")
    dy = (yy - cy - shift[0] * H) / zoom
    dx = (xx - cx - shift[1] * W) / zoom
    # inverse rotation maps output pixels back onto the source grid
    sy = c * dy - s * dx + cy
    sx = s * dy + c * dx + cx
    y0, x0 = np.floor(sy).astype(int), np.floor(sx).astype(int)
    wy, wx = sy - y0, sx - x0
    out = np.zeros(image.shape)
    for oy, ox, w in ((0, 0, (1 - wy) * (1 - wx)), (1, 0, wy * (1 - wx)),
                      (0, 1, (1 - wy) * wx), (1, 1, wy * wx)):
        yi, xi = y0 + oy, x0 + ox
        ok = (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W) & (w > 0)
        vals = image[np.clip(yi, 0, H - 1), np.clip(xi, 0, W - 1)]
        out += np.where(ok, w, 0.0)[..., None] * vals if image.ndim == 3 else np.where(ok, w * vals, 0.0)
    return out


def affine_augment(image: np.ndarray, rng: np.random.Generator,
                   max_angle: float = 15.0, max_shift: float = 0.1, zoom_range=(0.9, 1.1)) -> np.ndarray:
    angle = rng.uniform(-max_angle, max_angle)
    shift = rng.uniform(-max_shift, max_shift, size=2)
    zoom = rng.uniform(*zoom_range)
    return np.clip(affine_transform(image, angle, shift, zoom), 0.0, 1.0)


def mixup_with(batch: Batch, perm: np.ndarray, lam: np.ndarray) -> Batch:
    """Mix example i with example perm[i] using weight lam[i] on example i.

    A task labelled in both partners gets the same convex combination as the
    images. A task labelled in only one partner keeps that label unmixed,
    provided that partner has non-zero weight in the mix. Unlabelled in both
    stays unlabelled.
    """
    perm = np.asarray(perm)
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if lam.size == 1:
        lam = np.full(len(batch), lam[0])
    if lam.shape != (len(batch),) or ((lam < 0) | (lam > 1)).any():
        raise ContractError("mixing weights must be one value in [0, 1] per example")
    images = lam[:, None, None, None] * batch.images + (1.0 - lam)[:, None, None, None] * batch.images[perm]
    t, u = batch.targets, batch.targets.take(perm)
    m_self = t.mask & (lam > 0)[:, None]
    m_other = u.mask & (lam < 1)[:, None]
    both = m_self & m_other

    def mix(a, b, col):
        l = lam[:, None]
        out = np.where(both[:, col:col + 1], l * a + (1.0 - l) * b, 0.0)
        out = np.where((m_self & ~m_other)[:, col:col + 1], a, out)
        return np.where((m_other & ~m_self)[:, col:col + 1], b, out)

    mixed = TargetBatch(mix(t.va, u.va, 0), mix(t.au, u.au, 1), mix(t.expr, u.expr, 2), m_self | m_other)
    return Batch(np.clip(images, 0.0, 1.0), mixed)


def mixup_batch(batch: Batch, alpha: float, rng: np.random.Generator) -> Batch:
    """Pair examples through a random permutation; one Beta(alpha, alpha) weight per pair."""
    if alpha <= 0:
        raise ContractError("mixup alpha must be positive")
    if len(batch) < 2:
        raise ContractError("mixup needs at least two examples")
    perm = rng.permutation(len(batch))
    lam = rng.beta(alpha, alpha, size=len(batch))
    return mixup_with(batch, perm, lam)


def synthetic_spec_from_pairs(pairs) -> SyntheticSpec:
    spec = SyntheticSpec()
    for k, v in pairs:
        if k not in SyntheticSpec.__dataclass_fields__:
            raise ContractError(f"unknown synthetic spec key {k!r}")
        cur = getattr(spec, k)
        if isinstance(cur, tuple):
            val = tuple(int(x) for x in v.strip("[]()").replace(" ", "").split(",") if x)
        elif isinstance(cur, int):
            val = int(v)
        else:
            val = float(v)
        spec = replace(spec, **{k: val})
    return spec
