"""Image -> patch grid: conv stack, pointwise projection to d, position codes, encoder blocks."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import tensor as T
from .attention import encoder_block, init_encoder_block, scope, sincos_positional_encoding, uniform
from .config import EncoderConfig
from .tensor import ShapeError, Tensor


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder.") -> dict:
    p = {}
    c_in = cfg.image_size[2]
    for i, c_out in enumerate(cfg.widths):
        fan_in = cfg.kernel * cfg.kernel * c_in
        p[f"{prefix}backbone.{i}.w"] = uniform(rng, (cfg.kernel, cfg.kernel, c_in, c_out), 1.0 / math.sqrt(fan_in))
        p[f"{prefix}backbone.{i}.b"] = Tensor(np.zeros(c_out), requires_grad=True)
        c_in = c_out
    p[prefix + "proj"] = uniform(rng, (c_in, cfg.d), 1.0 / math.sqrt(c_in))
    for j in range(cfg.n_x):
        p.update(init_encoder_block(rng, cfg.d, f"{prefix}blocks.{j}."))
    return p


def _batched(images) -> tuple:
    x = T.as_tensor(images)
    if x.ndim == 3:
        return x.reshape(1, *x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected an H x W x C image or a batch of them, got shape {x.shape}")
    return x, False


def conv_backbone(images, params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """Stride-s conv + relu per stage. [B, H, W, C] -> [B, h', w', c_out]."""
    x, single = _batched(images)
    if x.shape[1:] != tuple(cfg.image_size):
        raise ShapeError(f"image shape {x.shape[1:]} does not match configured {cfg.image_size}")
    pad = cfg.kernel // 2
    for i, s in enumerate(cfg.strides):
        x = T.relu(T.conv2d(x, params[f"backbone.{i}.w"], params[f"backbone.{i}.b"], stride=s, pad=pad))
    return x.reshape(x.shape[1:]) if single else x


def project_patches(features: Tensor, proj: Tensor) -> Tensor:
    """1x1 convolution: the same linear map applied to every patch; grid flattened row-major.

    [..., h', w', c_out] -> [..., h'*w', d]
    """
    *lead, h, w, c = features.shape
    if proj.ndim != 2 or proj.shape[0] != c:
        raise ShapeError(f"projection {proj.shape} does not fit patch features with {c} channels")
    return features.reshape(*lead, h * w, c) @ proj


def encode_patches(images, params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """Encoder output with the grid flattened: [B, h'*w', d]."""
    x, _ = _batched(images)
    feats = conv_backbone(x, params, cfg)
    h, w = feats.shape[1:3]
    z = project_patches(feats, params["proj"]) + sincos_positional_encoding(h, w, cfg.d)
    for j in range(cfg.n_x):
        z = encoder_block(z, scope(params, f"blocks.{j}."), cfg.heads)
    return z


def encode_image(images, params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """PatchGrid for one image ([h', w', d]) or a batch ([B, h', w', d])."""
    x, single = _batched(images)
    z = encode_patches(x, params, cfg)
    h, w = cfg.grid
    grid = z.reshape(z.shape[0], h, w, cfg.d)
    return grid.reshape(h, w, cfg.d) if single else grid
