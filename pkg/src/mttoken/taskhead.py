"""Task tokens, token modules, per-task dense stacks, and the full model forward pass.

Token rows are always ordered (VA, AU, EXPR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .attention import (
    init_attention,
    init_layer_norm,
    layer_norm,
    multi_head_cross_attention,
    multi_head_self_attention,
    scope,
    uniform,
)
from .config import HeadConfig, TrainConfig
from .encoder import encode_patches, init_encoder
from .tensor import ContractError, ShapeError, Tensor

TASKS = ("va", "au", "expr")
OUT_DIMS = {"va": 2, "au": 12, "expr": 8}


@dataclass
class RawOutputs:
    """Pre-activation outputs; fields are Tensors during training, arrays elsewhere.

    Shapes are [2], [12], [8] for one example or [B, 2], [B, 12], [B, 8].
    """

    v_hat: object
    u_au: object
    u_expr: object

    def numpy(self) -> "RawOutputs":
        return RawOutputs(*(np.asarray(T.as_tensor(v).data) for v in (self.v_hat, self.u_au, self.u_expr)))


@dataclass
class Predictions:
    v_hat: np.ndarray
    a_hat: np.ndarray
    e_hat: np.ndarray


def init_head(d: int, cfg: HeadConfig, rng: np.random.Generator, prefix: str = "head.") -> dict:
    p = {prefix + "tokens": uniform(rng, (3, d), 1.0 / math.sqrt(d))}
    for i in range(cfg.n_t):
        m = f"{prefix}modules.{i}."
        p.update(init_layer_norm(d, m + "ln_self."))
        p.update(init_attention(rng, d, m + "self."))
        p.update(init_layer_norm(d, m + "ln_cross."))
        p.update(init_attention(rng, d, m + "cross."))
    for task in TASKS:
        for j in range(cfg.n_d):
            out = OUT_DIMS[task] if j == cfg.n_d - 1 else d
            p[f"{prefix}mlp.{task}.{j}.w"] = uniform(rng, (d, out), 1.0 / math.sqrt(d))
            p[f"{prefix}mlp.{task}.{j}.b"] = Tensor(np.zeros(out), requires_grad=True)
    return p


def init_model(cfg: TrainConfig, seed: int | None = None) -> dict:
    """All model parameters, keyed by stable dotted names, in a fixed order."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    p = init_encoder(cfg.encoder, rng)
    p.update(init_head(cfg.encoder.d, cfg.head, rng))
    return p


def token_module(tokens: Tensor, patches: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    """Token self-attention, then token -> patch cross-attention, both residual and pre-norm.

    tokens: [..., 3, d]; patches: [..., n, d] (flattened grid).
    """
    if tokens.shape[-1] != patches.shape[-1]:
        raise ShapeError(f"tokens {tokens.shape} and patches {patches.shape} disagree on width")
    t = tokens + multi_head_self_attention(layer_norm(tokens, scope(params, "ln_self.")),
                                           scope(params, "self."), heads)
    return t + multi_head_cross_attention(layer_norm(t, scope(params, "ln_cross.")), patches,
                                          scope(params, "cross."), heads)


def task_mlp(token: Tensor, layers: Mapping[str, Tensor], n_d: int) -> Tensor:
    """(n_d - 1) relu dense layers followed by one linear layer."""
    if n_d < 1:
        raise ContractError("a task head needs at least one dense layer")
    single = token.ndim == 1
    x = token.reshape(1, -1) if single else token
    for j in range(n_d):
        w, b = layers[f"{j}.w"], layers[f"{j}.b"]
        if x.shape[-1] != w.shape[0]:
            raise ShapeError(f"dense layer {j}: input {x.shape} does not fit weight {w.shape}")
        x = x @ w + b
        if j < n_d - 1:
            x = T.relu(x)
    return x.reshape(-1) if single else x


def forward(images, params: Mapping[str, Tensor], cfg: TrainConfig) -> RawOutputs:
    """Images [H, W, C] or [B, H, W, C] -> raw task outputs."""
    x = T.as_tensor(images)
    single = x.ndim == 3
    if single:
        x = x.reshape(1, *x.shape)
    patches = encode_patches(x, scope(params, "encoder."), cfg.encoder)
    B, d = x.shape[0], cfg.encoder.d
    tokens = T.broadcast_to(params["head.tokens"], (B, 3, d))
    for i in range(cfg.head.n_t):
        tokens = token_module(tokens, patches, scope(params, f"head.modules.{i}."), cfg.head.heads)
    outs = []
    for row, task in enumerate(TASKS):
        y = task_mlp(tokens[:, row, :], scope(params, f"head.mlp.{task}."), cfg.head.n_d)
        outs.append(y.reshape(OUT_DIMS[task]) if single else y)
    return RawOutputs(*outs)


def activate(raw: RawOutputs, t_au: float, t_expr: float) -> Predictions:
    """Temperature-scaled sigmoid for AUs and softmax for emotions; VA passes through."""
    if t_au <= 0 or t_expr <= 0:
        raise ContractError(f"temperatures must be positive, got T_au={t_au}, T_expr={t_expr}")
    u_au = T.as_tensor(raw.u_au)
    u_expr = T.as_tensor(raw.u_expr)
    return Predictions(
        v_hat=np.array(T.as_tensor(raw.v_hat).data),
        a_hat=T.sigmoid(u_au / t_au).data,
        e_hat=T.softmax(u_expr / t_expr, axis=-1).data,
    )
