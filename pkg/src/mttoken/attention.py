"""Multi-head attention, pre-norm encoder blocks and sin/cos position codes.

Parameters live in flat ``{name: Tensor}`` mappings. An attention mapping
holds ``wq``, ``wk``, ``wv`` (d x d, the h per-head d x d_h projections laid
side by side) and ``wo`` (d x d). Row-vector convention: ``x @ W``.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from . import tensor as T
from .tensor import ContractError, ShapeError, Tensor


def uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_attention(rng: np.random.Generator, d: int, prefix: str = "") -> dict:
    bound = 1.0 / math.sqrt(d)
    return {prefix + k: uniform(rng, (d, d), bound) for k in ("wq", "wk", "wv", "wo")}


def init_layer_norm(d: int, prefix: str = "") -> dict:
    return {
        prefix + "gamma": Tensor(np.ones(d), requires_grad=True),
        prefix + "beta": Tensor(np.zeros(d), requires_grad=True),
    }


def init_encoder_block(rng: np.random.Generator, d: int, prefix: str = "", d_ff: int | None = None) -> dict:
    d_ff = 4 * d if d_ff is None else d_ff
    p = {}
    p.update(init_layer_norm(d, prefix + "ln1."))
    p.update(init_attention(rng, d, prefix + "attn."))
    p.update(init_layer_norm(d, prefix + "ln2."))
    p[prefix + "mlp.w1"] = uniform(rng, (d, d_ff), 1.0 / math.sqrt(d))
    p[prefix + "mlp.w2"] = uniform(rng, (d_ff, d), 1.0 / math.sqrt(d_ff))
    return p


def scope(params: Mapping[str, Tensor], prefix: str) -> dict:
    """Sub-mapping of ``params`` under ``prefix`` with the prefix stripped."""
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def sincos_positional_encoding(h_patches: int, w_patches: int, d: int) -> Tensor:
    """Row ``pos`` (row-major patch index) holds sin/cos pairs at frequencies 10000^(-2i/d)."""
    if d % 2:
        raise ContractError(f"positional encoding needs an even width, got d={d}")
    pos = np.arange(h_patches * w_patches, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((h_patches * w_patches, d))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return Tensor(pe)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return x.reshape(*lead, n, heads, d // heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, h * dh)


def _check(params: Mapping[str, Tensor], d: int, heads: int) -> None:
    if heads < 1 or d % heads:
        raise ContractError(f"model width {d} is not divisible by {heads} heads")
    for k in ("wq", "wk", "wv", "wo"):
        if params[k].shape != (d, d):
            raise ShapeError(f"attention weight {k} has shape {params[k].shape}, expected {(d, d)}")


def attention_weights(queries: Tensor, context: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    """Softmax attention maps, shape [..., heads, t, n]."""
    d = queries.shape[-1]
    _check(params, d, heads)
    q = _split_heads(queries @ params["wq"], heads)
    k = _split_heads(context @ params["wk"], heads)
    scores = (q @ k.T) * (1.0 / math.sqrt(d // heads))
    return T.softmax(scores, axis=-1)


def multi_head_attention(queries: Tensor, context: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    if queries.shape[-1] != context.shape[-1]:
        raise ShapeError(f"query width {queries.shape} does not match context {context.shape}")
    w = attention_weights(queries, context, params, heads)
    v = _split_heads(context @ params["wv"], heads)
    return _merge_heads(w @ v) @ params["wo"]


def multi_head_self_attention(x: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    return multi_head_attention(x, x, params, heads)


def multi_head_cross_attention(queries: Tensor, context: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    """Rows of ``queries`` attend over rows of ``context``; output has one row per query."""
    return multi_head_attention(queries, context, params, heads)


def layer_norm(x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return T.layer_norm(x, params["gamma"], params["beta"])


def encoder_block(x: Tensor, params: Mapping[str, Tensor], heads: int) -> Tensor:
    """Pre-norm transformer layer: x + MHSA(LN(x)), then + MLP(LN(.)) with a relu hidden layer."""
    h = x + multi_head_self_attention(layer_norm(x, scope(params, "ln1.")), scope(params, "attn."), heads)
    z = layer_norm(h, scope(params, "ln2."))
    return h + T.relu(z @ params["mlp.w1"]) @ params["mlp.w2"]
