"""Binary checkpoint format.

Layout (little-endian):
    magic b"MTTK" | u32 version
    u32 config length | config JSON (UTF-8, sorted keys)
    u32 parameter count
    per parameter: u16 name length | name | u8 ndim | u32 dims... | float32 payload

Parameters keep their model order. Values are stored as float32 and widened
to float64 on load, so load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .config import TrainConfig, from_dict, to_json
from .tensor import ContractError, Tensor

MAGIC = b"MTTK"
VERSION = 1


def to_bytes(params: Mapping[str, Tensor], cfg: TrainConfig) -> bytes:
    conf = to_json(cfg).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(conf)), conf,
             struct.pack("<I", len(params))]
    for name, p in params.items():
        raw = name.encode("utf-8")
        arr = np.asarray(p.data, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> tuple:
    try:
        return _parse(blob)
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ContractError(f"corrupt checkpoint: {exc}") from None


def _parse(blob: bytes) -> tuple:
    if blob[:4] != MAGIC:
        raise ContractError("not a checkpoint file (bad magic)")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack_from("<I", blob, off)
    off += 4
    cfg = from_dict(json.loads(blob[off:off + n].decode("utf-8")))
    off += n
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + ln].decode("utf-8")
        off += ln
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(shape)
        off += 4 * size
        if name in params:
            raise ContractError(f"parameter {name!r} appears twice")
        params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
    if off != len(blob):
        raise ContractError("trailing bytes after the last parameter")
    return params, cfg


def save_checkpoint(path, params: Mapping[str, Tensor], cfg: TrainConfig) -> None:
    Path(path).write_bytes(to_bytes(params, cfg))


def load_checkpoint(path) -> tuple:
    """Returns (params, config)."""
    return from_bytes(Path(path).read_bytes())
