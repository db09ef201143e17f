"""Configuration dataclasses, named presets, and the ``key = value`` config file.

Config files hold one ``dotted.key = value`` per line; ``#`` starts a
comment. A ``preset`` line, wherever it appears, is applied first and the
remaining keys override it.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .tensor import ContractError


@dataclass
class EncoderConfig:
    image_size: tuple = (32, 32, 3)
    widths: tuple = (16, 32, 32)
    strides: tuple = (2, 2, 2)
    kernel: int = 3
    d: int = 32
    n_x: int = 2
    heads: int = 4

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.widths = tuple(int(v) for v in self.widths)
        self.strides = tuple(int(v) for v in self.strides)
        if self.d % self.heads:
            raise ContractError(f"encoder.d={self.d} must be divisible by encoder.heads={self.heads}")
        if self.d % 2:
            raise ContractError(f"encoder.d={self.d} must be even")
        if len(self.widths) != len(self.strides):
            raise ContractError("encoder.widths and encoder.strides need the same length")
        stride = 1
        for s in self.strides:
            stride *= s
        H, W, _ = self.image_size
        if H % stride or W % stride:
            raise ContractError(f"image size {H}x{W} is not divisible by the backbone stride {stride}")

    @property
    def grid(self) -> tuple:
        stride = 1
        for s in self.strides:
            stride *= s
        return self.image_size[0] // stride, self.image_size[1] // stride


@dataclass
class HeadConfig:
    n_t: int = 2
    n_d: int = 2
    heads: int = 4
    t_au: float = 1.0
    t_expr: float = 5.0
    sigma2_va: float = 1.0

    def __post_init__(self):
        if self.t_au <= 0 or self.t_expr <= 0 or self.sigma2_va <= 0:
            raise ContractError("temperatures and the VA variance must be positive")
        if self.n_d < 1:
            raise ContractError("head.n_d must be at least 1")


@dataclass
class OptimConfig:
    name: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.name not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.name!r}")
        if self.lr < 0:
            raise ContractError("optimizer.lr must be non-negative")


@dataclass
class LossConfig:
    reweight: str = "per_example"

    def __post_init__(self):
        if self.reweight not in ("per_example", "per_task"):
            raise ContractError(f"loss.reweight must be per_example or per_task, got {self.reweight!r}")


@dataclass
class TrainConfig:
    preset: str = "desk"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    batch_size: int = 8
    steps: int = 2000
    mixup: Optional[float] = None
    augment: bool = False
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError("steps must be at least 1")
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if self.mixup is not None and self.mixup <= 0:
            raise ContractError("mixup alpha must be positive (or off)")
        if self.encoder.d % self.head.heads:
            raise ContractError(f"encoder.d={self.encoder.d} must be divisible by head.heads={self.head.heads}")


def desk_preset() -> TrainConfig:
    return TrainConfig()


def paper_preset() -> TrainConfig:
    # 224x224x3 -> 7x7x2048 -> d=768; shape documentation only, far too slow to train here
    return TrainConfig(
        preset="paper",
        encoder=EncoderConfig(image_size=(224, 224, 3), widths=(64, 128, 256, 512, 2048),
                              strides=(2, 2, 2, 2, 2), d=768, n_x=2, heads=12),
        head=HeadConfig(n_t=2, n_d=4, heads=12, t_au=1.0, t_expr=5.0, sigma2_va=1.0),
    )


def gradcheck_preset() -> TrainConfig:
    """d=8, 2 heads, 2x2 patch grid, one token module, two dense layers per task."""
    return TrainConfig(
        preset="gradcheck",
        encoder=EncoderConfig(image_size=(8, 8, 3), widths=(4, 6), strides=(2, 2), d=8, n_x=1, heads=2),
        head=HeadConfig(n_t=1, n_d=2, heads=2),
        batch_size=4,
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset, "gradcheck": gradcheck_preset}


def preset(name: str) -> TrainConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _parse_scalar(raw: str, current):
    raw = raw.strip()
    low = raw.lower()
    if isinstance(current, bool):
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ContractError(f"not a boolean: {raw!r}")
    if isinstance(current, tuple):
        items = raw.strip("[]()").replace(" ", "").split(",")
        return tuple(int(v) for v in items if v)
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, str):
        return raw
    raise ContractError(f"cannot parse {raw!r}")


def set_value(cfg, key: str, raw: str):
    """Return a copy of ``cfg`` with dotted ``key`` set from the text ``raw``."""
    head, _, rest = key.partition(".")
    names = {f.name for f in dataclasses.fields(cfg)}
    if head not in names:
        raise ContractError(f"unknown config key {key!r}")
    current = getattr(cfg, head)
    if rest:
        if not dataclasses.is_dataclass(current):
            raise ContractError(f"unknown config key {key!r}")
        return dataclasses.replace(cfg, **{head: set_value(current, rest, raw)})
    if head == "mixup":
        value = None if raw.strip().lower() in ("off", "none", "0") else float(raw)
    elif dataclasses.is_dataclass(current):
        raise ContractError(f"config key {key!r} names a section, not a value")
    else:
        value = _parse_scalar(raw, current)
    return dataclasses.replace(cfg, **{head: value})


def parse_lines(lines) -> list:
    pairs = []
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def build_config(pairs, base: Optional[TrainConfig] = None) -> TrainConfig:
    pairs = list(pairs)
    cfg = base
    for k, v in pairs:
        if k == "preset":
            cfg = preset(v)
    cfg = cfg if cfg is not None else desk_preset()
    for k, v in pairs:
        if k != "preset":
            cfg = set_value(cfg, k, v)
    return cfg


def load_config(path, overrides=()) -> TrainConfig:
    """Read a config file, apply ``key=value`` overrides, then ``MTTOKEN_SEED``."""
    pairs = parse_lines(Path(path).read_text(encoding="utf-8").splitlines()) if path else []
    for item in overrides:
        k, sep, v = item.partition("=")
        if not sep:
            raise ContractError(f"override must look like key=value, got {item!r}")
        pairs.append((k.strip(), v.strip()))
    cfg = build_config(pairs)
    env_seed = os.environ.get("MTTOKEN_SEED")
    if env_seed:
        cfg = dataclasses.replace(cfg, seed=int(env_seed))
    return cfg


def dump_config(cfg: TrainConfig) -> str:
    """Deterministic ``key = value`` rendering (round-trips through ``build_config``)."""
    out = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, prefix + f.name + ".")
            elif isinstance(v, tuple):
                out.append(f"{prefix}{f.name} = {','.join(str(x) for x in v)}")
            elif v is None:
                out.append(f"{prefix}{f.name} = off")
            elif isinstance(v, bool):
                out.append(f"{prefix}{f.name} = {'true' if v else 'false'}")
            else:
                out.append(f"{prefix}{f.name} = {v!r}" if isinstance(v, float) else f"{prefix}{f.name} = {v}")

    walk(cfg, "")
    return "\n".join(out) + "\n"


def to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    return TrainConfig(
        encoder=EncoderConfig(**d.pop("encoder")),
        head=HeadConfig(**d.pop("head")),
        optimizer=OptimConfig(**d.pop("optimizer")),
        loss=LossConfig(**d.pop("loss")),
        **d,
    )


def to_json(cfg: TrainConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
