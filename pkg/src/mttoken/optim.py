"""SGD and Adam over a ``{name: Tensor}`` parameter mapping (updates ``.data`` in place)."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .config import OptimConfig


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Mapping, grads: Mapping[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads.get(name)
            if g is not None:
                p.data = p.data - self.lr * g


class Adam:
    """Bias-corrected Adam; moments are kept per parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: Mapping, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: OptimConfig):
    if cfg.name == "sgd":
        return SGD(cfg.lr)
    return Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
