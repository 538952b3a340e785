"""Parameter updates: SGD and Adam (bias-corrected)."""
from __future__ import annotations

import numpy as np

from ..errors import ModkitError
from .graph import ModelGraph

OPTIMIZERS = ("sgd", "adam")


class MissingGradientError(ModkitError, RuntimeError):
    """A parameter had no gradient when the optimizer stepped."""


class SGD:
    """Plain gradient descent, kept for ablation."""

    kind = "sgd"

    def __init__(self, lr: float = 1e-3):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.step_count = 0

    def step(self, model: ModelGraph):
        self.step_count += 1
        for i, name, t in model.parameters():
            if t.grad is None:
                raise MissingGradientError(f"layer {i} param {name!r} has no grad")
            t.data -= t.data.dtype.type(self.lr) * t.grad
        if model.masks:
            model.apply_masks()


class Adam:
    """Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8)."""

    kind = "adam"

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self._m: dict[tuple, np.ndarray] = {}
        self._v: dict[tuple, np.ndarray] = {}

    def step(self, model: ModelGraph):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for i, name, p in model.parameters():
            if p.grad is None:
                raise MissingGradientError(f"layer {i} param {name!r} has no grad")
            key = (i, name)
            g = p.grad
            m = self._m.get(key)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            else:
                v = self._v[key]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[key], self._v[key] = m, v
            update = (self.lr * (m / bc1)) / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.data.dtype)
        if model.masks:
            model.apply_masks()


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}, expected one of {OPTIMIZERS}")
