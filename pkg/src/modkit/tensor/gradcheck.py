"""Central finite-difference verification of tape gradients.

Checks run in float64 with h = 1e-4 and compare against reverse-mode
gradients using rel = |fd - ad| / max(|fd|, |ad|, 1). Large tensors are
checked on a seeded coordinate subsample; small ones exhaustively.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Tensor, backward

FD_STEP = 1e-4
FD_TOL = 1e-6


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    worst: str = ""
    checked: int = 0
    failures: list = field(default_factory=list)

    def ok(self, tol: float = FD_TOL) -> bool:
        return self.max_rel_err <= tol


def _coords(size: int, max_coords: int, rng: np.random.Generator) -> np.ndarray:
    if size <= max_coords:
        return np.arange(size)
    return rng.choice(size, size=max_coords, replace=False)


def check_gradients(fn, tensors, *, h: float = FD_STEP, tol: float = FD_TOL,
                    max_coords: int = 24, seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of scalar ``fn(*tensors)`` with central differences.

    Every tensor in ``tensors`` must be float64 and is checked in place;
    ``fn`` must be deterministic (reseed any rng it uses per call).
    """
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("gradient checks run in float64; convert inputs first")
        t.requires_grad = True
        t.zero_grad()

    loss = fn(*tensors)
    backward(loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for ti, t in enumerate(tensors):
        if t.grad is None:
            raise ValueError(f"tensor {ti} received no gradient")
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        for c in _coords(flat.size, max_coords, rng):
            orig = flat[c]
            flat[c] = orig + h
            fp = float(fn(*tensors).data)
            flat[c] = orig - h
            fm = float(fn(*tensors).data)
            flat[c] = orig
            fd = (fp - fm) / (2.0 * h)
            ad = float(gflat[c])
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1.0)
            report.checked += 1
            if rel > report.max_rel_err:
                report.max_rel_err = rel
                report.worst = f"tensor {ti} coord {int(c)}: fd={fd:.3e} ad={ad:.3e}"
            if rel > tol:
                report.failures.append((ti, int(c), fd, ad, rel))
    return report


def random_f64(rng: np.random.Generator, shape, low: float = -1.0,
               high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), dtype=np.float64)
