"""Image corruptions: procedural cloud overlays and gaussian noise.

Both are pure functions of (inputs, parameters, seed) and keep pixels in
[0, 1]. The cloud synthesis is octave-summed smoothed value noise,
thresholded, then alpha-blended toward white.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


def _smooth(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _upsample_grid(grid: np.ndarray, size: int) -> np.ndarray:
    """Smoothstep-interpolated upsampling of a (g+1, g+1) lattice to size^2."""
    g = grid.shape[0] - 1
    u = np.arange(size) * (g / size)
    i0 = u.astype(int)
    t = _smooth(u - i0)
    i1 = np.minimum(i0 + 1, g)
    rows0 = grid[i0][:, i0]
    rows1 = grid[i0][:, i1]
    rows2 = grid[i1][:, i0]
    rows3 = grid[i1][:, i1]
    tx = t[None, :]
    ty = t[:, None]
    top = rows0 * (1 - tx) + rows1 * tx
    bot = rows2 * (1 - tx) + rows3 * tx
    return top * (1 - ty) + bot * ty


def value_noise(rng: np.random.Generator, size: int, octaves: int = 4) -> np.ndarray:
    """Octave-summed smoothed value noise in [0, 1], min-max normalized."""
    if octaves < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")
    field = np.zeros((size, size))
    total = 0.0
    for o in range(octaves):
        cells = 2 ** (o + 1)
        amp = 0.5 ** o
        lattice = rng.random((cells + 1, cells + 1))
        field += amp * _upsample_grid(lattice, size)
        total += amp
    field /= total
    lo, hi = field.min(), field.max()
    return (field - lo) / max(hi - lo, 1e-12)


@dataclass(frozen=True)
class CloudParams:
    """Cloud overlay controls; opacity bounds the per-pixel blend in [0, 1].

    """
    octaves: int = 4
    threshold: float = 0.35
    opacity: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity must be in [0, 1], got {self.opacity}")
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError(f"threshold must be in [0, 1), got {self.threshold}")

    def to_dict(self) -> dict:
        return asdict(self)


def cloud_mask(params: CloudParams, size: int, index: int) -> np.ndarray:
    """Per-image alpha mask in [0, opacity]; fixed seed gives a fixed mask."""
    rng = np.random.default_rng((params.seed, index))
    noise = value_noise(rng, size, params.octaves)
    mask = np.clip((noise - params.threshold) / (1.0 - params.threshold), 0.0, 1.0)
    return (mask * params.opacity).astype(np.float32)


def add_clouds(images: np.ndarray, params: CloudParams) -> np.ndarray:
    """Alpha-blend each image toward white under its own noise mask."""
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) images, got shape {images.shape}")
    out = np.empty_like(images)
    size = images.shape[2]
    for i in range(len(images)):
        alpha = cloud_mask(params, size, i)[None]
        out[i] = (1.0 - alpha) * images[i] + alpha
    return np.clip(out, 0.0, 1.0)


def add_gaussian_noise(images: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """clip(img + N(0, sigma^2), 0, 1), seeded."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    images = np.asarray(images, dtype=np.float32)
    if sigma == 0:
        return images.copy()
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=images.shape).astype(np.float32)
    return np.clip(images + noise, 0.0, 1.0)
