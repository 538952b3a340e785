"""Procedural satellite-like imagery with class textures and a NIR band.

Ten land-cover-like classes arranged as five groups of two. A group shares
a color palette and a strong coarse texture family (stripes, checks,
blobs, gradients with group-specific frequency and orientation); the two
classes inside a group differ by the orientation of a fine fixed-phase
micro-texture. Palettes sit close together and groups are only split by
texture, so corruption studies exercise texture reading rather than
degenerating into color lookups; fixed phases keep the task separable for
a nearest-centroid probe.

The NIR band is a fixed function of the clean RGB plus a class-dependent
texture term, so recovering clean RGB provably helps NIR prediction.
"""
from __future__ import annotations

import numpy as np

from .corrupt import value_noise

# palettes sit close together on purpose: the class signal must ride on
# texture, not color alone
_GRAY = 0.42
_RAW_PALETTES = np.array([
    [0.55, 0.35, 0.25],   # ochre
    [0.30, 0.50, 0.30],   # green
    [0.25, 0.35, 0.55],   # blue
    [0.55, 0.50, 0.30],   # olive
    [0.45, 0.30, 0.50],   # violet
])
_PALETTES = _GRAY + 0.45 * (_RAW_PALETTES - _GRAY)
_FAMILIES = ("stripes", "checks", "blobs", "gradient")
_CHANNEL_WEIGHTS = np.array([0.9, 0.9, 0.9])
_NIR_TEXTURE_GAIN = 0.15
_MICRO_SPLIT = np.radians(35.0)   # orientation split between pair members

NUM_GROUPS = len(_PALETTES)


def _grid(size: int):
    return np.meshgrid(np.arange(size) / size, np.arange(size) / size,
                       indexing="ij")


def group_texture(g: int, size: int) -> np.ndarray:
    """Strong coarse field in [-1, 1] shared by both classes of group g."""
    family = _FAMILIES[g % 4]
    freq = 4 + g
    theta = np.pi * g / NUM_GROUPS + np.pi / 9.0
    phase = 2.0 * np.pi * ((g * 0.37) % 1.0)
    u, v = _grid(size)
    if family == "stripes":
        return np.sin(2 * np.pi * freq * (u * np.cos(theta) + v * np.sin(theta))
                      + phase)
    if family == "checks":
        return (np.sin(2 * np.pi * freq * u + phase)
                * np.sin(2 * np.pi * freq * v + phase))
    if family == "blobs":
        field = value_noise(np.random.default_rng(1000 + g), size, octaves=3)
        return 2.0 * field - 1.0
    ramp = u * np.cos(theta) + v * np.sin(theta)
    lo, hi = ramp.min(), ramp.max()
    return 2.0 * (ramp - lo) / max(hi - lo, 1e-9) - 1.0


def micro_texture(k: int, size: int) -> np.ndarray:
    """Fine fixed-phase field in [-1, 1] that splits a group's pair."""
    g, member = divmod(k, 2)
    base = np.pi * g / NUM_GROUPS + np.pi / 9.0
    phi = base + (_MICRO_SPLIT if member == 0 else -_MICRO_SPLIT)
    freq = 9 + (g % 3)
    phase = 2.0 * np.pi * ((k * 0.61) % 1.0)
    u, v = _grid(size)
    return np.sin(2 * np.pi * freq * (u * np.cos(phi) + v * np.sin(phi)) + phase)


def class_texture(k: int, size: int) -> np.ndarray:
    """Deterministic signature field of class k (coarse + its own micro)."""
    return 0.6 * group_texture(k // 2, size) + 0.4 * micro_texture(k, size)


def nir_from_clean(clean: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """NIR = clip(0.6 G + 0.3 R - 0.2 B + class texture term, 0, 1)."""
    n, _, h, w = clean.shape
    r, g, b = clean[:, 0], clean[:, 1], clean[:, 2]
    nir = 0.6 * g + 0.3 * r - 0.2 * b
    for k in np.unique(labels):
        mask = labels == k
        nir[mask] += _NIR_TEXTURE_GAIN * class_texture(int(k), h)
    return np.clip(nir, 0.0, 1.0)[:, None].astype(np.float32)


def gen_synthsat(num_classes: int = 10, n: int = 1000, size: int = 32,
                 seed: int = 0):
    """Clean RGB images, round-robin labels, and the derived NIR band.

    Bit-identical for a given (parameters, seed). Returns
    (images (n,3,size,size) float32 in [0,1], labels (n,), nir (n,1,size,size)).
    """
    if num_classes < 1 or num_classes > 2 * NUM_GROUPS:
        raise ValueError(f"num_classes must be in [1, {2 * NUM_GROUPS}], "
                         f"got {num_classes}")
    if n < num_classes:
        raise ValueError(f"need at least one sample per class: n={n} < "
                         f"{num_classes} classes")
    rng = np.random.default_rng(seed)
    strong = np.stack([group_texture(g, size) for g in range(NUM_GROUPS)])
    micro = np.stack([micro_texture(k, size) for k in range(2 * NUM_GROUPS)])
    labels = np.arange(n, dtype=np.int64) % num_classes

    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        k = int(labels[i])
        amp_strong = rng.uniform(0.18, 0.26)
        amp_micro = rng.uniform(0.08, 0.11)
        brightness = rng.uniform(-0.08, 0.08)
        color_jitter = rng.uniform(-0.04, 0.04, size=3)
        pix = rng.uniform(-0.02, 0.02, size=(size, size))
        field = amp_strong * strong[k // 2] + amp_micro * micro[k]
        base = _PALETTES[k // 2] + brightness + color_jitter
        img = base[:, None, None] + _CHANNEL_WEIGHTS[:, None, None] * field + pix
        images[i] = np.clip(img, 0.0, 1.0)
    nir = nir_from_clean(images, labels)
    return images, labels, nir


def nearest_centroid_accuracy(images: np.ndarray, labels: np.ndarray,
                              train_fraction: float = 0.5) -> float:
    """Learnability probe: per-class mean-image classifier accuracy.

    Deliberately naive (flattened pixels, Euclidean distance) so it stays an
    independent check that the generated task is separable at all.
    """
    n = len(images)
    n_train = int(n * train_fraction)
    x = images.reshape(n, -1).astype(np.float64)
    xtr, ytr = x[:n_train], labels[:n_train]
    xte, yte = x[n_train:], labels[n_train:]
    classes = np.unique(ytr)
    centroids = np.stack([xtr[ytr == k].mean(axis=0) for k in classes])
    d2 = ((xte[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[d2.argmin(axis=1)]
    return float((pred == yte).mean())
