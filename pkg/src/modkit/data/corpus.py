"""Synthetic sentiment corpus with an exact, deterministic lexicon teacher.

Token valences are drawn from N(0, 1); each document draws a latent
sentiment and prefers tokens whose valence sits near it (reviews are
coherent), so n-gram detectors can recover the document's sentiment.
Document valence is the mean valence of its tokens; star labels are the
corpus-level quantile bin (five equal-mass bins). The teacher returns a
softmax over negative squared distances between the document valence and
the five bin centers, scaled so adjacent bins are well separated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModkitError

PAD_ID = 0
NUM_STARS = 5


class UnknownTokenError(ModkitError, ValueError):
    """A token id falls outside the vocabulary."""


def tokenize_pad(doc, max_len: int = 500, vocab_size: int | None = None) -> np.ndarray:
    """Truncate to ``max_len`` and pad the tail with id 0 to exact length."""
    ids = np.asarray(doc, dtype=np.int64).reshape(-1)
    if ids.size and ids.min() < 0:
        raise UnknownTokenError(f"negative token id {ids.min()}")
    if vocab_size is not None and ids.size and ids.max() >= vocab_size:
        raise UnknownTokenError(f"token id {ids.max()} outside vocabulary "
                                f"of size {vocab_size}")
    out = np.full(max_len, PAD_ID, dtype=np.int64)
    keep = ids[:max_len]
    out[:len(keep)] = keep
    return out


@dataclass
class SentimentCorpus:
    vocab_size: int
    max_len: int
    valences: np.ndarray        # (V,), index 0 is the pad id with valence 0
    tokens: np.ndarray          # (n_docs, max_len) padded id sequences
    lengths: np.ndarray
    stars: np.ndarray           # 1..5
    doc_valences: np.ndarray
    bin_edges: np.ndarray       # (4,)
    bin_centers: np.ndarray     # (5,)
    sharpness: float
    params: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tokens)

    @property
    def labels(self) -> np.ndarray:
        """0-indexed classes (star - 1) for training and metrics."""
        return self.stars - 1

    def doc_valence(self, token_batch: np.ndarray) -> np.ndarray:
        """Mean valence over non-pad tokens; empty documents score 0."""
        ids = np.asarray(token_batch, dtype=np.int64)
        mask = ids != PAD_ID
        sums = (self.valences[ids] * mask).sum(axis=1)
        counts = mask.sum(axis=1)
        return sums / np.maximum(counts, 1)

    def teacher_probs(self, token_batch: np.ndarray) -> np.ndarray:
        """The blackbox teacher: softmax over -((v - center)/sharpness)^2."""
        v = self.doc_valence(np.atleast_2d(token_batch))
        z = -(((v[:, None] - self.bin_centers[None, :]) / self.sharpness) ** 2)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


def gen_sentiment_corpus(vocab_size: int = 2000, n_docs: int = 12000,
                         max_len: int = 128, seed: int = 0,
                         coherence: float = 0.7, min_len: int = 12) -> SentimentCorpus:
    if vocab_size <= 10:
        raise ValueError(f"vocab_size must be > 10, got {vocab_size}")
    if min_len < 1 or min_len > max_len:
        raise ValueError(f"need 1 <= min_len <= max_len, got {min_len}/{max_len}")
    rng = np.random.default_rng(seed)
    valences = rng.standard_normal(vocab_size)
    valences[PAD_ID] = 0.0
    by_valence = np.argsort(valences[1:]) + 1   # real tokens sorted by valence

    tokens = np.full((n_docs, max_len), PAD_ID, dtype=np.int64)
    lengths = np.empty(n_docs, dtype=np.int64)
    for d in range(n_docs):
        length = int(rng.integers(min_len, max_len + 1))
        latent = rng.standard_normal()
        quantile = 0.5 * (1.0 + math.erf(latent / math.sqrt(2.0)))
        biased = rng.random(length) < coherence
        jitter = rng.normal(0.0, 0.12, size=length)
        pos = np.clip(((quantile + jitter) * (vocab_size - 1)).astype(int),
                      0, vocab_size - 2)
        uniform = rng.integers(1, vocab_size, size=length)
        tokens[d, :length] = np.where(biased, by_valence[pos], uniform)
        lengths[d] = length

    mask = tokens != PAD_ID
    doc_val = (valences[tokens] * mask).sum(axis=1) / np.maximum(mask.sum(axis=1), 1)
    edges = np.quantile(doc_val, [0.2, 0.4, 0.6, 0.8])
    stars = np.searchsorted(edges, doc_val, side="left").astype(np.int64) + 1
    # Centers whose nearest-neighbor cells are exactly the quantile bins:
    # anchor the middle at the median, reflect outward so each edge sits
    # midway between its two neighboring centers.
    c3 = float(np.quantile(doc_val, 0.5))
    c2 = 2.0 * edges[1] - c3
    c1 = 2.0 * edges[0] - c2
    c4 = 2.0 * edges[2] - c3
    c5 = 2.0 * edges[3] - c4
    centers = np.array([c1, c2, c3, c4, c5])
    sharpness = 0.5 * float(np.diff(centers).mean())
    params = {"kind": "sentiment", "vocab_size": vocab_size, "n_docs": n_docs,
              "max_len": max_len, "seed": seed, "coherence": coherence,
              "min_len": min_len}
    return SentimentCorpus(vocab_size, max_len, valences, tokens, lengths,
                           stars, doc_val, edges, centers, sharpness, params)


def corpus_from_manifest(manifest: dict) -> SentimentCorpus:
    if manifest.get("kind") != "sentiment":
        raise ValueError(f"cannot regenerate corpus from kind "
                         f"{manifest.get('kind')!r}")
    return gen_sentiment_corpus(manifest["vocab_size"], manifest["n_docs"],
                                manifest["max_len"], manifest["seed"],
                                manifest["coherence"], manifest["min_len"])
