"""Evaluation metrics: top-1, ordinal one-off accuracy, and MSE."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError

ONE_OFF_CLASSES = 5


def _check_preds(preds: np.ndarray, labels: np.ndarray):
    if preds.ndim != 2:
        raise DimensionError(f"predictions must be (batch, classes), got "
                             f"shape {preds.shape}")
    if labels.ndim != 1 or len(labels) != len(preds):
        raise DimensionError(f"labels shape {labels.shape} does not match "
                             f"{len(preds)} predictions")


def top1_accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples whose argmax equals the 0-indexed label."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    _check_preds(preds, labels)
    return float((preds.argmax(axis=1) == labels).mean())


def one_off_accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    """Ordinal 5-class accuracy: correct when |argmax - label| <= 1."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    _check_preds(preds, labels)
    if preds.shape[1] != ONE_OFF_CLASSES:
        raise DimensionError(f"one-off accuracy is defined for "
                             f"{ONE_OFF_CLASSES}-class ordinal tasks, got "
                             f"{preds.shape[1]} classes")
    return float((np.abs(preds.argmax(axis=1) - labels) <= 1).mean())


def mse_metric(preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error over all elements and samples."""
    preds, targets = np.asarray(preds), np.asarray(targets)
    if preds.shape != targets.shape:
        raise DimensionError(f"shape mismatch: {preds.shape} vs {targets.shape}")
    diff = preds.astype(np.float64) - targets.astype(np.float64)
    return float((diff * diff).mean())
