"""Minibatch training with early stopping and best-epoch weight retention.

``SupervisedTrainer`` is estimator-shaped: hyperparameters in the
constructor (so ``get_params``/``clone`` compose with the wider
ecosystem), ``fit`` trains a copy of the graph it is given, fitted
artifacts land in trailing-underscore attributes. A (seed, data, config)
triple reproduces the final weights bit for bit.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import TrainingDivergedError
from ..models.graph import ModelGraph
from ..models.optim import make_optimizer
from ..pipeline.module import MlModule
from ..tensor import ops
from ..tensor.core import Tensor, backward, no_grad

LOSSES = ("cross_entropy", "mse")


@dataclass
class HistoryRow:
    epoch: int
    phase: str
    train_loss: float | None
    val_loss: float | None
    val_metric: float | None


def write_history_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "phase", "train_loss", "val_loss", "val_metric"])
        for r in rows:
            w.writerow([r.epoch, r.phase,
                        "" if r.train_loss is None else f"{r.train_loss:.8g}",
                        "" if r.val_loss is None else f"{r.val_loss:.8g}",
                        "" if r.val_metric is None else f"{r.val_metric:.8g}"])


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")
    return np.eye(num_classes, dtype=np.float32)[labels]


def _snapshot(graph: ModelGraph):
    params = [t.data.copy() for _, _, t in graph.parameters()]
    state = [a.copy() for _, _, a in graph.state_arrays()]
    return params, state


def _restore(graph: ModelGraph, snap):
    params, state = snap
    for (_, _, t), data in zip(graph.parameters(), params):
        t.data = data.copy()
    for (i, name, _), data in zip(graph.state_arrays(), state):
        setattr(graph.state[i], name, data.copy())


class SupervisedTrainer(BaseEstimator):
    """Train a ModelGraph on (x, y); cross-entropy or MSE.

    With a validation split, keeps the best-validation-epoch weights and
    stops early after ``patience`` epochs without improvement. Aborts with
    a diagnostic on non-finite loss.
    """

    def __init__(self, epochs: int = 20, batch_size: int = 32, lr: float = 1e-3,
                 optimizer: str = "adam", loss: str = "cross_entropy",
                 seed: int = 0, patience: int = 5):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.loss = loss
        self.seed = seed
        self.patience = patience

    def _validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0 \
                or self.patience < 1:
            raise ValueError(f"invalid training config: {self.get_params()}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")

    def _targets(self, graph: ModelGraph, y) -> np.ndarray:
        if self.loss == "cross_entropy":
            return one_hot(y, graph.output_shape[0])
        t = np.asarray(y, dtype=np.float32)
        return t

    def _loss(self, out: Tensor, target: np.ndarray) -> Tensor:
        t = Tensor(target)
        if self.loss == "cross_entropy":
            return ops.cross_entropy(out, t)
        return ops.mse(out, t)

    def evaluate(self, graph: ModelGraph, x, y) -> tuple[float, float]:
        """(loss, metric) on a split; metric is top-1 for cross-entropy,
        negated MSE otherwise (higher is always better)."""
        target = self._targets(graph, y)
        total, n = 0.0, len(x)
        hits = 0
        with no_grad():
            for lo in range(0, n, 256):
                xb = x[lo:lo + 256]
                out = graph.forward(xb, mode="infer")
                total += self._loss(out, target[lo:lo + 256]).item() * len(xb)
                if self.loss == "cross_entropy":
                    hits += int((out.data.argmax(axis=1)
                                 == np.asarray(y[lo:lo + 256])).sum())
        loss = total / max(n, 1)
        metric = hits / max(n, 1) if self.loss == "cross_entropy" else -loss
        return loss, metric

    def fit(self, graph: ModelGraph, x, y, x_val=None, y_val=None):
        self._validate()
        if len(x) != len(y):
            raise ValueError(f"x and y lengths differ: {len(x)} vs {len(y)}")
        has_val = x_val is not None and y_val is not None

        rng = np.random.default_rng(self.seed)
        net = graph.copy()
        opt = make_optimizer(self.optimizer, self.lr)
        target = self._targets(net, y)
        history: list[HistoryRow] = []
        best_metric, best_snap, best_epoch = -np.inf, None, 0
        stale = 0

        for epoch in range(1, self.epochs + 1):
            perm = rng.permutation(len(x))
            epoch_loss, seen = 0.0, 0
            for lo in range(0, len(perm), self.batch_size):
                idx = perm[lo:lo + self.batch_size]
                if len(idx) < 2:
                    continue  # batch norm needs >= 2; drop the straggler
                out = net.forward(x[idx], mode="train", rng=rng)
                loss = self._loss(out, target[idx])
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite loss {value} at epoch {epoch}, "
                        f"batch {lo // self.batch_size} (lr={self.lr}, "
                        f"loss={self.loss})")
                net.zero_grad()
                backward(loss)
                opt.step(net)
                epoch_loss += value * len(idx)
                seen += len(idx)
            train_loss = epoch_loss / max(seen, 1)

            val_loss = val_metric = None
            if has_val:
                val_loss, val_metric = self.evaluate(net, x_val, y_val)
                if val_metric > best_metric:
                    best_metric, best_snap, best_epoch = val_metric, _snapshot(net), epoch
                    stale = 0
                else:
                    stale += 1
            history.append(HistoryRow(epoch, "train", train_loss, val_loss,
                                      val_metric))
            if has_val and stale >= self.patience:
                break

        if best_snap is not None:
            _restore(net, best_snap)
        self.graph_ = net
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.best_val_metric_ = None if best_metric == -np.inf else best_metric
        return self

    def to_module(self, module_id: str, **metadata) -> MlModule:
        md = {"optimizer": self.optimizer, "lr": self.lr, "epochs": self.epochs,
              "seed": self.seed}
        if self.best_val_metric_ is not None:
            md["metrics"] = {"val_metric": float(self.best_val_metric_)}
        md.update(metadata)
        return MlModule.from_graph(module_id, self.graph_, md)


def train_denoiser(graph: ModelGraph, cloudy: np.ndarray, clean: np.ndarray,
                   module_id: str = "cloud-removal", val_fraction: float = 0.1,
                   **params) -> tuple[MlModule, list[HistoryRow]]:
    """Reconstruction training on unlabeled (corrupted, clean) pairs.

    No label tensors are reachable from this call; the resulting module is
    tagged for the cloud-removal task with unlabeled provenance.
    """
    if len(cloudy) != len(clean):
        raise ValueError(f"pair count mismatch: {len(cloudy)} vs {len(clean)}")
    trainer = SupervisedTrainer(loss="mse", **params)
    n_val = max(2, int(round(val_fraction * len(cloudy))))
    order = np.random.default_rng(trainer.seed).permutation(len(cloudy))
    fit_idx, val_idx = order[:-n_val], order[-n_val:]
    trainer.fit(graph, cloudy[fit_idx], clean[fit_idx],
                cloudy[val_idx], clean[val_idx])
    module = trainer.to_module(module_id, task="cloud-removal",
                               data_provenance="unlabeled")
    return module, trainer.history_
