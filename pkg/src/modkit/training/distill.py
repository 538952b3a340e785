"""Blackbox knowledge distillation.

The student imitates the teacher's outputs on an unlabeled pool; the
teacher is only ever called through its predict (no internals). Class-dist
teachers are imitated under cross-entropy, image/vector teachers under
MSE. Optional supervised pre-training runs strictly before the imitation
epochs and is recorded as its own history phase.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import SignatureMismatchError, TrainingDivergedError
from ..models.graph import ModelGraph
from ..models.optim import make_optimizer
from ..pipeline.module import MlModule
from ..pipeline.signature import Signature
from ..tensor import ops
from ..tensor.core import Tensor, backward, no_grad
from .supervised import HistoryRow, SupervisedTrainer, _restore, _snapshot


def _imitation_loss_kind(teacher_out: Signature) -> str:
    return "cross_entropy" if teacher_out.kind == "class_dist" else "mse"


class Distiller(BaseEstimator):
    """Train a student graph to imitate a teacher module.

    ``loss=None`` derives the imitation loss from the teacher's output kind;
    passing an inconsistent loss explicitly is an error. ``pretrain_epochs``
    > 0 requires a labeled (x, y) pair and runs a supervised phase first.
    """

    def __init__(self, epochs: int = 10, batch_size: int = 32, lr: float = 1e-3,
                 optimizer: str = "adam", loss: str | None = None,
                 pretrain_epochs: int = 0, seed: int = 0, patience: int = 5,
                 val_fraction: float = 0.1):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.loss = loss
        self.pretrain_epochs = pretrain_epochs
        self.seed = seed
        self.patience = patience
        self.val_fraction = val_fraction

    def _check_signatures(self, teacher: MlModule, student: ModelGraph):
        s_in = Signature(student.input_kind, student.input_shape)
        s_out = Signature(student.output_kind, student.output_shape)
        if teacher.input_signature != s_in or teacher.output_signature != s_out:
            raise SignatureMismatchError(
                f"teacher {teacher.input_signature} -> "
                f"{teacher.output_signature} vs student {s_in} -> {s_out}")

    def fit(self, teacher: MlModule, student: ModelGraph,
            unlabeled_x: np.ndarray, labeled: tuple | None = None,
            val_x: np.ndarray | None = None):
        self._check_signatures(teacher, student)
        loss_kind = _imitation_loss_kind(teacher.output_signature)
        if self.loss is not None and self.loss != loss_kind:
            raise ValueError(f"loss {self.loss!r} inconsistent with teacher "
                             f"output kind {teacher.output_signature.kind!r} "
                             f"(expected {loss_kind!r})")
        history: list[HistoryRow] = []

        net = student.copy()
        if self.pretrain_epochs > 0:
            if labeled is None:
                raise ValueError("pretraining requested but no labeled split "
                                 "was supplied")
            x_lab, y_lab = labeled
            pre = SupervisedTrainer(
                epochs=self.pretrain_epochs, batch_size=self.batch_size,
                lr=self.lr, optimizer=self.optimizer,
                loss="cross_entropy" if loss_kind == "cross_entropy" else "mse",
                seed=self.seed, patience=self.patience)
            pre.fit(net, x_lab, y_lab)
            net = pre.graph_
            for row in pre.history_:
                history.append(HistoryRow(row.epoch, "pretrain", row.train_loss,
                                          None, None))

        # held-out pool slice for early stopping and agreement measurement
        if val_x is None:
            n_val = max(2, int(round(self.val_fraction * len(unlabeled_x))))
            order = np.random.default_rng(self.seed + 1).permutation(len(unlabeled_x))
            val_x = unlabeled_x[order[-n_val:]]
            unlabeled_x = unlabeled_x[order[:-n_val]]

        # the teacher is a blackbox: one batched predict per pool
        targets = teacher.predict(unlabeled_x).astype(np.float32)
        val_targets = teacher.predict(val_x).astype(np.float32)

        imit = SupervisedTrainer(loss=loss_kind, seed=self.seed)

        def val_row(epoch: int) -> HistoryRow:
            val_loss, val_metric = self._eval(net, val_x, val_targets, loss_kind)
            return HistoryRow(epoch, "distill", None, val_loss, val_metric)

        rng = np.random.default_rng(self.seed + 2)
        opt = make_optimizer(self.optimizer, self.lr)
        baseline = val_row(0)
        history.append(baseline)
        best_metric, best_snap = baseline.val_metric, _snapshot(net)
        stale = 0
        for epoch in range(1, self.epochs + 1):
            perm = rng.permutation(len(unlabeled_x))
            epoch_loss, seen = 0.0, 0
            for lo in range(0, len(perm), self.batch_size):
                idx = perm[lo:lo + self.batch_size]
                if len(idx) < 2:
                    continue
                out = net.forward(unlabeled_x[idx], mode="train", rng=rng)
                loss = imit._loss(out, targets[idx])
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDivergedError(f"non-finite imitation loss at "
                                                f"epoch {epoch}")
                net.zero_grad()
                backward(loss)
                opt.step(net)
                epoch_loss += value * len(idx)
                seen += len(idx)
            row = val_row(epoch)
            row.train_loss = epoch_loss / max(seen, 1)
            history.append(row)
            if row.val_metric > best_metric:
                best_metric, best_snap, stale = row.val_metric, _snapshot(net), 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        if best_snap is not None:
            _restore(net, best_snap)

        self.graph_ = net
        self.history_ = history
        self.loss_kind_ = loss_kind
        self.agreement_ = self._agreement(net, val_x, val_targets, loss_kind)
        return self

    def _eval(self, net, x, targets, loss_kind):
        total, n = 0.0, len(x)
        with no_grad():
            for lo in range(0, n, 256):
                out = net.forward(x[lo:lo + 256], mode="infer")
                t = Tensor(targets[lo:lo + 256])
                loss = (ops.cross_entropy(out, t) if loss_kind == "cross_entropy"
                        else ops.mse(out, t))
                total += loss.item() * len(targets[lo:lo + 256])
        loss = total / max(n, 1)
        return loss, -loss

    def _agreement(self, net, x, targets, loss_kind) -> float:
        """Held-out top-1 agreement with the teacher (class tasks) or the
        negated MSE to the teacher's outputs (regression tasks)."""
        with no_grad():
            preds = np.concatenate([net.forward(x[lo:lo + 256], mode="infer").data
                                    for lo in range(0, len(x), 256)])
        if loss_kind == "cross_entropy":
            return float((preds.argmax(axis=1) == targets.argmax(axis=1)).mean())
        return -float(((preds - targets) ** 2).mean())

    def to_module(self, module_id: str, **metadata) -> MlModule:
        md = {"distilled": True, "loss": self.loss_kind_, "seed": self.seed,
              "agreement": float(self.agreement_)}
        md.update(metadata)
        return MlModule.from_graph(module_id, self.graph_, md)
