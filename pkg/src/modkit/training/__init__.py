"""Training loops, blackbox distillation, and magnitude pruning."""

from .distill import Distiller
from .prune import prune_graph, prune_magnitude, prunable_parameters, zero_fraction
from .supervised import (HistoryRow, SupervisedTrainer, one_hot, train_denoiser,
                         write_history_csv)

__all__ = ["SupervisedTrainer", "Distiller", "train_denoiser", "HistoryRow",
           "write_history_csv", "one_hot", "prune_magnitude", "prune_graph",
           "prunable_parameters", "zero_fraction"]
