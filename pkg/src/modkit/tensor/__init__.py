"""Tensor substrate: arrays with reverse-mode differentiation plus file I/O."""

from .core import Tensor, TapeNode, backward, no_grad, as_tensor
from .io import save_bt, load_bt
from . import ops

__all__ = ["Tensor", "TapeNode", "backward", "no_grad", "as_tensor",
           "save_bt", "load_bt", "ops"]
