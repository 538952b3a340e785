"""N-dimensional tensors with tape-based reverse-mode differentiation.

Values are float32 by default; float64 exists for gradient verification.
A tensor produced by an operation carries a ``TapeNode`` linking it to its
inputs; ``backward`` walks the tape once, in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DimensionError, TapeError

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True


class no_grad:
    """Context manager that suppresses tape recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class TapeNode:
    """One recorded operation on the tape.

    ``grad_fn`` maps the gradient at the output to a tuple of gradients
    aligned with ``inputs`` (``None`` for inputs that take no gradient).
    Saved intermediates live in the closure.
    """

    __slots__ = ("op", "inputs", "grad_fn")

    def __init__(self, op: str, inputs: Sequence["Tensor"],
                 grad_fn: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = tuple(inputs)
        self.grad_fn = grad_fn


class Tensor:
    """A numpy array plus optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None
        self._backward_ran = False

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- gradient bookkeeping ------------------------------------------------
    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None
        self._backward_ran = False

    def backward(self):
        backward(self)

    # operator sugar is attached by modkit.tensor.ops at import time


def _on_tape(t: Tensor) -> bool:
    return t.node is not None or t.requires_grad


def make_result(op: str, out_data: np.ndarray, inputs: Sequence[Tensor],
                grad_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap an op result, recording a TapeNode when gradients are live."""
    out = Tensor(out_data, dtype=out_data.dtype)
    if _GRAD_ENABLED and any(_on_tape(t) for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op, inputs, grad_fn)
    return out


def _topo_order(root: Tensor) -> list:
    """Tensors reachable from root, inputs-before-outputs (postorder DFS)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for parent in t.node.inputs:
                if id(parent) not in seen and _on_tape(parent):
                    stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Populate ``grad`` on every tensor with requires_grad on the path to loss.

    The loss must be a tape-connected scalar. Calling backward twice on the
    same loss without resetting is an error.
    """
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None and not loss.requires_grad:
        raise TapeError("loss is not connected to the tape")
    if loss._backward_ran:
        raise TapeError("backward already ran for this loss; build a fresh graph "
                        "or call zero_grad() first")
    loss._backward_ran = True

    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for t in reversed(order):
        if t.node is None:
            continue
        grads = t.node.grad_fn(t.grad)
        if len(grads) != len(t.node.inputs):
            raise TapeError(f"op {t.node.op!r} returned {len(grads)} gradients "
                            f"for {len(t.node.inputs)} inputs")
        for parent, g in zip(t.node.inputs, grads):
            if g is None or not _on_tape(parent):
                continue
            if g.shape != parent.data.shape:
                raise TapeError(f"op {t.node.op!r} produced gradient of shape "
                                f"{g.shape} for input of shape {parent.data.shape}")
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)
