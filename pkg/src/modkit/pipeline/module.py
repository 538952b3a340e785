"""MlModule: a predictor with a typed signature and metadata.

The unit of modularity. A module's predict is batched, runs without tape
recording, and validates both ends of its signature, so a composed
pipeline can never fail on a kind/shape mismatch at predict time.
"""
from __future__ import annotations

import numpy as np

from ..errors import SignatureMismatchError
from ..models.graph import ModelGraph
from ..tensor.core import no_grad
from .signature import Signature

DEFAULT_BATCH = 256


def _expected_batch_shape(sig: Signature, n: int) -> tuple:
    return (n,) + sig.dims


class MlModule:
    """A trained model (or pure function) behind a typed predict."""

    def __init__(self, module_id: str, input_signature: Signature,
                 output_signature: Signature, predict_fn,
                 metadata: dict | None = None, graph: ModelGraph | None = None,
                 batch_size: int = DEFAULT_BATCH):
        self.id = str(module_id)
        self.input_signature = input_signature
        self.output_signature = output_signature
        self.metadata = dict(metadata or {})
        self.graph = graph
        self.batch_size = int(batch_size)
        self._predict_fn = predict_fn

    def __repr__(self):
        return (f"MlModule({self.id!r}, {self.input_signature} -> "
                f"{self.output_signature})")

    # -- constructors ---------------------------------------------------------
    @classmethod
    def from_graph(cls, module_id: str, graph: ModelGraph,
                   metadata: dict | None = None,
                   batch_size: int = DEFAULT_BATCH) -> "MlModule":
        input_sig = Signature(graph.input_kind, graph.input_shape)
        output_sig = Signature(graph.output_kind, graph.output_shape)

        def predict_fn(x: np.ndarray) -> np.ndarray:
            return graph.forward(x, mode="infer").data

        return cls(module_id, input_sig, output_sig, predict_fn, metadata,
                   graph=graph, batch_size=batch_size)

    @classmethod
    def from_function(cls, module_id: str, fn, input_signature: Signature,
                      output_signature: Signature,
                      metadata: dict | None = None,
                      batch_size: int = DEFAULT_BATCH) -> "MlModule":
        return cls(module_id, input_signature, output_signature, fn, metadata,
                   batch_size=batch_size)

    # -- prediction -----------------------------------------------------------
    def _check(self, arr: np.ndarray, sig: Signature, end: str):
        if arr.ndim != 1 + len(sig.dims) or arr.shape[1:] != sig.dims:
            raise SignatureMismatchError(
                f"module {self.id!r} {end} shape {arr.shape[1:]} does not "
                f"match its signature {sig}")

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Batched inference respecting the declared signature on both ends."""
        x = np.asarray(x)
        self._check(x, self.input_signature, "input")
        outs = []
        with no_grad():
            for lo in range(0, len(x), self.batch_size):
                outs.append(np.asarray(self._predict_fn(x[lo:lo + self.batch_size])))
        out = np.concatenate(outs, axis=0) if outs else \
            np.empty((0,) + self.output_signature.dims, dtype=np.float32)
        self._check(out, self.output_signature, "output")
        return out

    def with_metadata(self, **updates) -> "MlModule":
        md = dict(self.metadata)
        md.update(updates)
        return MlModule(self.id, self.input_signature, self.output_signature,
                        self._predict_fn, md, graph=self.graph,
                        batch_size=self.batch_size)
