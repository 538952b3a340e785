"""Sequential composition of modules with signature checking.

A pipeline is itself an MlModule (first input, last output), so pipelines
nest. Swapping a stage derives a new pipeline; the original is untouched.
"""
from __future__ import annotations

from ..errors import SignatureMismatchError
from .module import MlModule


class Pipeline(MlModule):
    """Left-to-right application of signature-matched modules."""

    def __init__(self, modules, module_id: str | None = None,
                 metadata: dict | None = None):
        modules = tuple(modules)
        if not modules:
            raise SignatureMismatchError("a pipeline needs at least one module")
        for pos in range(1, len(modules)):
            up, down = modules[pos - 1], modules[pos]
            if up.output_signature != down.input_signature:
                raise SignatureMismatchError(
                    f"boundary {pos}: {up.id!r} outputs {up.output_signature} "
                    f"but {down.id!r} expects {down.input_signature}")
        self.modules = modules

        def predict_fn(x):
            for m in modules:
                x = m.predict(x)
            return x

        super().__init__(
            module_id or "|".join(m.id for m in modules),
            modules[0].input_signature, modules[-1].output_signature,
            predict_fn, metadata or {"members": [m.id for m in modules]})

    def __len__(self):
        return len(self.modules)

    def predict(self, x):
        # members validate their own ends; chaining is plain application
        import numpy as np
        x = np.asarray(x)
        self._check(x, self.input_signature, "input")
        for m in self.modules:
            x = m.predict(x)
        return x


def compose(modules, module_id: str | None = None) -> Pipeline:
    """Signature-checked pipeline; errors name the offending boundary."""
    return Pipeline(modules, module_id)


def swap(pipeline: Pipeline, index: int, replacement: MlModule) -> Pipeline:
    """Replace one stage, requiring an identical signature; returns a new
    pipeline and leaves the original untouched."""
    if not 0 <= index < len(pipeline.modules):
        raise IndexError(f"swap index {index} out of range for pipeline of "
                         f"length {len(pipeline.modules)}")
    old = pipeline.modules[index]
    if (replacement.input_signature != old.input_signature
            or replacement.output_signature != old.output_signature):
        raise SignatureMismatchError(
            f"swap at {index}: replacement {replacement.id!r} has signature "
            f"{replacement.input_signature} -> {replacement.output_signature}, "
            f"module {old.id!r} has {old.input_signature} -> "
            f"{old.output_signature}")
    members = list(pipeline.modules)
    members[index] = replacement
    return Pipeline(members)
