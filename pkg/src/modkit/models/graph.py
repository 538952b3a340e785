"""Model graphs: ordered layers, skip edges, and their parameter store."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..tensor import ops
from ..tensor.core import Tensor, as_tensor
from .layers import LayerSpec, allocate, apply_layer, has_kink, infer_shape

INPUT_KINDS = ("image", "token_seq", "vector")
OUTPUT_KINDS = ("image", "class_dist", "vector")


class ModelGraph:
    """A trained or trainable network: LayerSpecs plus parameters.

    Parameter count is a pure function of the specs and the input shape;
    skip edges connect encoder outputs to decoder concat layers with
    matching spatial dims (validated at build time, so composition can
    never fail during forward).
    """

    def __init__(self, layers, input_shape, input_kind: str = "image",
                 output_kind: str | None = None, seed: int = 0,
                 dtype=np.float32, name: str = ""):
        if not layers:
            raise ValueError("a model needs at least one layer")
        if input_kind not in INPUT_KINDS:
            raise ValueError(f"unknown input kind {input_kind!r}")
        if output_kind is not None and output_kind not in OUTPUT_KINDS:
            raise ValueError(f"unknown output kind {output_kind!r}")
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.input_kind = input_kind
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.name = name

        # shape inference + skip validation
        self.out_shapes: list[tuple] = []
        self.skips: list[tuple[int, int]] = []
        shape = self.input_shape
        for i, spec in enumerate(self.layers):
            src_shape = None
            if spec.kind == "concat_skip":
                src = spec.params["source"]
                if src >= i:
                    raise DimensionError(f"layer {i}: skip source {src} is not "
                                         f"an earlier layer")
                src_shape = self.out_shapes[src]
                self.skips.append((src, i))
            shape = infer_shape(spec, shape, src_shape)
            self.out_shapes.append(shape)
        self.output_kind = output_kind or self._guess_output_kind()

        # parameter allocation (rng consumed in layer order: deterministic)
        rng = np.random.default_rng(self.seed)
        self.params: dict[int, dict[str, Tensor]] = {}
        self.state: dict[int, object] = {}
        in_shape = self.input_shape
        for i, spec in enumerate(self.layers):
            p, st = allocate(spec, in_shape, rng, self.dtype)
            if p:
                self.params[i] = p
            if st is not None:
                self.state[i] = st
            in_shape = self.out_shapes[i]

        self.masks: dict[tuple[int, str], np.ndarray] = {}
        self._skip_sources = {src for src, _ in self.skips}
        self._has_dropout = any(s.kind == "dropout" and s.params["rate"] > 0
                                for s in self.layers)

    # -- introspection -------------------------------------------------------
    def _guess_output_kind(self) -> str:
        last = self.layers[-1]
        out = self.out_shapes[-1]
        if last.kind == "activation" and last.params["name"] == "softmax":
            return "class_dist"
        return "image" if len(out) == 3 else "vector"

    @property
    def output_shape(self) -> tuple:
        return self.out_shapes[-1]

    def parameters(self):
        """(layer index, name, tensor) triples in canonical order."""
        out = []
        for i in sorted(self.params):
            for name in sorted(self.params[i]):
                out.append((i, name, self.params[i][name]))
        return out

    def state_arrays(self):
        """(layer index, name, array) triples for running statistics."""
        out = []
        for i in sorted(self.state):
            st = self.state[i]
            out.append((i, "running_mean", st.running_mean))
            out.append((i, "running_var", st.running_var))
        return out

    def param_count(self) -> int:
        return sum(t.size for _, _, t in self.parameters())

    def zero_grad(self):
        for _, _, t in self.parameters():
            t.zero_grad()

    # -- mutation ------------------------------------------------------------
    def apply_masks(self):
        for (i, name), mask in self.masks.items():
            t = self.params[i][name]
            t.data *= mask.astype(t.data.dtype)

    def copy(self) -> "ModelGraph":
        return self._clone(self.dtype)

    def astype(self, dtype) -> "ModelGraph":
        return self._clone(np.dtype(dtype))

    def _clone(self, dtype) -> "ModelGraph":
        out = ModelGraph(self.layers, self.input_shape, self.input_kind,
                         self.output_kind, seed=self.seed, dtype=dtype,
                         name=self.name)
        for i, name, t in self.parameters():
            out.params[i][name] = Tensor(t.data.astype(dtype),
                                         requires_grad=True, dtype=dtype)
        for i in self.state:
            out.state[i] = self.state[i].astype(dtype)
        out.masks = {k: v.copy() for k, v in self.masks.items()}
        return out

    def weights_equal(self, other: "ModelGraph") -> bool:
        mine, theirs = self.parameters(), other.parameters()
        if len(mine) != len(theirs):
            return False
        return all(a[2].data.shape == b[2].data.shape
                   and np.array_equal(a[2].data, b[2].data)
                   for a, b in zip(mine, theirs))

    # -- forward -------------------------------------------------------------
    def _check_input(self, x: np.ndarray):
        if self.input_kind == "token_seq":
            max_len = self.input_shape[0]
            if x.ndim != 2:
                raise DimensionError(f"{self.name or 'model'}: token input must be "
                                     f"(batch, length), got shape {x.shape}")
            if not 1 <= x.shape[1] <= max_len:
                raise DimensionError(f"{self.name or 'model'}: sequence length "
                                     f"{x.shape[1]} exceeds maximum {max_len}")
            return
        if x.shape[1:] != self.input_shape:
            raise DimensionError(f"{self.name or 'model'}: input sample shape "
                                 f"{x.shape[1:]} != expected {self.input_shape}")

    def forward(self, x, mode: str = "infer", rng=None, trace=None) -> Tensor:
        """Run the graph. Deterministic in infer mode; train mode consumes
        ``rng`` for dropout (same seed, same outputs, bit for bit)."""
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        if mode == "train" and self._has_dropout and rng is None:
            raise ValueError("train-mode forward needs an rng (dropout present)")
        cur = as_tensor(x, dtype=self.dtype)
        if cur.data.dtype != self.dtype:
            cur = Tensor(cur.data.astype(self.dtype))
        self._check_input(cur.data)
        saved: dict[int, Tensor] = {}
        for i, spec in enumerate(self.layers):
            if trace is not None and has_kink(spec):
                trace.append((i, spec, cur))
            if spec.kind == "concat_skip":
                cur = ops.concat([cur, saved[spec.params["source"]]], axis=1)
            else:
                cur = apply_layer(spec, cur, self.params.get(i, {}),
                                  self.state.get(i), mode, rng)
            if i in self._skip_sources:
                saved[i] = cur
        return cur

    # -- architecture (de)serialization ---------------------------------------
    def spec_dict(self) -> dict:
        return {
            "name": self.name,
            "input_kind": self.input_kind,
            "input_shape": list(self.input_shape),
            "output_kind": self.output_kind,
            "seed": self.seed,
            "layers": [s.to_dict() for s in self.layers],
        }

    @classmethod
    def from_spec(cls, spec: dict, dtype=np.float32) -> "ModelGraph":
        return cls([LayerSpec.from_dict(d) for d in spec["layers"]],
                   tuple(spec["input_shape"]), spec["input_kind"],
                   spec["output_kind"], seed=spec.get("seed", 0), dtype=dtype,
                   name=spec.get("name", ""))
