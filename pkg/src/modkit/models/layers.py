"""Layer specifications: hyperparameters, parameter allocation, forward rules.

A ``LayerSpec`` is a plain description (kind + hyperparameters) that the
model graph turns into parameters and tape operations. Kernel and padding
accept either an int or an (h, w) pair; strides are scalar.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from ..tensor import ops
from ..tensor.core import Tensor
from ..tensor.ops import BatchNormState

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "softmax")
KINDS = ("conv", "conv_transpose", "dense", "batch_norm", "dropout",
         "activation", "flatten", "embedding", "global_max_pool", "concat_skip")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        kind = d.pop("kind")
        for key in ("kernel", "padding"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return cls(kind, d)


def _pair(v) -> tuple:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise ValueError(f"expected an int or (h, w) pair, got {v!r}")
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _positive(name, value, minimum=1):
    if int(value) < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


# -- spec constructors ---------------------------------------------------------

def conv(channels: int, kernel=3, stride: int = 1, padding=0) -> LayerSpec:
    kh, kw = _pair(kernel)
    ph, pw = _pair(padding)
    return LayerSpec("conv", {"channels": _positive("channels", channels),
                              "kernel": (kh, kw),
                              "stride": _positive("stride", stride),
                              "padding": (_positive("padding", ph, 0),
                                          _positive("padding", pw, 0))})


def conv_transpose(channels: int, kernel=4, stride: int = 2, padding=1) -> LayerSpec:
    kh, kw = _pair(kernel)
    ph, pw = _pair(padding)
    return LayerSpec("conv_transpose", {"channels": _positive("channels", channels),
                                        "kernel": (kh, kw),
                                        "stride": _positive("stride", stride),
                                        "padding": (_positive("padding", ph, 0),
                                                    _positive("padding", pw, 0))})


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", {"units": _positive("units", units)})


def batch_norm() -> LayerSpec:
    return LayerSpec("batch_norm", {})


def dropout(rate: float) -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return LayerSpec("dropout", {"rate": float(rate)})


def activation(name: str, alpha: float | None = None, axis: int | None = None) -> LayerSpec:
    if name not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    params = {"name": name}
    if name == "leaky_relu":
        params["alpha"] = float(ops.LEAKY_ALPHA if alpha is None else alpha)
    if name == "softmax":
        params["axis"] = int(-1 if axis is None else axis)
    return LayerSpec("activation", params)


def flatten() -> LayerSpec:
    return LayerSpec("flatten", {})


def embedding(vocab_size: int, embed_dim: int) -> LayerSpec:
    return LayerSpec("embedding", {"vocab_size": _positive("vocab_size", vocab_size, 2),
                                   "embed_dim": _positive("embed_dim", embed_dim)})


def global_max_pool() -> LayerSpec:
    return LayerSpec("global_max_pool", {})


def concat_skip(source: int) -> LayerSpec:
    return LayerSpec("concat_skip", {"source": _positive("source", source, 0)})


# -- shape inference -----------------------------------------------------------

def infer_shape(spec: LayerSpec, in_shape: tuple, source_shape: tuple | None = None) -> tuple:
    """Per-sample output shape of one layer, validating composition."""
    kind, p = spec.kind, spec.params
    if kind in ("conv", "conv_transpose"):
        if len(in_shape) != 3:
            raise DimensionError(f"{kind} needs (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        kh, kw = p["kernel"]
        ph, pw = p["padding"]
        s = p["stride"]
        if kind == "conv":
            oh = (h + 2 * ph - kh) // s + 1
            ow = (w + 2 * pw - kw) // s + 1
        else:
            oh = (h - 1) * s - 2 * ph + kh
            ow = (w - 1) * s - 2 * pw + kw
        if oh < 1 or ow < 1:
            raise DimensionError(f"{kind} collapses {h}x{w} to {oh}x{ow} "
                                 f"(kernel {kh}x{kw}, stride {s}, padding {ph},{pw})")
        return (p["channels"], oh, ow)
    if kind == "dense":
        if len(in_shape) != 1:
            raise DimensionError(f"dense needs a flat feature input, got {in_shape}")
        return (p["units"],)
    if kind == "batch_norm":
        if len(in_shape) != 3:
            raise DimensionError(f"batch_norm needs (C, H, W) input, got {in_shape}")
        return in_shape
    if kind in ("dropout", "activation"):
        return in_shape
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "embedding":
        if len(in_shape) != 1:
            raise DimensionError(f"embedding needs a token-sequence input, got {in_shape}")
        return (p["embed_dim"], 1, in_shape[0])
    if kind == "global_max_pool":
        if len(in_shape) != 3:
            raise DimensionError(f"global_max_pool needs (C, H, W) input, got {in_shape}")
        return (in_shape[0],)
    if kind == "concat_skip":
        if source_shape is None:
            raise DimensionError("concat_skip has no recorded source output")
        if len(in_shape) != 3 or len(source_shape) != 3:
            raise DimensionError(f"concat_skip needs (C, H, W) operands, got "
                                 f"{in_shape} and {source_shape}")
        if in_shape[1:] != source_shape[1:]:
            raise DimensionError(f"concat_skip spatial dims differ: {in_shape} vs "
                                 f"{source_shape}")
        return (in_shape[0] + source_shape[0],) + in_shape[1:]
    raise ValueError(f"unknown layer kind {kind!r}")


# -- parameter allocation --------------------------------------------------------

def allocate(spec: LayerSpec, in_shape: tuple, rng: np.random.Generator,
             dtype=np.float32):
    """Returns (params dict of Tensors, BatchNormState or None)."""
    kind, p = spec.kind, spec.params
    if kind == "conv":
        ci = in_shape[0]
        kh, kw = p["kernel"]
        std = np.sqrt(2.0 / (ci * kh * kw))
        w = rng.normal(0.0, std, size=(p["channels"], ci, kh, kw))
        b = np.zeros(p["channels"])
        return {"weight": Tensor(w, requires_grad=True, dtype=dtype),
                "bias": Tensor(b, requires_grad=True, dtype=dtype)}, None
    if kind == "conv_transpose":
        ci = in_shape[0]
        kh, kw = p["kernel"]
        std = np.sqrt(2.0 / (ci * kh * kw))
        w = rng.normal(0.0, std, size=(ci, p["channels"], kh, kw))
        b = np.zeros(p["channels"])
        return {"weight": Tensor(w, requires_grad=True, dtype=dtype),
                "bias": Tensor(b, requires_grad=True, dtype=dtype)}, None
    if kind == "dense":
        fin = in_shape[0]
        std = np.sqrt(2.0 / fin)
        w = rng.normal(0.0, std, size=(fin, p["units"]))
        b = np.zeros(p["units"])
        return {"weight": Tensor(w, requires_grad=True, dtype=dtype),
                "bias": Tensor(b, requires_grad=True, dtype=dtype)}, None
    if kind == "batch_norm":
        c = in_shape[0]
        return {"gamma": Tensor(np.ones(c), requires_grad=True, dtype=dtype),
                "beta": Tensor(np.zeros(c), requires_grad=True, dtype=dtype)}, \
            BatchNormState(c, dtype)
    if kind == "embedding":
        w = rng.normal(0.0, 0.1, size=(p["vocab_size"], p["embed_dim"]))
        w[0] = 0.0  # pad id starts neutral
        return {"weight": Tensor(w, requires_grad=True, dtype=dtype)}, None
    return {}, None


# -- forward -----------------------------------------------------------------

def apply_layer(spec: LayerSpec, x: Tensor, params: dict,
                state: BatchNormState | None, mode: str,
                rng: np.random.Generator | None) -> Tensor:
    """Forward one layer (concat_skip is handled by the graph)."""
    kind, p = spec.kind, spec.params
    if kind in ("conv", "conv_transpose"):
        ph, pw = p["padding"]
        op = ops.conv2d if kind == "conv" else ops.conv2d_transpose
        if kind == "conv" and ph != pw:
            out = op(ops.pad2d(x, ph, pw), params["weight"], p["stride"], 0)
        else:
            if kind == "conv_transpose" and ph != pw:
                raise DimensionError("conv_transpose supports symmetric padding only")
            out = op(x, params["weight"], p["stride"], ph)
        c = p["channels"]
        return ops.add(out, ops.reshape(params["bias"], (1, c, 1, 1)))
    if kind == "dense":
        return ops.dense(x, params["weight"], params["bias"])
    if kind == "batch_norm":
        return ops.batch_norm(x, params["gamma"], params["beta"], state, mode)
    if kind == "dropout":
        return ops.dropout(x, p["rate"], mode, rng)
    if kind == "activation":
        name = p["name"]
        if name == "relu":
            return ops.relu(x)
        if name == "leaky_relu":
            return ops.leaky_relu(x, p["alpha"])
        if name == "sigmoid":
            return ops.sigmoid(x)
        return ops.softmax(x, p["axis"])
    if kind == "flatten":
        return ops.flatten(x)
    if kind == "embedding":
        out = ops.embedding(x.data, params["weight"])     # (N, L, D)
        out = ops.transpose(out, (0, 2, 1))               # (N, D, L)
        n, d, length = out.shape
        return ops.reshape(out, (n, d, 1, length))        # NCHW with H = 1
    if kind == "global_max_pool":
        return ops.global_max_pool(x)
    raise ValueError(f"apply_layer cannot handle kind {kind!r}")


def has_kink(spec: LayerSpec) -> bool:
    """Whether this layer's map is non-smooth in its input.

    Gradient verification traces the inputs of such layers so it can tell
    when a finite-difference step straddles a relu kink or max-pool tie.
    """
    if spec.kind == "activation":
        return spec.params["name"] in ("relu", "leaky_relu")
    return spec.kind == "global_max_pool"


def kink_pattern(spec: LayerSpec, x: Tensor) -> np.ndarray:
    """Discrete regime of a kinked layer (sign pattern or argmax indices)."""
    if spec.kind == "activation":
        return x.data > 0
    n, c = x.shape[:2]
    return x.data.reshape(n, c, -1).argmax(axis=2)
