"""Differentiable operators covering the architectures this toolkit builds.

The operator set is fixed on purpose: convolutions (direct and transposed),
dense layers, batch norm, the four activations, dropout, the two losses, and
the shape/gather plumbing they need. Image tensors are row-major NCHW,
kernels OIHW. All ops preserve the dtype of their inputs (float32 by
default, float64 in verification mode).
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .core import Tensor, as_tensor, make_result

CE_CLAMP_MIN = 1e-7
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LEAKY_ALPHA = 0.2


def _check_same_dtype(op, *tensors):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise DimensionError(f"{op}: mixed dtypes {sorted(str(d) for d in dtypes)}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return make_result("add", out, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return make_result("sub", out, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def grad_fn(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return make_result("mul", out, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_dtype("matmul", a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return make_result("matmul", out, (a, b), grad_fn)


def tsum(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)
    return make_result("sum", out, (a,), lambda g: (np.broadcast_to(g, a.data.shape).astype(a.data.dtype),))


def tmean(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)
    n = a.data.size

    def grad_fn(g):
        return (np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype),)

    return make_result("mean", out, (a,), grad_fn)


# -- shape plumbing -----------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return make_result("reshape", out, (a,), lambda g: (g.reshape(a.data.shape),))


def flatten(a) -> Tensor:
    """Collapse all non-batch axes: (N, ...) -> (N, F)."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"flatten needs a batch axis, got shape {a.shape}")
    return reshape(a, (a.shape[0], -1))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = a.data.transpose(axes)
    return make_result("transpose", out, (a,), lambda g: (g.transpose(inverse),))


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    _check_same_dtype("concat", *tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return make_result("concat", out, tensors, grad_fn)


def pad2d(a, pad_h: int, pad_w: int) -> Tensor:
    """Zero-pad the two trailing spatial axes of an NCHW tensor."""
    a = as_tensor(a)
    if a.ndim != 4:
        raise DimensionError(f"pad2d needs NCHW input, got shape {a.shape}")
    if pad_h < 0 or pad_w < 0:
        raise DimensionError("pad2d padding must be nonnegative")
    out = np.pad(a.data, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    h, w = a.shape[2], a.shape[3]

    def grad_fn(g):
        return (g[:, :, pad_h:pad_h + h, pad_w:pad_w + w],)

    return make_result("pad2d", out, (a,), grad_fn)


# -- convolution --------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int,
            oh: int, ow: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N, C*kh*kw, oh*ow) patch matrix."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride,
                                  j:j + stride * ow:stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _conv2d_raw(x: np.ndarray, kernel: np.ndarray, stride: int, padding: int):
    n, ci, h, w = x.shape
    co, _, kh, kw = kernel.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) \
        if padding else x
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    out = np.matmul(kernel.reshape(co, -1), cols).reshape(n, co, oh, ow)
    return out, cols


def _conv_input_scatter(g: np.ndarray, kernel: np.ndarray, stride: int,
                        padding: int, target_hw: tuple) -> np.ndarray:
    """Scatter conv-output-space values back through the kernel.

    This single routine is both conv2d's input gradient and
    conv2d_transpose's forward map, which makes the transpose the adjoint
    of the convolution by construction.
    """
    n, co, gh, gw = g.shape
    _, ci, kh, kw = kernel.shape
    th, tw = target_hw
    full = np.zeros((n, ci, th + 2 * padding, tw + 2 * padding), dtype=g.dtype)
    kmat = kernel.reshape(co, -1)                       # (co, ci*kh*kw)
    cols = np.matmul(kmat.T, g.reshape(n, co, gh * gw))  # (n, ci*kh*kw, gh*gw)
    cols = cols.reshape(n, ci, kh, kw, gh, gw)
    for i in range(kh):
        for j in range(kw):
            full[:, :, i:i + stride * gh:stride,
                 j:j + stride * gw:stride] += cols[:, :, i, j]
    if padding:
        return full[:, :, padding:padding + th, padding:padding + tw]
    return full


def _check_conv_args(op, x, kernel, stride, padding):
    if x.ndim != 4:
        raise DimensionError(f"{op}: input must be NCHW, got shape {x.shape}")
    if kernel.ndim != 4:
        raise DimensionError(f"{op}: kernel must be 4-d, got shape {kernel.shape}")
    if stride < 1:
        raise DimensionError(f"{op}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise DimensionError(f"{op}: padding must be >= 0, got {padding}")


def conv2d(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with an OIHW kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_same_dtype("conv2d", x, kernel)
    _check_conv_args("conv2d", x, kernel, stride, padding)
    n, ci, h, w = x.shape
    co, ki, kh, kw = kernel.shape
    if ci != ki:
        raise DimensionError(f"conv2d: input has {ci} channels but kernel "
                             f"expects {ki} (kernel shape {kernel.shape})")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded "
                             f"input {h + 2 * padding}x{w + 2 * padding}")
    out, cols = _conv2d_raw(x.data, kernel.data, stride, padding)

    def grad_fn(g):
        gmat = g.reshape(n, co, -1)
        dk = np.matmul(gmat, cols.transpose(0, 2, 1)).sum(axis=0)
        dx = _conv_input_scatter(g, kernel.data, stride, padding, (h, w))
        return dx, dk.reshape(kernel.data.shape)

    return make_result("conv2d", out, (x, kernel), grad_fn)


def conv2d_transpose(x, kernel, stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; kernel layout (in_channels, out_channels, kh, kw).

    Output spatial dims are (in - 1) * stride - 2 * padding + k. The forward
    map equals conv2d's backward-by-input with the same parameters, so
    <conv2d(x, k), y> == <x, conv2d_transpose(y, k)> holds exactly.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _check_same_dtype("conv2d_transpose", x, kernel)
    _check_conv_args("conv2d_transpose", x, kernel, stride, padding)
    n, ci, h, w = x.shape
    ki, co, kh, kw = kernel.shape
    if ci != ki:
        raise DimensionError(f"conv2d_transpose: input has {ci} channels but "
                             f"kernel expects {ki} (kernel shape {kernel.shape})")
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv2d_transpose: output dims {oh}x{ow} collapse "
                             f"for input {h}x{w}, kernel {kh}x{kw}, "
                             f"stride {stride}, padding {padding}")
    out = _conv_input_scatter(x.data, kernel.data, stride, padding, (oh, ow))

    def grad_fn(g):
        # dx is a plain conv2d of g; its patch matrix also yields dk
        dx, cols_g = _conv2d_raw(g, kernel.data, stride, padding)
        gk = np.matmul(x.data.reshape(n, ci, -1), cols_g.transpose(0, 2, 1))
        return dx, gk.sum(axis=0).reshape(kernel.data.shape)

    return make_result("conv2d_transpose", out, (x, kernel), grad_fn)


# -- dense --------------------------------------------------------------------

def dense(x, weight, bias) -> Tensor:
    """Affine map: (N, F) @ (F, G) + (G,)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _check_same_dtype("dense", x, weight, bias)
    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError(f"dense needs 2-d input and weight, got "
                             f"{x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"dense inner dims differ: input {x.shape} vs "
                             f"weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"dense bias shape {bias.shape} does not match "
                             f"weight columns {weight.shape[1]}")
    out = x.data @ weight.data + bias.data

    def grad_fn(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return make_result("dense", out, (x, weight, bias), grad_fn)


# -- batch norm ---------------------------------------------------------------

class BatchNormState:
    """Running statistics for one batch-norm layer (per-channel)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def astype(self, dtype) -> "BatchNormState":
        out = BatchNormState(self.running_mean.shape[0], dtype)
        out.running_mean = self.running_mean.astype(dtype)
        out.running_var = self.running_var.astype(dtype)
        return out


def batch_norm(x, gamma, beta, state: BatchNormState, mode: str = "train",
               eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> Tensor:
    """Per-channel normalization of NCHW input.

    Train mode normalizes with batch statistics and folds them into the
    running stats (new = momentum * old + (1 - momentum) * batch); infer
    mode uses the running stats. Train mode requires batch size >= 2.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _check_same_dtype("batch_norm", x, gamma, beta)
    if x.ndim != 4:
        raise DimensionError(f"batch_norm needs NCHW input, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batch_norm gamma/beta must have shape ({c},), "
                             f"got {gamma.shape} and {beta.shape}")
    if mode not in ("train", "infer"):
        raise ValueError(f"batch_norm mode must be 'train' or 'infer', got {mode!r}")
    br = (1, c, 1, 1)

    if mode == "train":
        if x.shape[0] < 2:
            raise DimensionError("batch_norm in train mode needs batch size >= 2")
        axes = (0, 2, 3)
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu.reshape(br)) * inv.reshape(br)
        out = gamma.data.reshape(br) * xhat + beta.data.reshape(br)
        state.running_mean = (momentum * state.running_mean
                              + (1.0 - momentum) * mu).astype(x.data.dtype)
        state.running_var = (momentum * state.running_var
                             + (1.0 - momentum) * var).astype(x.data.dtype)

        def grad_fn(g):
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            dxhat = g * gamma.data.reshape(br)
            dx = (inv.reshape(br) / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(br)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(br))
            return dx, dgamma, dbeta

        return make_result("batch_norm", out, (x, gamma, beta), grad_fn)

    inv = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (x.data - state.running_mean.reshape(br)) * inv.reshape(br)
    out = gamma.data.reshape(br) * xhat + beta.data.reshape(br)

    def grad_fn(g):
        return (g * (gamma.data * inv).reshape(br),
                (g * xhat).sum(axis=(0, 2, 3)),
                g.sum(axis=(0, 2, 3)))

    return make_result("batch_norm", out, (x, gamma, beta), grad_fn)


# -- activations --------------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0)
    return make_result("relu", out, (x,), lambda g: (g * (x.data > 0),))


def leaky_relu(x, alpha: float = LEAKY_ALPHA) -> Tensor:
    x = as_tensor(x)
    out = np.where(x.data > 0, x.data, x.data * x.data.dtype.type(alpha))
    return make_result("leaky_relu", out, (x,),
                       lambda g: (np.where(x.data > 0, g, g * x.data.dtype.type(alpha)),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), grad_fn)


# -- dropout ------------------------------------------------------------------

def dropout(x, rate: float, mode: str = "train",
            rng: np.random.Generator | None = None) -> Tensor:
    """Zero elements with probability ``rate``; scale survivors by 1/(1-rate).

    Identity in infer mode. A fixed rng seed reproduces the mask bit-exactly.
    """
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ValueError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs a seeded rng")
    keep = (rng.random(x.shape) >= rate)
    scale = x.data.dtype.type(1.0 / (1.0 - rate))
    mask = keep.astype(x.data.dtype) * scale
    out = x.data * mask
    return make_result("dropout", out, (x,), lambda g: (g * mask,))


# -- losses -------------------------------------------------------------------

def cross_entropy(pred, target) -> Tensor:
    """Mean over the batch of -sum(target * log(pred)).

    Predictions are clamped to [1e-7, 1] before the log; rows are expected
    to be probability distributions over the trailing class axis.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_dtype("cross_entropy", pred, target)
    if pred.shape != target.shape:
        raise DimensionError(f"cross_entropy shapes differ: {pred.shape} vs "
                             f"{target.shape}")
    if pred.ndim != 2:
        raise DimensionError(f"cross_entropy needs (batch, classes) inputs, "
                             f"got shape {pred.shape}")
    n = pred.shape[0]
    clamped = np.clip(pred.data, CE_CLAMP_MIN, 1.0)
    logp = np.log(clamped)
    out = np.asarray(-(target.data * logp).sum() / n, dtype=pred.data.dtype)
    in_range = (pred.data >= CE_CLAMP_MIN) & (pred.data <= 1.0)

    def grad_fn(g):
        dpred = np.where(in_range, -target.data / clamped, 0.0) * (g / n)
        dtarget = -logp * (g / n)
        return dpred.astype(pred.data.dtype), dtarget.astype(target.data.dtype)

    return make_result("cross_entropy", out, (pred, target), grad_fn)


def mse(pred, target) -> Tensor:
    """Mean squared difference over all elements."""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_same_dtype("mse", pred, target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray((diff * diff).mean(), dtype=pred.data.dtype)
    scale = 2.0 / diff.size

    def grad_fn(g):
        d = (diff * (g * scale)).astype(pred.data.dtype)
        return d, -d

    return make_result("mse", out, (pred, target), grad_fn)


# -- gather / pool ------------------------------------------------------------

def embedding(ids: np.ndarray, weight) -> Tensor:
    """Look up id sequences (N, L) in an embedding table (V, D) -> (N, L, D)."""
    weight = as_tensor(weight)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        if not np.all(ids == np.round(ids)):
            raise DimensionError("embedding ids must be integers")
        ids = ids.astype(np.int64)
    if ids.ndim != 2:
        raise DimensionError(f"embedding ids must be (batch, length), got "
                             f"shape {ids.shape}")
    v = weight.shape[0]
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= v:
        raise DimensionError(f"embedding ids out of range [0, {v})")
    out = weight.data[ids]

    def grad_fn(g):
        dw = np.zeros_like(weight.data)
        np.add.at(dw, ids, g)
        return (dw,)

    return make_result("embedding", out, (weight,), grad_fn)


def global_max_pool(x) -> Tensor:
    """Max over the spatial axes of an NCHW tensor -> (N, C)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"global_max_pool needs NCHW input, got {x.shape}")
    n, c = x.shape[:2]
    flat = x.data.reshape(n, c, -1)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def grad_fn(g):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, idx[:, :, None], g[:, :, None], axis=2)
        return (dflat.reshape(x.data.shape),)

    return make_result("global_max_pool", out, (x,), grad_fn)


# -- operator sugar on Tensor ------------------------------------------------

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__neg__ = lambda self: neg(self)
Tensor.__matmul__ = lambda self, other: matmul(self, other)
