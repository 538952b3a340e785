"""End-to-end gradient verification for whole architectures.

Runs a float64 copy of the model through a train-mode forward plus a loss,
then compares tape gradients against central finite differences on a
seeded subsample of parameter and input coordinates. Relu kinks and
max-pool ties make finite differences unreliable for coordinates whose
+h/-h evaluations land in different activation regimes, so each coordinate
is validated by comparing the two regime signatures and skipped (another
coordinate is drawn) when they differ.
"""
from __future__ import annotations

import numpy as np

from ..tensor import ops
from ..tensor.core import Tensor, backward
from .graph import ModelGraph
from .layers import kink_pattern


def _loss_fn(graph: ModelGraph, target: np.ndarray):
    t = Tensor(target, dtype=np.float64)
    if graph.output_kind == "class_dist":
        return lambda out: ops.cross_entropy(out, t)
    return lambda out: ops.mse(out, t)


def _make_target(graph: ModelGraph, batch: int, rng: np.random.Generator):
    if graph.output_kind == "class_dist":
        k = graph.output_shape[0]
        return np.eye(k)[rng.integers(0, k, size=batch)]
    return rng.uniform(0.2, 0.8, size=(batch,) + graph.output_shape)


def _make_input(graph: ModelGraph, batch: int, rng: np.random.Generator):
    if graph.input_kind == "token_seq":
        vocab = graph.layers[0].params["vocab_size"]
        return rng.integers(0, vocab, size=(batch, graph.input_shape[0]))
    return rng.uniform(-1.0, 1.0, size=(batch,) + graph.input_shape)


def _signature(trace) -> list[np.ndarray]:
    return [kink_pattern(spec, t) for _, spec, t in trace]


def _same_regime(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def model_gradient_check(graph: ModelGraph, *, batch: int = 2, seed: int = 0,
                         h: float = 1e-4, coords_per_tensor: int = 4,
                         check_input: bool = True) -> float:
    """Max relative error between tape and finite-difference gradients.

    rel = |fd - ad| / max(|fd|, |ad|, 1), central differences with step h,
    everything in float64.
    """
    rng = np.random.default_rng(seed)
    g64 = graph.astype(np.float64)
    x_raw = _make_input(g64, batch, rng)
    target = _make_target(g64, batch, rng)
    loss_of = _loss_fn(g64, target)
    drop_seed = seed + 17

    x = Tensor(np.asarray(x_raw, dtype=np.float64), dtype=np.float64)
    token_model = g64.input_kind == "token_seq"
    if check_input and not token_model:
        x.requires_grad = True

    def evaluate(collect: bool = False):
        trace: list | None = [] if collect else None
        out = g64.forward(x, mode="train",
                          rng=np.random.default_rng(drop_seed), trace=trace)
        loss = loss_of(out)
        if collect:
            return loss, _signature(trace)
        return loss

    g64.zero_grad()
    x.zero_grad()
    loss = evaluate()
    backward(loss)

    tensors = [t for _, _, t in g64.parameters()]
    if check_input and not token_model:
        tensors.append(x)
    pick = np.random.default_rng(seed + 7)
    max_rel = 0.0
    for t in tensors:
        if t.grad is None:
            raise AssertionError("a parameter was missed by backward")
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        wanted = min(coords_per_tensor, flat.size)
        order = pick.permutation(flat.size)
        done = 0
        for c in order:
            if done >= wanted:
                break
            orig = flat[c]
            flat[c] = orig + h
            lp, sig_p = evaluate(collect=True)
            flat[c] = orig - h
            lm, sig_m = evaluate(collect=True)
            flat[c] = orig
            if not _same_regime(sig_p, sig_m):
                continue  # the step straddles a kink; draw another coordinate
            fd = (lp.item() - lm.item()) / (2.0 * h)
            ad = float(gflat[c])
            rel = abs(fd - ad) / max(abs(fd), abs(ad), 1.0)
            max_rel = max(max_rel, rel)
            done += 1
    return max_rel
