"""Global magnitude pruning with persistent masks.

Zeroes the globally smallest-|w| fraction of conv/dense kernel weights.
Biases, batch-norm parameters, and embeddings are exempt. The mask rides
on the graph, survives serialization, and is re-applied after every
optimizer step, so no forward pass can resurrect a pruned weight.
"""
from __future__ import annotations

import numpy as np

from ..models.graph import ModelGraph
from ..pipeline.module import MlModule

PRUNABLE_KINDS = ("conv", "conv_transpose", "dense")


def prunable_parameters(graph: ModelGraph):
    """(layer index, name, tensor) for every kernel the pruner may touch."""
    out = []
    for i, name, t in graph.parameters():
        if name == "weight" and graph.layers[i].kind in PRUNABLE_KINDS:
            out.append((i, name, t))
    return out


def prune_graph(graph: ModelGraph, fraction: float) -> ModelGraph:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"prune fraction must be in [0, 1), got {fraction}")
    pruned = graph.copy()
    if fraction == 0.0:
        return pruned
    targets = prunable_parameters(pruned)
    sizes = [t.size for _, _, t in targets]
    total = int(sum(sizes))
    k = int(round(fraction * total))
    if k == 0:
        return pruned
    magnitudes = np.concatenate([np.abs(t.data).reshape(-1)
                                 for _, _, t in targets])
    # exact count: the k globally smallest magnitudes, stable under ties
    zero_flat = np.argsort(magnitudes, kind="stable")[:k]
    kill = np.zeros(total, dtype=bool)
    kill[zero_flat] = True
    offset = 0
    for (i, name, t), size in zip(targets, sizes):
        mask = (~kill[offset:offset + size]).astype(np.uint8).reshape(t.shape)
        pruned.masks[(i, name)] = mask
        offset += size
    pruned.apply_masks()
    return pruned


def prune_magnitude(module: MlModule, fraction: float,
                    module_id: str | None = None) -> MlModule:
    """Pruned copy of a graph-backed module; the original is untouched."""
    if module.graph is None:
        raise ValueError(f"module {module.id!r} has no network to prune")
    graph = prune_graph(module.graph, fraction)
    md = dict(module.metadata)
    md["pruned_fraction"] = float(fraction)
    return MlModule.from_graph(module_id or f"{module.id}-pruned", graph, md)


def zero_fraction(graph: ModelGraph) -> float:
    """Fraction of prunable weights currently exactly zero."""
    targets = prunable_parameters(graph)
    total = sum(t.size for _, _, t in targets)
    zeros = sum(int((t.data == 0).sum()) for _, _, t in targets)
    return zeros / max(total, 1)
