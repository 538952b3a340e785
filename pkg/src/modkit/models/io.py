"""Model files (".modk").

Layout: magic "MODK", version byte 1, little-endian u32 header length,
UTF-8 JSON header (architecture spec, signature, metadata, payload table),
then a little-endian float32 weight blob in canonical layer order,
followed by running statistics and any pruning masks (uint8). Round-trips
are bit-exact; the header stays human-readable for registry indexing.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import (BadMagicError, BadVersionError, SerializationError,
                      TruncatedPayloadError)
from .graph import ModelGraph

MAGIC = b"MODK"
VERSION = 1


def save_model(graph: ModelGraph, path, metadata: dict | None = None,
               signature: dict | None = None) -> None:
    if graph.dtype != np.float32:
        raise SerializationError(".modk stores float32 weights; convert the "
                                 f"model first (got {graph.dtype})")
    params = graph.parameters()
    states = graph.state_arrays()
    masks = sorted(graph.masks.items())
    header = {
        "format": "modk",
        "arch": graph.spec_dict(),
        "signature": signature or {},
        "metadata": metadata or {},
        "params": [{"layer": i, "name": n, "shape": list(t.shape)}
                   for i, n, t in params],
        "state": [{"layer": i, "name": n, "shape": list(a.shape)}
                  for i, n, a in states],
        "masks": [{"layer": i, "name": n, "shape": list(m.shape)}
                  for (i, n), m in masks],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, _, t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        for _, _, a in states:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        for _, m in masks:
            fh.write(np.ascontiguousarray(m, dtype=np.uint8).tobytes())


def read_header(path) -> dict:
    raw = Path(path).read_bytes()
    return _parse(raw, str(path))[0]


def _parse(raw: bytes, where: str):
    if len(raw) < 9:
        raise TruncatedPayloadError(f"{where}: truncated header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{where}: bad magic {raw[:4]!r}")
    if raw[4] != VERSION:
        raise BadVersionError(f"{where}: unsupported version {raw[4]}")
    (hlen,) = struct.unpack_from("<I", raw, 5)
    if len(raw) < 9 + hlen:
        raise TruncatedPayloadError(f"{where}: truncated header payload")
    try:
        header = json.loads(raw[9:9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializationError(f"{where}: unreadable header: {exc}") from exc
    return header, raw[9 + hlen:]


def load_model(path):
    """Rebuild a graph plus (metadata, signature) from a .modk file."""
    where = str(path)
    header, payload = _parse(Path(path).read_bytes(), where)
    graph = ModelGraph.from_spec(header["arch"])

    offset = 0

    def take(shape, dtype):
        nonlocal offset
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        need = count * dtype.itemsize
        if offset + need > len(payload):
            raise TruncatedPayloadError(f"{where}: truncated payload "
                                        f"(need {need} more bytes)")
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        offset += need
        return arr.reshape(shape).copy()

    expected = [(e["layer"], e["name"], tuple(e["shape"]))
                for e in header["params"]]
    actual = [(i, n, t.shape) for i, n, t in graph.parameters()]
    if expected != actual:
        raise SerializationError(f"{where}: parameter table does not match "
                                 f"the architecture spec")
    for i, name, shape in expected:
        graph.params[i][name].data = take(shape, np.dtype("<f4")).astype(np.float32)
    for e in header["state"]:
        arr = take(tuple(e["shape"]), np.dtype("<f4")).astype(np.float32)
        st = graph.state.get(e["layer"])
        if st is None:
            raise SerializationError(f"{where}: state for non-batch-norm "
                                     f"layer {e['layer']}")
        setattr(st, e["name"], arr)
    for e in header["masks"]:
        mask = take(tuple(e["shape"]), np.dtype(np.uint8))
        graph.masks[(e["layer"], e["name"])] = mask
    if offset != len(payload):
        raise SerializationError(f"{where}: {len(payload) - offset} trailing bytes")
    graph.apply_masks()
    return graph, header.get("metadata", {}), header.get("signature", {})
