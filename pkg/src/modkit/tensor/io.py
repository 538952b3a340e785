"""Binary tensor files (".bt").

Layout: magic "BT01", one dtype byte (0 = f32, 1 = f64), one rank byte,
rank little-endian u32 dims, then raw little-endian element data.
Round-trips are bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, SerializationError, TruncatedPayloadError

MAGIC = b"BT01"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_bt(array: np.ndarray, path) -> None:
    array = np.asarray(array)
    if array.dtype not in _CODE_FOR:
        raise SerializationError(f".bt stores f32/f64 only, got dtype {array.dtype}")
    if array.ndim > 255:
        raise SerializationError(f".bt rank limit is 255, got {array.ndim}")
    if any(d > 0xFFFFFFFF for d in array.shape):
        raise SerializationError(f".bt dims exceed u32: {array.shape}")
    code = _CODE_FOR[array.dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([code, array.ndim]))
        for d in array.shape:
            fh.write(struct.pack("<I", d))
        fh.write(np.ascontiguousarray(array, dtype=_DTYPE_CODES[code]).tobytes())


def load_bt(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 6:
        raise TruncatedPayloadError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    code, rank = raw[4], raw[5]
    if code not in _DTYPE_CODES:
        raise SerializationError(f"{path}: unknown dtype code {code}")
    offset = 6
    if len(raw) < offset + 4 * rank:
        raise TruncatedPayloadError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
    offset += 4 * rank
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    need = count * dtype.itemsize
    if len(raw) < offset + need:
        raise TruncatedPayloadError(f"{path}: payload needs {need} bytes, "
                                    f"found {len(raw) - offset}")
    if len(raw) > offset + need:
        raise SerializationError(f"{path}: {len(raw) - offset - need} trailing bytes")
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    return arr.reshape(dims).copy()
