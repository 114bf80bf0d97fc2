"""Writer for the engine's single-tensor container files.

This is an independent implementation of the documented byte contract,
kept free of any engine imports so the two packages only meet on disk:

====================  ========================================
bytes                 meaning
====================  ========================================
0-3                   magic ``b"TIMO"``
4-7                   format version, uint32 little-endian (=1)
8                     dtype code, uint8 (0 = float32 LE)
9                     rank, uint8 (1, 2 or 3)
10 .. 10+4*rank       dims, uint32 little-endian each
rest                  payload, row-major float32
====================  ========================================

The reader exists so tests can verify round trips without the engine.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExtractError

MAGIC = b"TIMO"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sIBB")


def write_tensor(path, array) -> None:
    """Write ``array`` (rank 1-3, converted to float32) to ``path``."""
    arr = np.asarray(array)
    if arr.ndim not in (1, 2, 3):
        raise ExtractError(f"tensor rank must be 1-3, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ExtractError(f"tensor dims must be >= 1, got {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read one tensor back; validates the full layout."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ExtractError(f"{path}: truncated header")
    magic, version, dtype, rank = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ExtractError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ExtractError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise ExtractError(f"{path}: unsupported dtype code {dtype}")
    if rank not in (1, 2, 3):
        raise ExtractError(f"{path}: rank must be 1-3, got {rank}")
    dims_end = _HEADER.size + 4 * rank
    if len(blob) < dims_end:
        raise ExtractError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, _HEADER.size)
    if any(d < 1 for d in dims):
        raise ExtractError(f"{path}: dims must be >= 1, got {dims}")
    expected = dims_end + 4 * int(np.prod(dims))
    if len(blob) != expected:
        raise ExtractError(f"{path}: payload size {len(blob) - dims_end} does "
                           f"not match dims {dims}")
    flat = np.frombuffer(blob, dtype="<f4", offset=dims_end)
    return flat.reshape(dims).copy()
