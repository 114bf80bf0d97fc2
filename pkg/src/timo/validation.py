"""Input validation helpers used by estimators and bank constructors."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a float64 C-contiguous array and check its rank."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"{name}: expected a rank-{ndim} array, got rank {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: contains non-finite values")
    return np.ascontiguousarray(arr)


def as_matrix(x, name: str, n_cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D float array; a single row vector is promoted."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DataError(f"{name}: expected a matrix, got rank {arr.ndim}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise DataError(f"{name}: expected {n_cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name}: contains non-finite values")
    return np.ascontiguousarray(arr)


def as_labels(y, n_rows: int | None = None, n_classes: int | None = None) -> np.ndarray:
    """Coerce labels to int64, checking integrality, length and range."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DataError(f"labels: expected a 1-D array, got rank {arr.ndim}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise DataError("labels: values must be integers")
        arr = arr.astype(np.int64)
    elif arr.dtype.kind in "iu":
        arr = arr.astype(np.int64)
    else:
        raise DataError(f"labels: unsupported dtype {arr.dtype}")
    if n_rows is not None and arr.shape[0] != n_rows:
        raise DataError(f"labels: expected {n_rows} entries, got {arr.shape[0]}")
    if arr.size and arr.min() < 0:
        raise DataError("labels: negative class index")
    if n_classes is not None and arr.size and arr.max() >= n_classes:
        raise DataError(
            f"labels: class index {int(arr.max())} out of range for {n_classes} classes"
        )
    return arr


def group_by_class(X: np.ndarray, y: np.ndarray, n_classes: int) -> list[np.ndarray]:
    """Split sample rows into per-class blocks; every class must be non-empty."""
    groups: list[np.ndarray] = []
    for c in range(n_classes):
        block = X[y == c]
        if block.shape[0] == 0:
            raise DataError(f"class {c} has no samples")
        groups.append(block)
    return groups
