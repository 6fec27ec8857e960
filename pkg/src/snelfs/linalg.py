"""Small dense-matrix helpers shared by the rest of the package.

Matrices are plain ``float64`` numpy arrays. The functions here add the
shape and finiteness checks the other modules rely on; hot training loops
call numpy directly on arrays that were validated once on the way in.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    return as_matrix(a).T.copy()


def _same_shape(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def add(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a + b


def sub(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a - b


def hadamard(a, b) -> np.ndarray:
    a, b = _same_shape(a, b)
    return a * b


def scale(a, c: float) -> np.ndarray:
    return as_matrix(a) * float(c)


def column_sum_abs(a) -> np.ndarray:
    """Per-column sum of absolute values."""
    return np.abs(as_matrix(a)).sum(axis=0)
