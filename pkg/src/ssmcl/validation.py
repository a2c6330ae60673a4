"""Input validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError, ShapeError


def as_array(a, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, checking rank and finiteness."""
    arr = np.asarray(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    return as_array(a, name, ndim=2)


def as_vector(a, name: str = "vector") -> np.ndarray:
    return as_array(a, name, ndim=1)


def check_conformable(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    """Raise unless a @ b is a valid matrix product."""
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(
            f"{name_a} has {a.shape[-1]} columns but {name_b} has {b.shape[0]} rows"
        )


def as_labels(y, name: str = "labels") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        cast = arr.astype(np.int64)
        if not np.array_equal(cast, arr):
            raise DomainError(f"{name} must hold integer class ids")
        arr = cast
    return arr.astype(np.int64)


def check_sequences(x, name: str = "X") -> np.ndarray:
    """Validate a batch of token sequences with shape (samples, tokens, features)."""
    arr = as_array(x, name, ndim=3)
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has an empty axis: shape {arr.shape}")
    return arr
