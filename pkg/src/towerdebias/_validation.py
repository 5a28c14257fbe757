"""Small input-validation helpers used by the estimators and metric functions."""

from __future__ import annotations

import numpy as np


def as_float_matrix(a, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d float64 array (1-d input becomes a single column)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1- or 2-dimensional, got ndim={arr.ndim}")
    check_finite(arr, name)
    return arr


def as_float_vector(a, name: str = "y") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values (NaN or Inf)")


def check_same_length(u: np.ndarray, v: np.ndarray, u_name: str = "u", v_name: str = "v") -> None:
    if len(u) != len(v):
        raise ValueError(
            f"{u_name} and {v_name} must have equal length, got {len(u)} and {len(v)}"
        )


def check_binary_labels(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isin(arr, (0.0, 1.0))):
        raise ValueError(f"{name} must contain only 0/1 labels")
