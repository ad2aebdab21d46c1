"""Input validation helpers shared by the estimators and metric functions."""

from __future__ import annotations

import numpy as np


def check_real_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_binary_labels(y, name: str = "y") -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"{name} must contain only 0/1 labels")
    return y


def check_both_classes(y, name: str = "y") -> np.ndarray:
    y = check_binary_labels(y, name)
    if y.min() == y.max():
        raise ValueError(f"{name} must contain both classes")
    return y


def check_dim(actual: int, expected: int, name: str = "input") -> None:
    if actual != expected:
        raise ValueError(f"{name} has dimension {actual}, expected {expected}")
