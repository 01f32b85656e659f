"""Input checks shared by the estimators and the low-level layers."""

from __future__ import annotations

import numpy as np


def check_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a C-contiguous float64 2-D array with finite entries."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_X(X, n_features: int | None = None, name: str = "X") -> np.ndarray:
    X = check_matrix(X, name)
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_X_y(X, y, n_features: int | None = None):
    X = check_X(X, n_features)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError(f"y shape {y.shape} does not match X rows {X.shape[0]}")
    return X, y


def onehot_encode(y_idx: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((y_idx.shape[0], n_classes))
    out[np.arange(y_idx.shape[0]), y_idx] = 1.0
    return out


def check_rng(random_state) -> np.random.Generator:
    """Accept a seed or a Generator; always hand back a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)
