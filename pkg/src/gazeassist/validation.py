"""Input validation helpers for array-shaped data entering the estimators."""

from __future__ import annotations

import numpy as np


def check_window_array(X, sw: int | None = None) -> np.ndarray:
    """Coerce X to a float64 (n, sw, 3) tensor and validate it.

    sw, when given, pins the expected window length.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected a 3-d window tensor (n, sw, 3), got shape {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("empty window batch")
    if X.shape[2] != 3:
        raise ValueError(f"expected 3 features per frame, got {X.shape[2]}")
    if sw is not None and X.shape[1] != sw:
        raise ValueError(f"expected window length {sw}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("window tensor contains non-finite values")
    return X


def check_binary_labels(y, n: int | None = None) -> np.ndarray:
    """Coerce labels to a float64 vector of {0, 1}."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("empty label vector")
    if n is not None and y.size != n:
        raise ValueError(f"expected {n} labels, got {y.size}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary (0/1)")
    return y


def check_sorted_times(t_us) -> np.ndarray:
    """Validate a strictly increasing microsecond clock."""
    t = np.asarray(t_us, dtype=np.int64)
    if t.ndim != 1:
        raise ValueError("expected a 1-d time vector")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        from .exceptions import StreamOrderError

        raise StreamOrderError("timestamps are not strictly increasing")
    return t
