"""Input validation shared by the trainer and the estimator wrappers."""

from __future__ import annotations

import numpy as np


def check_feature_matrix(X, expected_cols: int | None = None) -> np.ndarray:
    """Coerce ``X`` to a C-contiguous float32 2-D array, validating shape."""
    arr = np.ascontiguousarray(X, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got ndim={arr.ndim}")
    if expected_cols is not None and arr.shape[1] != expected_cols:
        raise ValueError(f"expected {expected_cols} columns, got {arr.shape[1]}")
    if not np.isfinite(arr).all():
        raise ValueError("feature matrix contains NaN or infinity")
    return arr


def check_binary_labels(y, n_rows: int) -> np.ndarray:
    """Coerce ``y`` to an int8 0/1 vector with both classes present."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D label vector, got ndim={arr.ndim}")
    if arr.shape[0] != n_rows:
        raise ValueError(f"expected {n_rows} labels, got {arr.shape[0]}")
    values = set(np.unique(arr).tolist())
    if not values <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, found {sorted(values - {0, 1})}")
    if len(values) < 2:
        raise ValueError("degenerate labels: both classes must be present")
    return arr.astype(np.int8)
