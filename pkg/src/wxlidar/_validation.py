"""Input coercion shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .io import LabelSet, PointCloud


def as_cloud(X) -> PointCloud:
    """Accept a :class:`PointCloud` or an ``(n, 4|5)`` array."""
    if isinstance(X, PointCloud):
        return X
    a = check_array(X, dtype=np.float32, ensure_min_samples=0)
    return PointCloud.from_array(a)


def as_xyz(X) -> np.ndarray:
    """Float64 copy of the first three columns (or a cloud's coordinates)."""
    if isinstance(X, PointCloud):
        return X.xyz.astype(np.float64)
    a = check_array(X, dtype=np.float64, ensure_min_samples=0, ensure_min_features=3)
    return np.array(a[:, :3], dtype=np.float64)


def as_labels(y, n: int) -> LabelSet:
    if y is None:
        return LabelSet.zeros(n)
    labels = y if isinstance(y, LabelSet) else LabelSet(np.asarray(y))
    if len(labels) != n:
        raise ValueError(f"{len(labels)} labels for {n} points")
    return labels


def as_mask(mask, n: int | None = None) -> np.ndarray:
    m = np.asarray(mask, dtype=bool).reshape(-1)
    if n is not None and m.shape[0] != n:
        raise ValueError(f"mask has {m.shape[0]} entries, expected {n}")
    return m
