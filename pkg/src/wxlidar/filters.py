"""Statistical outlier filters for weather-noise removal.

Each filter yields a boolean noise mask (``True`` = flagged). Functional
forms take an optional prebuilt :class:`~wxlidar.spatial.SpatialIndex`;
the estimator classes wrap them with sklearn's parameter handling so they
can be grid-searched and cloned.

A point never counts as its own neighbour.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .io import LabelSet, PointCloud
from .spatial import SpatialIndex
from ._validation import as_cloud, as_mask

FILTERS = ("sor", "ror", "dror", "dsor")


def _index(pc: PointCloud, index: SpatialIndex | None) -> SpatialIndex:
    if index is None:
        return SpatialIndex(pc.xyz)
    if index.n != pc.n:
        raise ValueError("index was built over a different cloud")
    return index


def mean_knn_distance(pc: PointCloud, index: SpatialIndex | None, k: int) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest other points."""
    if not 1 <= k < pc.n:
        raise ValueError(f"k={k} must satisfy 1 <= k < n={pc.n}")
    index = _index(pc, index)
    _, dist = index.knn_all(k + 1)
    # self sits at distance 0 among the k+1 nearest, so the sum equals the
    # k nearest others even when duplicates reorder ids
    return dist.sum(axis=1) / k


def _global_threshold(mean_d: np.ndarray, s: float) -> float:
    sigma = mean_d.std(ddof=1) if mean_d.size > 1 else 0.0
    return float(mean_d.mean() + s * sigma)


def sor_filter(pc: PointCloud, index: SpatialIndex | None = None, k: int = 10, s: float = 1.0) -> np.ndarray:
    mean_d = mean_knn_distance(pc, index, k)
    return mean_d > _global_threshold(mean_d, s)


def ror_filter(pc: PointCloud, index: SpatialIndex | None = None, radius: float = 0.5,
               min_neighbors: int = 3) -> np.ndarray:
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    return _index(pc, index).radius_counts(radius) < min_neighbors


def dror_radii(pc: PointCloud, angular_res: float, multiplier: float, radius_min: float) -> np.ndarray:
    rho = np.hypot(pc.x.astype(np.float64), pc.y.astype(np.float64))
    return np.maximum(radius_min, multiplier * rho * angular_res)


def dror_filter(pc: PointCloud, index: SpatialIndex | None = None, angular_res: float = 0.0035,
                multiplier: float = 3.0, radius_min: float = 0.04, min_neighbors: int = 3) -> np.ndarray:
    for name, v in (("angular_res", angular_res), ("multiplier", multiplier), ("radius_min", radius_min)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    radii = dror_radii(pc, angular_res, multiplier, radius_min)
    return _index(pc, index).radius_counts(radii) < min_neighbors


def dsor_filter(pc: PointCloud, index: SpatialIndex | None = None, k: int = 10, s: float = 0.01,
                range_multiplier: float = 0.05) -> np.ndarray:
    mean_d = mean_knn_distance(pc, index, k)
    threshold = _global_threshold(mean_d, s) * range_multiplier * pc.range
    return mean_d > threshold


def apply_mask(pc: PointCloud, labels: LabelSet | None, mask):
    """Keep the points whose mask entry is ``False``, in order."""
    keep = ~as_mask(mask, pc.n)
    if labels is not None and len(labels) != pc.n:
        raise ValueError("labels and points differ in length")
    return pc.subset(keep), (None if labels is None else labels.subset(keep))


class _NoiseFilter(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_mask``."""

    def fit(self, X, y=None):
        pc = as_cloud(X)
        self.noise_mask_ = self._mask(pc, SpatialIndex(pc.xyz) if pc.n else None)
        self.n_flagged_ = int(self.noise_mask_.sum())
        return self

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).noise_mask_

    def transform(self, X):
        """Filtered cloud for the last fitted input."""
        pc = as_cloud(X)
        out, _ = apply_mask(pc, None, self.noise_mask_)
        return out if isinstance(X, PointCloud) else out.to_array()

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


class StatisticalOutlierRemoval(_NoiseFilter):
    def __init__(self, k: int = 10, std_ratio: float = 1.0):
        self.k = k
        self.std_ratio = std_ratio

    def _mask(self, pc, index):
        return sor_filter(pc, index, self.k, self.std_ratio)


class RadiusOutlierRemoval(_NoiseFilter):
    def __init__(self, radius: float = 0.5, min_neighbors: int = 3):
        self.radius = radius
        self.min_neighbors = min_neighbors

    def _mask(self, pc, index):
        return ror_filter(pc, index, self.radius, self.min_neighbors)


class DynamicRadiusOutlierRemoval(_NoiseFilter):
    """DROR: the search radius grows with horizontal range."""

    def __init__(self, angular_res: float = 0.0035, multiplier: float = 3.0,
                 radius_min: float = 0.04, min_neighbors: int = 3):
        self.angular_res = angular_res
        self.multiplier = multiplier
        self.radius_min = radius_min
        self.min_neighbors = min_neighbors

    def _mask(self, pc, index):
        return dror_filter(pc, index, self.angular_res, self.multiplier, self.radius_min, self.min_neighbors)


class DynamicStatisticalOutlierRemoval(_NoiseFilter):
    """DSOR: the global SOR threshold is scaled by each point's range."""

    def __init__(self, k: int = 10, std_ratio: float = 0.01, range_multiplier: float = 0.05):
        self.k = k
        self.std_ratio = std_ratio
        self.range_multiplier = range_multiplier

    def _mask(self, pc, index):
        return dsor_filter(pc, index, self.k, self.std_ratio, self.range_multiplier)


_BY_NAME = {
    "sor": StatisticalOutlierRemoval,
    "ror": RadiusOutlierRemoval,
    "dror": DynamicRadiusOutlierRemoval,
    "dsor": DynamicStatisticalOutlierRemoval,
}


def make_filter(name: str, **params) -> _NoiseFilter:
    try:
        cls = _BY_NAME[name.lower()]
    except KeyError:
        raise ValueError(f"unknown filter {name!r}; choose from {', '.join(FILTERS)}") from None
    return cls(**params)
