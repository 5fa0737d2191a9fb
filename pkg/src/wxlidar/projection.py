"""Triple-plane projection of per-point features onto YZ, XZ and XY grids.

Each pixel holds the mean feature vector of the points falling into it;
empty pixels hold zero. :func:`gather_back` reads pixel values back out
to the points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_xyz
from .wavelet import read_grid, write_grid

# plane name -> (axis dropped, in-plane axes)
PLANES = {"YZ": (0, (1, 2)), "XZ": (1, (0, 2)), "XY": (2, (0, 1))}
DEFAULT_RESOLUTION = (256, 256, 32)


def default_bounds(xyz, margin: float = 0.01) -> np.ndarray:
    """Axis-aligned bounding box grown by ``margin`` of its extent on each side.

    A flat axis (zero extent) gets a half-metre pad so the box stays valid.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    if xyz.shape[0] == 0:
        raise ValueError("cannot derive bounds from an empty cloud")
    lo, hi = xyz.min(axis=0), xyz.max(axis=0)
    ext = hi - lo
    pad = np.where(ext > 0, margin * ext, 0.5)
    return np.stack([lo - pad, hi + pad], axis=1)


def _check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=np.float64).reshape(3, 2)
    if not (np.isfinite(b).all() and (b[:, 1] > b[:, 0]).all()):
        raise ValueError(f"degenerate bounds {b.tolist()}")
    return b


def pixel_coords(xyz, bounds, resolution) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis integer bin of every point and an in-bounds flag.

    Coordinates equal to an upper bound clamp into the last bin.
    """
    b = _check_bounds(bounds)
    res = np.asarray(resolution, dtype=np.int64)
    xyz = np.asarray(xyz, dtype=np.float64)
    inside = ((xyz >= b[:, 0]) & (xyz <= b[:, 1])).all(axis=1)
    rel = (xyz - b[:, 0]) / (b[:, 1] - b[:, 0])
    idx = np.floor(rel * res).astype(np.int64)
    idx = np.clip(idx, 0, res - 1)
    return idx, inside


@dataclass(frozen=True, eq=False)
class PlaneProjection:
    plane: str
    resolution: tuple[int, int]
    bounds: np.ndarray  # (2, 2) metric extents of the two in-plane axes
    pixel_of_point: np.ndarray  # flat pixel id, -1 when out of bounds
    pixels: np.ndarray  # occupied flat pixel ids, ascending
    values: np.ndarray  # (len(pixels), C) mean features
    counts: np.ndarray  # (len(pixels),)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def grid(self) -> np.ndarray:
        """Dense ``(H, V, C)`` grid; computed on demand."""
        h, v = self.resolution
        g = np.zeros((h * v, self.channels))
        g[self.pixels] = self.values
        return g.reshape(h, v, self.channels)

    def count_grid(self) -> np.ndarray:
        h, v = self.resolution
        c = np.zeros(h * v, dtype=np.int64)
        c[self.pixels] = self.counts
        return c.reshape(h, v)

    def with_grid(self, grid) -> "PlaneProjection":
        """Same point-to-pixel assignment, pixel values taken from ``grid``."""
        g = np.asarray(grid, dtype=np.float64)
        h, v = self.resolution
        if g.ndim == 2:
            g = g[:, :, None]
        if g.shape[:2] != (h, v):
            raise ValueError(f"grid shape {g.shape} does not match resolution {self.resolution}")
        flat = g.reshape(h * v, -1)
        return PlaneProjection(self.plane, self.resolution, self.bounds, self.pixel_of_point,
                               np.arange(h * v), flat, self.count_grid().reshape(-1))

    def dump(self, path) -> None:
        write_grid(self.grid, path)


def _project_plane(plane, bins, inside, bounds, resolution, feats) -> PlaneProjection:
    _, (a0, a1) = PLANES[plane]
    h, v = int(resolution[a0]), int(resolution[a1])
    flat = np.where(inside, bins[:, a0] * v + bins[:, a1], -1)
    sel = flat >= 0
    pixels, inv, counts = np.unique(flat[sel], return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    sums = np.zeros((len(pixels), feats.shape[1]))
    np.add.at(sums, inv, feats[sel])
    values = sums / counts[:, None]
    return PlaneProjection(plane, (h, v), bounds[[a0, a1]].copy(), flat, pixels, values, counts)


def project_triple_planes(pc, features=None, resolutions=DEFAULT_RESOLUTION, bounds=None):
    """Mean-bin ``features`` onto the YZ, XZ and XY planes.

    ``resolutions`` is ``(rx, ry, rz)``: the YZ plane is ``ry x rz``, XZ is
    ``rx x rz`` and XY is ``rx x ry``. ``bounds`` is ``[[xlo, xhi], [ylo, yhi],
    [zlo, zhi]]``; by default the frame's padded bounding box. Points outside
    explicit bounds are left out of every plane.
    """
    xyz = as_xyz(pc)
    res = tuple(int(r) for r in resolutions)
    if len(res) != 3 or min(res) < 1:
        raise ValueError(f"resolutions must be three positive integers, got {resolutions}")
    if features is None:
        feats = pc.features() if hasattr(pc, "features") else xyz
    else:
        feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.shape[0] != xyz.shape[0]:
        raise ValueError("features and points differ in length")
    b = default_bounds(xyz) if bounds is None else _check_bounds(bounds)
    bins, inside = pixel_coords(xyz, b, res)
    return tuple(_project_plane(p, bins, inside, b, res, feats) for p in PLANES)


def gather_back(plane: PlaneProjection) -> np.ndarray:
    """Per-point feature read from its pixel; zeros for excluded points."""
    n = plane.pixel_of_point.shape[0]
    out = np.zeros((n, plane.channels))
    sel = plane.pixel_of_point >= 0
    pos = np.searchsorted(plane.pixels, plane.pixel_of_point[sel])
    out[sel] = plane.values[pos]
    return out


def load_plane_dump(path) -> np.ndarray:
    return read_grid(path)


class TriplePlaneProjector(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` fixes the bounds, ``transform`` projects.

    ``X`` is a :class:`~wxlidar.io.PointCloud` or an array whose first three
    columns are coordinates; ``features`` defaults to all remaining columns
    (or ``x, y, z, i, r`` for a cloud).
    """

    def __init__(self, resolution=DEFAULT_RESOLUTION, bounds=None):
        self.resolution = resolution
        self.bounds = bounds

    def fit(self, X, y=None):
        xyz = as_xyz(X)
        self.bounds_ = default_bounds(xyz) if self.bounds is None else _check_bounds(self.bounds)
        return self

    def transform(self, X, features=None):
        if features is None and not hasattr(X, "features"):
            a = np.asarray(X, dtype=np.float64)
            features = a[:, 3:] if a.shape[1] > 3 else a[:, :3]
        bounds = getattr(self, "bounds_", None)
        if bounds is None:
            self.fit(X)
            bounds = self.bounds_
        return project_triple_planes(X, features, self.resolution, bounds)

    def inverse_transform(self, planes):
        """Concatenated per-point features gathered from each plane."""
        return np.hstack([gather_back(p) for p in planes])
