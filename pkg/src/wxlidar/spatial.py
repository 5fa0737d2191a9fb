"""Exact nearest-neighbour queries, voxel downsampling and neighbour feature assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from .io import LabelSet, PointCloud
from ._validation import as_xyz


class SpatialIndex:
    """Immutable k-d tree over 3D positions.

    Results are exact. Equal distances are ordered by ascending point id,
    which makes query output independent of tree layout.
    """

    def __init__(self, points):
        xyz = as_xyz(points)
        if xyz.shape[0] == 0:
            raise ValueError("cannot index an empty point cloud")
        self._xyz = xyz
        self._xyz.setflags(write=False)
        self._tree = cKDTree(xyz)

    @property
    def n(self) -> int:
        return self._xyz.shape[0]

    @property
    def points(self) -> np.ndarray:
        return self._xyz

    def knn_all(self, k: int, query_ids=None) -> tuple[np.ndarray, np.ndarray]:
        """Neighbour ids and distances, shape ``(q, k)``, for the indexed points themselves."""
        if not 1 <= k <= self.n:
            raise ValueError(f"k={k} out of range for {self.n} points")
        ids = np.arange(self.n) if query_ids is None else np.asarray(query_ids, dtype=np.intp).reshape(-1)
        q = self._xyz[ids]
        kk = min(k + 1, self.n)
        dist, idx = self._tree.query(q, k=kk)
        dist = dist.reshape(len(ids), kk)
        idx = idx.reshape(len(ids), kk)
        # rows whose k-th and (k+1)-th distances tie may have lost an id-ordered candidate
        if kk > k:
            suspect = np.flatnonzero(dist[:, k - 1] >= dist[:, k])
        else:
            suspect = np.empty(0, dtype=np.intp)
        order = np.lexsort((idx, dist), axis=-1)
        dist = np.take_along_axis(dist, order, axis=1)[:, :k]
        idx = np.take_along_axis(idx, order, axis=1)[:, :k]
        for row in suspect:
            cand = np.asarray(self._tree.query_ball_point(q[row], dist[row, -1] * (1 + 1e-12) + 1e-300))
            d = np.linalg.norm(self._xyz[cand] - q[row], axis=1)
            o = np.lexsort((cand, d))[:k]
            idx[row], dist[row] = cand[o], d[o]
        return idx, dist

    def knn(self, query_id: int, k: int) -> list[tuple[int, float]]:
        idx, dist = self.knn_all(k, [query_id])
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]

    def radius_counts(self, radius) -> np.ndarray:
        """Neighbours within ``radius`` (inclusive) of every point, self excluded.

        ``radius`` may be a scalar or one value per point.
        """
        r = np.broadcast_to(np.asarray(radius, dtype=np.float64), (self.n,))
        if (r < 0).any():
            raise ValueError("radius must be non-negative")
        return self._tree.query_ball_point(self._xyz, r, return_length=True) - 1

    def radius_count(self, query_id: int, r: float) -> int:
        if r < 0:
            raise ValueError("radius must be non-negative")
        q = self._xyz[query_id]
        return len(self._tree.query_ball_point(q, r)) - 1


def build_spatial_index(pc) -> SpatialIndex:
    return SpatialIndex(pc)


def knn(index: SpatialIndex, query_id: int, k: int) -> list[tuple[int, float]]:
    return index.knn(query_id, k)


def radius_count(index: SpatialIndex, query_id: int, r: float) -> int:
    return index.radius_count(query_id, r)


# -- voxels ------------------------------------------------------------------


def voxel_keys(xyz: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(np.asarray(xyz, dtype=np.float64) / voxel_size).astype(np.int64)


@dataclass(frozen=True)
class VoxelGrid:
    voxel_size: float
    keys: np.ndarray  # (m, 3) distinct voxel keys, output order
    mapping: np.ndarray  # (n,) source point -> voxel row

    def members(self, voxel: int) -> np.ndarray:
        return np.flatnonzero(self.mapping == voxel)

    def __len__(self) -> int:
        return self.keys.shape[0]


def build_voxel_grid(xyz, voxel_size: float) -> VoxelGrid:
    if not voxel_size > 0:
        raise ValueError(f"voxel size must be positive, got {voxel_size}")
    keys = voxel_keys(xyz, voxel_size)
    uniq, mapping = np.unique(keys, axis=0, return_inverse=True)
    return VoxelGrid(float(voxel_size), uniq, mapping.reshape(-1))


def _majority(codes: np.ndarray, mapping: np.ndarray, m: int) -> np.ndarray:
    # sorting by (voxel, code) puts each voxel's runs of equal codes together
    order = np.lexsort((codes, mapping))
    v, c = mapping[order], codes[order]
    start = np.ones(len(v), dtype=bool)
    start[1:] = (v[1:] != v[:-1]) | (c[1:] != c[:-1])
    run_starts = np.flatnonzero(start)
    run_len = np.diff(np.append(run_starts, len(v)))
    run_v, run_c = v[run_starts], c[run_starts]
    # for each voxel keep the longest run; ties go to the smallest code (first in sort)
    pick = np.lexsort((run_c, -run_len, run_v))
    first = np.ones(len(pick), dtype=bool)
    first[1:] = run_v[pick][1:] != run_v[pick][:-1]
    out = np.zeros(m, dtype=codes.dtype)
    out[run_v[pick][first]] = run_c[pick][first]
    return out


def voxel_downsample(pc: PointCloud, labels: LabelSet | None, voxel_size: float):
    """Average every non-empty voxel into one point.

    Returns ``(pc_ds, labels_ds, mapping)``; ``mapping[i]`` is the output row
    of source point ``i``. Labels take the majority code of the voxel
    (ties resolve to the smaller code); instance ids follow the same choice
    as the first member carrying the winning code.
    """
    grid = build_voxel_grid(pc.xyz, voxel_size)
    m = len(grid)
    counts = np.bincount(grid.mapping, minlength=m).astype(np.float64)
    xyz = np.empty((m, 3))
    for d in range(3):
        xyz[:, d] = np.bincount(grid.mapping, weights=pc.xyz[:, d].astype(np.float64), minlength=m) / counts
    inten = np.bincount(grid.mapping, weights=pc.intensity.astype(np.float64), minlength=m) / counts
    ring = None
    if pc.ring is not None:
        ring = np.bincount(grid.mapping, weights=pc.ring.astype(np.float64), minlength=m) / counts
    pc_ds = PointCloud(xyz, inten, ring)
    labels_ds = None
    if labels is not None:
        if len(labels) != pc.n:
            raise ValueError("labels and points differ in length")
        codes = _majority(labels.codes, grid.mapping, m)
        winner = np.flatnonzero(labels.codes == codes[grid.mapping])
        inst = np.zeros(m, dtype=np.uint16)
        # reversed assignment leaves the first matching member's id in place
        inst[grid.mapping[winner[::-1]]] = labels.instance[winner[::-1]]
        labels_ds = LabelSet(codes, inst)
    return pc_ds, labels_ds, grid.mapping


class VoxelDownsampler(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`voxel_downsample`.

    ``transform`` takes a :class:`PointCloud` or an ``(n, 4|5)`` array and
    returns the downsampled cloud in the same form. The source-to-voxel
    mapping of the last call is kept in ``mapping_``.
    """

    def __init__(self, voxel_size: float = 0.1):
        self.voxel_size = voxel_size

    def fit(self, X=None, y=None):
        if not self.voxel_size > 0:
            raise ValueError(f"voxel size must be positive, got {self.voxel_size}")
        return self

    def transform(self, X, labels: LabelSet | None = None):
        pc = X if isinstance(X, PointCloud) else PointCloud.from_array(X)
        pc_ds, labels_ds, mapping = voxel_downsample(pc, labels, self.voxel_size)
        self.mapping_ = mapping
        self.labels_ = labels_ds
        return pc_ds if isinstance(X, PointCloud) else pc_ds.to_array()


# -- neighbour features --------------------------------------------------------


def assemble_neighbor_features(pc: PointCloud, index: SpatialIndex | None, k: int) -> np.ndarray:
    """``(n, k, 15)`` blocks ``[p_i, p_i^k, p_i - p_i^k]`` over ``(x, y, z, i, r)``.

    Neighbours come from :meth:`SpatialIndex.knn_all`, so a point is its own
    first neighbour unless an exact duplicate with a smaller id exists.
    """
    if index is None:
        index = SpatialIndex(pc.xyz)
    if index.n != pc.n:
        raise ValueError("index was built over a different cloud")
    idx, _ = index.knn_all(k)
    feats = pc.features()
    center = np.broadcast_to(feats[:, None, :], (pc.n, k, 5))
    neigh = feats[idx]
    return np.concatenate([center, neigh, center - neigh], axis=2)
