"""Ray-cast scenes that look like a spinning multi-beam LiDAR scan.

Used by the self-test command, the benchmarks and the test-suite: a flat
ground plane, a ring of building facades at azimuth-dependent distance and
a few box obstacles, sampled on a regular elevation x azimuth beam grid.
"""

from __future__ import annotations

import numpy as np

from .io import LabelSet, PointCloud

GROUND, BUILDING, CAR = 40, 50, 10


def beam_directions(n_rings: int = 32, n_azimuth: int = 1024, fov_up: float = 2.0,
                    fov_down: float = -24.8) -> np.ndarray:
    el = np.deg2rad(np.linspace(fov_up, fov_down, n_rings))
    az = np.linspace(-np.pi, np.pi, n_azimuth, endpoint=False)
    el, az = np.meshgrid(el, az, indexing="ij")
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1).reshape(-1, 3)


def _ray_box(origin_dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / origin_dirs
        t0 = lo * inv
        t1 = hi * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    return np.where((tmax >= tmin) & (tmin > 0), tmin, np.inf)


def lidar_scene(n_rings: int = 32, n_azimuth: int = 1024, sensor_height: float = 1.73,
                max_range: float = 100.0, seed: int = 0, noise: float = 0.005,
                i_max: float = 255.0, facade_distance: float = 60.0,
                fov=(15.0, -15.0)) -> tuple[PointCloud, LabelSet]:
    """Clean structured scan with semantic codes (ground 40, building 50, car 10)."""
    rng = np.random.default_rng(seed)
    dirs = beam_directions(n_rings, n_azimuth, *fov)
    az = np.arctan2(dirs[:, 1], dirs[:, 0])
    horiz = np.hypot(dirs[:, 0], dirs[:, 1])

    with np.errstate(divide="ignore"):
        t_ground = np.where(dirs[:, 2] < 0, -sensor_height / dirs[:, 2], np.inf)
    facade = facade_distance * (1.0 + 0.35 * np.cos(3 * az) + 0.18 * np.sin(5 * az))
    t_wall = facade / horiz
    t_car = np.full(len(dirs), np.inf)
    for cx, cy in ((8.0, 3.0), (-6.0, -5.0), (12.0, -9.0), (-14.0, 7.0)):
        lo = np.array([cx - 2.2, cy - 0.9, -sensor_height])
        hi = np.array([cx + 2.2, cy + 0.9, -sensor_height + 1.5])
        t_car = np.minimum(t_car, _ray_box(dirs, lo, hi))

    t = np.stack([t_ground, t_wall, t_car], axis=1)
    which = np.argmin(t, axis=1)
    dist = t[np.arange(len(t)), which]
    keep = dist < max_range
    dist = dist[keep] * (1.0 + noise * rng.standard_normal(keep.sum()))
    xyz = dirs[keep] * dist[:, None]
    codes = np.array([GROUND, BUILDING, CAR], dtype=np.uint16)[which[keep]]
    base = np.array([0.15, 0.35, 0.55])[which[keep]]
    inten = np.clip(base + 0.05 * rng.standard_normal(keep.sum()), 0.0, 1.0) * i_max
    return PointCloud(xyz, inten), LabelSet(codes)


def scene_with_points(n_points: int, seed: int = 0) -> tuple[PointCloud, LabelSet]:
    """Scene whose beam grid is sized to give roughly ``n_points`` returns."""
    n_rings = 64 if n_points > 40000 else 32
    n_az = int(np.ceil(n_points / n_rings * 1.02))
    return lidar_scene(n_rings=n_rings, n_azimuth=n_az, seed=seed)
