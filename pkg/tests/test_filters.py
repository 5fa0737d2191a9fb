import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

import oracles
from wxlidar.filters import (DynamicStatisticalOutlierRemoval, RadiusOutlierRemoval, apply_mask,
                             dror_filter, dror_radii, dsor_filter, make_filter, mean_knn_distance,
                             ror_filter, sor_filter)
from wxlidar.io import LabelSet, PointCloud, to_noise_mask
from wxlidar.metrics import confusion, metrics
from wxlidar.synthetic import lidar_scene
from wxlidar.weather import SnowParams, simulate_snow


def cloud(xyz):
    xyz = np.asarray(xyz, dtype=np.float64)
    return PointCloud(xyz, np.zeros(len(xyz)))


def random_cloud(seed, n):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-20, 20, (3, 3))
    pts = centers[rng.integers(0, 3, n)] + rng.normal(scale=rng.uniform(0.2, 2.0), size=(n, 3))
    return cloud(pts)


# -- SOR -------------------------------------------------------------------------


def test_sor_on_cube_lattice_flags_nothing():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    pc = cloud(corners)
    for s in (0.0, 0.5, 3.0):
        assert not sor_filter(pc, k=3, s=s).any()


def test_sor_far_point():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.uniform(0, 1, (10, 3)), [[100, 0, 0]]])
    mask = sor_filter(cloud(pts), k=3, s=1.0)
    assert mask.tolist() == [False] * 10 + [True]
    assert mask.tolist() == oracles.sor(pts, 3, 1.0).tolist()


def test_sor_huge_s_flags_nothing():
    pc = random_cloud(1, 200)
    assert not sor_filter(pc, s=1e12).any()


def test_k_out_of_range():
    pc = cloud(np.random.default_rng(0).normal(size=(5, 3)))
    for k in (0, 5):
        with pytest.raises(ValueError):
            sor_filter(pc, k=k)
        with pytest.raises(ValueError):
            dsor_filter(pc, k=k)


def test_mean_knn_distance_excludes_self():
    pc = cloud([[0, 0, 0], [1, 0, 0], [3, 0, 0]])
    np.testing.assert_allclose(mean_knn_distance(pc, None, 1), [1, 1, 2])
    np.testing.assert_allclose(mean_knn_distance(pc, None, 2), [2, 1.5, 2.5])


# -- ROR / DROR --------------------------------------------------------------------


def test_ror_isolated_and_pair():
    assert ror_filter(cloud([[0, 0, 0]]), radius=1.0, min_neighbors=1).tolist() == [True]
    pair = cloud([[0, 0, 0], [0.5, 0, 0]])
    assert ror_filter(pair, radius=1.0, min_neighbors=1).tolist() == [False, False]
    with pytest.raises(ValueError):
        ror_filter(pair, radius=0.0)


def test_dror_radius_at_origin():
    pc = cloud([[0, 0, 5], [10, 0, 0]])
    r = dror_radii(pc, 0.0035, 3.0, 0.04)
    assert r[0] == 0.04
    assert r[1] == pytest.approx(3.0 * 10 * 0.0035)


def test_dror_rejects_non_positive():
    with pytest.raises(ValueError):
        dror_filter(cloud([[1, 0, 0]]), multiplier=0.0)


def _cluster(center, spacing, n=3):
    g = np.arange(n) * spacing
    offs = np.array([[a, b, c] for a in g for b in g for c in g])
    return offs - offs.mean(0) + center


def test_dror_keeps_far_sparse_cluster_and_flags_near_noise():
    near = _cluster([5, 0, 0], 0.02)
    far = _cluster([50, 0, 0], 0.2)  # sampling gets sparser with range
    noise = np.array([[3, 2, 0], [4, -2, 1]])
    pts = np.vstack([near, far, noise])
    params = dict(angular_res=0.0035, multiplier=3.0, radius_min=0.04, min_neighbors=3)
    mask = dror_filter(cloud(pts), **params)
    assert mask.tolist() == oracles.dror(pts, *params.values()).tolist()
    assert not mask[:27].any()
    assert not mask[27:54].any()
    assert mask[54:].all()
    # a fixed radius sized for the near cluster rejects the whole far cluster
    assert ror_filter(cloud(pts), radius=0.04, min_neighbors=3)[27:54].all()


def test_dror_huge_multiplier_flags_only_points_without_enough_neighbours():
    pts = np.vstack([_cluster([10, 0, 0], 0.5), [[0, 0, 0.0]]])
    mask = dror_filter(cloud(pts), multiplier=1e9, min_neighbors=3)
    assert not mask[:-1].any()
    # the origin point keeps radius_min, far from everything
    assert mask[-1]


# -- DSOR ------------------------------------------------------------------------------


def test_dsor_huge_range_multiplier_flags_nothing():
    assert not dsor_filter(random_cloud(3, 200), range_multiplier=1e9).any()


def test_dsor_two_clusters_and_one_near_sparse_point():
    near = _cluster([5, 0, 0], 0.1)
    far = _cluster([50, 0, 0], 0.1)
    lone = np.array([[1.0, 1.0, 0.0]])
    pts = np.vstack([near, far, lone])
    params = dict(k=4, s=0.01, range_multiplier=0.5)
    mask = dsor_filter(cloud(pts), **params)
    assert mask.tolist() == oracles.dsor(pts, *params.values()).tolist()
    assert mask.tolist() == [False] * 54 + [True]


def _two_ring_scan(n_az=360):
    az = np.linspace(0, 2 * np.pi, n_az, endpoint=False)
    rings = [np.column_stack([r * np.cos(az), r * np.sin(az), np.full(n_az, -1.5)]) for r in (5.0, 50.0)]
    return np.vstack(rings)


def test_sor_drops_distant_ring_that_dsor_keeps():
    pts = _two_ring_scan()
    pc = cloud(pts)
    far = np.arange(len(pts)) >= len(pts) // 2
    sor = sor_filter(pc, k=4, s=0.5)
    dsor = dsor_filter(pc, k=4, s=0.01, range_multiplier=0.05)
    assert sor[far].all() and not sor[~far].any()
    assert not dsor.any()


# -- oracle equivalence -------------------------------------------------------------------


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(12, 150))
def test_filters_match_brute_force(seed, n):
    pc = random_cloud(seed, n)
    xyz = pc.xyz.astype(np.float64)
    assert sor_filter(pc, k=5, s=1.0).tolist() == oracles.sor(xyz, 5, 1.0).tolist()
    assert ror_filter(pc, radius=1.0, min_neighbors=3).tolist() == oracles.ror(xyz, 1.0, 3).tolist()
    assert (dror_filter(pc, angular_res=0.01, multiplier=3.0, radius_min=0.3, min_neighbors=2).tolist()
            == oracles.dror(xyz, 0.01, 3.0, 0.3, 2).tolist())
    assert dsor_filter(pc, k=5, s=0.1, range_multiplier=0.05).tolist() == oracles.dsor(xyz, 5, 0.1, 0.05).tolist()


# -- invariances and monotonicity ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_rotation_invariance(seed):
    pc = random_cloud(seed, 300)
    xyz = pc.xyz.astype(np.float64)
    rot = Rotation.random(random_state=seed).as_matrix()
    rotated = cloud(xyz @ rot.T)
    # float32 storage perturbs distances slightly, so compare away from the threshold
    md = mean_knn_distance(pc, None, 10)
    t = md.mean() + md.std(ddof=1)
    safe = np.abs(md - t) > 1e-3 * t
    assert (sor_filter(pc)[safe] == sor_filter(rotated)[safe]).all()
    zrot = Rotation.from_euler("z", 37 + seed, degrees=True).as_matrix()
    zcloud = cloud(xyz @ zrot.T)
    r = dror_radii(pc, 0.0035, 3.0, 0.04)
    d = np.array([sorted(np.linalg.norm(xyz - p, axis=1))[1:4] for p in xyz])
    safe = np.abs(d[:, 2] - r) > 1e-4
    assert (dror_filter(pc)[safe] == dror_filter(zcloud)[safe]).all()
    tg = md.mean() + 0.01 * md.std(ddof=1)
    ti = tg * 0.05 * pc.range
    safe = np.abs(md - ti) > 1e-3 * ti
    assert (dsor_filter(pc)[safe] == dsor_filter(rotated)[safe]).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_monotonicity(seed):
    pc = random_cloud(seed, 200)
    sor_counts = [sor_filter(pc, s=s).sum() for s in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(sor_counts, sor_counts[1:]))
    radius_counts = [ror_filter(pc, radius=r).sum() for r in (0.1, 0.3, 0.6, 1.2, 2.4)]
    assert all(a >= b for a, b in zip(radius_counts, radius_counts[1:]))
    min_counts = [ror_filter(pc, radius=0.5, min_neighbors=m).sum() for m in (1, 2, 4, 8)]
    assert all(a <= b for a, b in zip(min_counts, min_counts[1:]))


# -- apply_mask -------------------------------------------------------------------------


def test_apply_mask_cases():
    pc = cloud(np.arange(15).reshape(5, 3))
    labels = LabelSet(np.arange(5, dtype=np.uint16) + 100)
    out, lab = apply_mask(pc, labels, np.zeros(5, bool))
    assert out.n == 5 and lab.codes.tolist() == [100, 101, 102, 103, 104]
    out, lab = apply_mask(pc, labels, np.ones(5, bool))
    assert out.n == 0 and len(lab) == 0
    mask = np.array([True, False, True, False, False])
    out, lab = apply_mask(pc, labels, mask)
    assert out.n == 3
    assert lab.codes.tolist() == [101, 103, 104]
    assert out.xyz[:, 0].tolist() == [3, 9, 12]
    with pytest.raises(ValueError):
        apply_mask(pc, labels, np.zeros(4, bool))


# -- estimators and the dense-snow scene ---------------------------------------------------


def test_estimator_api():
    pc = random_cloud(0, 100)
    est = make_filter("ror", radius=0.8)
    assert isinstance(est, RadiusOutlierRemoval)
    mask = est.fit_predict(pc)
    assert est.n_flagged_ == mask.sum()
    kept = est.transform(pc)
    assert kept.n == (~mask).sum()
    arr = pc.to_array()
    assert est.fit_transform(arr).shape == (kept.n, 4)
    with pytest.raises(ValueError):
        make_filter("median")


def dense_snow_scene(seed=0):
    pc, labels = lidar_scene(seed=seed)
    rng = np.random.default_rng(seed + 1000)
    return simulate_snow(pc, labels, SnowParams(3.0), rng=rng)


def test_dsor_on_dense_snow_scene():
    pc, labels = dense_snow_scene()
    gt = to_noise_mask(labels)
    mask = DynamicStatisticalOutlierRemoval().fit_predict(pc)
    m = metrics(confusion(mask, gt))
    fpr = (mask & ~gt).sum() / (~gt).sum()
    assert m.recall >= 90.0
    assert fpr <= 0.05
