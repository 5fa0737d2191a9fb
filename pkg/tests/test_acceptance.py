"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion also fails the run. Run only these
with ``pytest -m acceptance``.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

import oracles
from wxlidar.filters import dror_filter, dsor_filter, ror_filter, sor_filter
from wxlidar.io import SNOW_CODE, PointCloud, iter_frames, to_noise_mask
from wxlidar.metrics import aggregate, confusion, f1_from_pr, iou_from_f1, metrics
from wxlidar.projection import gather_back, project_triple_planes
from wxlidar.splits import scan_tree, split_sequences
from wxlidar.synthetic import lidar_scene, scene_with_points
from wxlidar.wavelet import (LiftingOperators, inverse_pyramid, lifting_forward_2d, lifting_inverse_2d,
                             wavelet_pyramid)
from wxlidar.weather import (WEATHER_CODE, SeverityLevel, Weather, make_params, sample_severity,
                             simulate)

pytestmark = pytest.mark.acceptance

# method: (precision, recall, published F1, published IoU), WADS benchmark
PUBLISHED_WADS = {
    "ROR": (17.13, 91.80, 29.15, 17.06),
    "DSOR": (65.92, 90.93, 76.43, 61.86),
    "DROR": (69.84, 90.10, 78.68, 64.05),
    "SalsaNext": (74.16, 93.50, 82.71, 70.52),
    "Cylinder3D": (97.12, 92.61, 94.81, 90.13),
    "WeatherNet": (96.69, 81.24, 88.28, 79.02),
    "4DenoiseNet": (96.46, 86.01, 90.94, 83.38),
    "3D-OutDet": (97.10, 92.25, 94.61, 89.78),
    "mixer (best row)": (96.38, 93.93, 95.13, 90.73),
}


def test_metric_identities_on_published_rows(verdict):
    good, lines = 0, []
    for name, (p, r, f1_pub, iou_pub) in PUBLISHED_WADS.items():
        f1 = f1_from_pr(p, r)
        iou = iou_from_f1(f1)
        ok = abs(f1 - f1_pub) <= 0.02 and abs(iou - iou_pub) <= 0.05
        good += ok
        lines.append(f"{name.split()[0]} F1 {f1:.3f}/{f1_pub} IoU {iou:.3f}/{iou_pub} {'ok' if ok else 'off'}")
    for line in lines:
        print(line)
    off = [ln.split()[0] for ln in lines if ln.endswith("off")]
    ok = verdict("metric identities reproduce >= 8 of 9 published rows", good >= 8,
                 f"{good}/9 within tolerance; off: {', '.join(off) or 'none'}")
    assert ok, "\n".join(lines)


def test_lifting_perfect_reconstruction(verdict):
    rng = np.random.default_rng(2024)
    stencils = [LiftingOperators(tuple(rng.uniform(-1, 1, 3)), tuple(rng.uniform(-1, 1, 3)))
                for _ in range(100)]
    stencils[0] = LiftingOperators()
    worst = worst_pyr = 0.0
    n_pyr = 0
    start = time.perf_counter()
    for t in range(1000):
        h, v = 2 * rng.integers(1, 129, size=2)
        grid = rng.standard_normal((h, v, int(rng.integers(1, 5))))
        ops = stencils[t % 100]
        worst = max(worst, float(np.abs(lifting_inverse_2d(lifting_forward_2d(grid, ops), ops) - grid).max()))
        if min(h, v) >= 32 and t % 4 == 0:
            pyr = wavelet_pyramid(grid, ops, levels=3)
            worst_pyr = max(worst_pyr, float(np.abs(inverse_pyramid(pyr) - grid).max()))
            n_pyr += 1
    elapsed = time.perf_counter() - start
    ok = verdict("lifting reconstruction: 1000 grids x 100 stencils < 1e-6, 3-level < 1e-5",
                 worst < 1e-6 and worst_pyr < 1e-5 and n_pyr > 0 and elapsed < 60,
                 f"single {worst:.2e}, pyramid {worst_pyr:.2e} over {n_pyr}, {elapsed:.1f} s")
    assert ok


def _random_cloud(rng, n):
    k = int(rng.integers(1, 5))
    centers = rng.uniform(-30, 30, (k, 3))
    pts = centers[rng.integers(0, k, n)] + rng.normal(scale=rng.uniform(0.1, 3.0), size=(n, 3))
    return PointCloud(pts, np.zeros(n))


def test_filters_match_brute_force_oracles(verdict):
    rng = np.random.default_rng(7)
    mismatches = []
    start = time.perf_counter()
    for trial in range(200):
        n = int(rng.integers(12, 501))
        pc = _random_cloud(rng, n)
        xyz = pc.xyz.astype(np.float64)
        k = int(rng.integers(1, 11))
        s = float(rng.uniform(0, 2))
        radius = float(rng.uniform(0.2, 2.0))
        m = int(rng.integers(1, 6))
        rm = float(rng.uniform(0.01, 0.2))
        pairs = {
            "sor": (sor_filter(pc, k=k, s=s), oracles.sor(xyz, k, s)),
            "ror": (ror_filter(pc, radius=radius, min_neighbors=m), oracles.ror(xyz, radius, m)),
            "dror": (dror_filter(pc, angular_res=0.01, multiplier=3.0, radius_min=radius / 4, min_neighbors=m),
                     oracles.dror(xyz, 0.01, 3.0, radius / 4, m)),
            "dsor": (dsor_filter(pc, k=k, s=s, range_multiplier=rm), oracles.dsor(xyz, k, s, rm)),
        }
        for name, (a, b) in pairs.items():
            if not np.array_equal(a, b):
                mismatches.append(f"{name}#{trial}")
    elapsed = time.perf_counter() - start
    ok = verdict("filter masks equal brute-force oracles on 200 clouds", not mismatches and elapsed < 60,
                 f"{len(mismatches)} mismatches, {elapsed:.1f} s")
    assert ok, mismatches[:10]


def _frames(n=50):
    # about 20k points each
    return [lidar_scene(n_rings=32, n_azimuth=640, seed=100 + i) for i in range(n)]


def test_simulator_invariants(verdict):
    start = time.perf_counter()
    frames = _frames()
    problems = []
    rng = np.random.default_rng(3)
    for i, (pc, labels) in enumerate(frames):
        for weather in Weather:
            code = WEATHER_CODE[weather]
            zero = make_params(weather, 0.0)
            if weather is Weather.FOG:
                zero = type(zero)(0.0, 0.0)
            z_pc, z_lab = simulate(weather, pc, labels, zero, rng=np.random.default_rng(i))
            if (z_pc.xyz.tobytes() != pc.xyz.tobytes() or z_pc.intensity.tobytes() != pc.intensity.tobytes()
                    or z_lab.codes.tobytes() != labels.codes.tobytes()):
                problems.append(f"{weather.value}#{i} zero rate")
            level = list(SeverityLevel)[i % 3]
            out, lab = simulate(weather, pc, labels, sample_severity(weather, level, rng),
                                rng=np.random.default_rng(i))
            moved = lab.codes == code
            if out.n != pc.n or len(lab) != pc.n:
                problems.append(f"{weather.value}#{i} count")
            if not np.array_equal(out.xyz[~moved], pc.xyz[~moved]) or not np.array_equal(
                    lab.codes[~moved], labels.codes[~moved]):
                problems.append(f"{weather.value}#{i} order")
            if not (out.range[moved] < pc.range[moved]).all():
                problems.append(f"{weather.value}#{i} range")

    medians = {}
    pc, labels = frames[0]
    for weather in Weather:
        code = WEATHER_CODE[weather]
        for level in (SeverityLevel.LIGHT, SeverityLevel.HEAVY):
            counts = []
            for seed in range(20):
                g = np.random.default_rng(seed)
                _, lab = simulate(weather, pc, labels, sample_severity(weather, level, g), rng=g)
                counts.append(int(np.count_nonzero(lab.codes == code)))
            medians[weather.value, level.value] = float(np.median(counts))
        if not medians[weather.value, "heavy"] > medians[weather.value, "light"]:
            problems.append(f"{weather.value} monotonicity")
    elapsed = time.perf_counter() - start
    med = ", ".join(f"{w} {medians[w, 'light']:.0f}->{medians[w, 'heavy']:.0f}" for w in ("snow", "fog", "rain"))
    ok = verdict("simulator invariants on 50 frames, light < heavy medians", not problems and elapsed < 300,
                 f"{len(problems)} violations; {med}; {elapsed:.1f} s")
    assert ok, problems[:10]


def test_dsor_end_to_end_on_snowy_scene(verdict):
    rows = []
    for seed in range(3):
        pc, labels = lidar_scene(seed=seed)
        snowy, lab = simulate("snow", pc, labels, make_params("snow", 3.0), rng=np.random.default_rng(seed + 1000))
        gt = to_noise_mask(lab)
        mask = dsor_filter(snowy)
        recall = metrics(confusion(mask, gt)).recall
        fpr = 100.0 * (mask & ~gt).sum() / (~gt).sum()
        rows.append((recall, fpr))
    ok = verdict("DSOR on constructed snow scene: recall >= 90%, clean FPR <= 5%",
                 all(r >= 90.0 and f <= 5.0 for r, f in rows),
                 "; ".join(f"recall {r:.2f} FPR {f:.2f}" for r, f in rows))
    assert ok


WADS_ROOT = os.environ.get("WXLIDAR_WADS_ROOT")
DSOR_GRID = [dict(k=k, s=s, range_multiplier=m) for k in (5, 10) for s in (0.01, 0.1) for m in (0.05, 0.1)]
DROR_GRID = [dict(multiplier=m, min_neighbors=n, radius_min=0.04, angular_res=0.0035)
             for m in (2.0, 3.0) for n in (2, 3)]


def _wads_iou(frames, fn, params):
    entries = []
    for key, pc, labels in frames:
        # falling snow only; accumulated snow on the ground is scene geometry here
        gt = labels.codes == SNOW_CODE
        entries.append(metrics(confusion(fn(pc, **params), gt), key))
    return aggregate(entries).micro.iou


@pytest.mark.slow
def test_wads_reproduction_soft(verdict):
    if not WADS_ROOT or not Path(WADS_ROOT).is_dir():
        verdict("WADS DSOR/DROR IoU within 8 points of published (soft)", None,
                "set WXLIDAR_WADS_ROOT to a WADS sequence tree")
        pytest.skip("WADS data not available")
    manifests = scan_tree(WADS_ROOT, split_sequences("wads/test"))
    frames = [(f.key, pc, lab) for f, pc, lab in iter_frames(manifests)]
    report = []
    best = {}
    for name, fn, grid, target in (("DSOR", dsor_filter, DSOR_GRID, 61.86), ("DROR", dror_filter, DROR_GRID, 64.05)):
        scores = [(_wads_iou(frames, fn, p), p) for p in grid]
        for iou, p in scores:
            report.append(f"{name} {p} IoU {iou:.2f}")
        closest = min(scores, key=lambda sc: abs(sc[0] - target))[0]
        best[name] = (closest, target)
    ok = all(abs(iou - target) <= 8.0 for iou, target in best.values())
    if not ok:
        print("parameter sensitivity:")
        for line in report:
            print("  " + line)
    verdict("WADS DSOR/DROR IoU within 8 points of published (soft)", ok,
            "; ".join(f"{n} {iou:.2f} vs {t}" for n, (iou, t) in best.items()) + ("" if ok else "; soft, not enforced"))


def test_projection_properties(verdict):
    rng = np.random.default_rng(11)
    bad = []
    for t in range(500):
        n = int(rng.integers(1, 3000))
        xyz = rng.normal(scale=rng.uniform(1, 40), size=(n, 3))
        pc = PointCloud(xyz, rng.uniform(0, 255, n))
        feats = pc.features()
        res = tuple(int(v) for v in rng.integers(4, 65, 3))
        for plane in project_triple_planes(pc, feats, res):
            mass = (plane.count_grid()[..., None] * plane.grid).sum(axis=(0, 1))
            if not np.allclose(mass, feats.sum(0), rtol=1e-6, atol=1e-6 * n):
                bad.append(f"mass#{t}/{plane.plane}")
            back = gather_back(plane)
            if not np.allclose(back, plane.grid.reshape(-1, feats.shape[1])[plane.pixel_of_point]):
                bad.append(f"gather#{t}/{plane.plane}")
            if not np.all(gather_back(plane.with_grid(np.ones(plane.grid.shape))) == 1.0):
                bad.append(f"ones#{t}/{plane.plane}")
    ok = verdict("projection mass conservation and gather-back on 500 frames", not bad, f"{len(bad)} failures")
    assert ok, bad[:10]


def _pipeline(seed: int, n_points: int = 120000) -> float:
    pc, labels = scene_with_points(n_points, seed=seed)
    start = time.perf_counter()
    out, lab = simulate("snow", pc, labels, make_params("snow", 2.0), rng=np.random.default_rng(seed))
    mask = dsor_filter(out)
    metrics(confusion(mask, to_noise_mask(lab)))
    return time.perf_counter() - start


def test_throughput_single_frame(verdict):
    _pipeline(0, 20000)  # warm caches
    elapsed = min(_pipeline(s) for s in range(3))
    ok = verdict("simulate + dsor + eval on a 120k-point frame under 2 s", elapsed < 2.0, f"{elapsed:.2f} s")
    assert ok


@pytest.mark.slow
def test_throughput_scales_with_workers(verdict):
    jobs = list(range(16))
    start = time.perf_counter()
    for j in jobs:
        _pipeline(j, 30000)
    serial = time.perf_counter() - start
    with ProcessPoolExecutor(max_workers=8) as pool:
        list(pool.map(_pipeline, [0] * 8, [1000] * 8))  # start workers
        start = time.perf_counter()
        list(pool.map(_pipeline, jobs, [30000] * len(jobs)))
        parallel = time.perf_counter() - start
    speedup = serial / parallel
    ok = verdict("8 workers give >= 5x frame throughput", speedup >= 5.0,
                 f"{speedup:.2f}x on {os.cpu_count()} CPU(s)")
    assert ok
