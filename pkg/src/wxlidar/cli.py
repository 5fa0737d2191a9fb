"""``wxlidar`` command line: corrupt, denoise, evaluate and count frames.

Frame sources are either a manifest file (``sequence/frame scan [labels]``
per line) or a sequence tree (``<seq>/velodyne/*.bin`` with
``<seq>/labels/*.label``). Outputs are written as trees of the same shape,
one file per frame, so runs can use a worker pool without contention. Each
command exits with status 1 if any frame failed; the others are still
written.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .io import (LAYOUTS, SNOW_CODE, WEATHER_CODES, FrameManifest, LabelSet, iter_frames,
                 read_labels, to_noise_mask, write_labels, write_manifest, write_point_cloud)
from .metrics import aggregate, confusion, metrics
from .splits import resolve_frames, scan_labels, split_names
from .weather import (WEATHER_CODE, SeverityLevel, Weather, frame_rng, make_params, sample_severity,
                      severity_value, simulate)

log = logging.getLogger("wxlidar")

LEVELS = [s for s in SeverityLevel]


def frame_plan(cfg: RunConfig, sequence: str, frame: str):
    """Severity level, parameters and random stream for one frame.

    The level is drawn uniformly unless the config fixes it; a fixed
    ``weather.value`` overrides both.
    """
    rng = frame_rng(cfg["seed"], sequence, frame)
    weather = Weather(cfg["weather.type"])
    if cfg["weather.value"] is not None:
        return None, make_params(weather, cfg["weather.value"]), rng
    if cfg["weather.level"] == "random":
        level = LEVELS[int(rng.integers(len(LEVELS)))]
    else:
        level = SeverityLevel(cfg["weather.level"])
    return level, sample_severity(weather, level, rng), rng


def _out_paths(out: Path, f: FrameManifest, kind: str) -> tuple[Path, Path]:
    seq = out / f.sequence
    return seq / "velodyne" / f"{f.frame}.bin", seq / kind / f"{f.frame}.label"


@dataclass
class _Job:
    frame: FrameManifest
    cfg: RunConfig
    out: Path
    write_clouds: bool = False


def _run(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def _load_one(f: FrameManifest, layout: str):
    return next(iter_frames([f], layout))[1:]


# -- simulate ---------------------------------------------------------------------


def _simulate_one(job: _Job) -> dict:
    f, cfg = job.frame, job.cfg
    rec = {"frame": f.key, "weather": cfg["weather.type"], "level": "", "parameter": "",
           "seed": cfg["seed"], "relocated": "", "status": "ok"}
    try:
        level, params, rng = frame_plan(cfg, f.sequence, f.frame)
        rec["level"] = "fixed" if level is None else level.value
        rec["parameter"] = f"{severity_value(params):.6f}"
        pc, labels = _load_one(f, cfg["layout"])
        out_pc, out_labels = simulate(cfg["weather.type"], pc, labels, params, cfg.sensor(), rng)
        code = WEATHER_CODE[Weather(cfg["weather.type"])]
        rec["relocated"] = int(np.count_nonzero((out_labels.codes == code) & (labels.codes != code)))
        scan_path, label_path = _out_paths(job.out, f, "labels")
        write_point_cloud(out_pc, scan_path, cfg["layout"])
        write_labels(out_labels, label_path)
    except Exception as exc:  # noqa: BLE001 - reported per frame
        rec["status"] = f"error: {exc}"
    return rec


LOG_FIELDS = ["frame", "weather", "level", "parameter", "seed", "relocated", "status"]


def _write_csv(path: Path, rows: list[dict], fields: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _report_failures(rows: list[dict]) -> int:
    bad = [r for r in rows if r["status"] != "ok"]
    for r in bad:
        log.error("%s: %s", r["frame"], r["status"])
    if bad:
        log.error("%d of %d frames failed", len(bad), len(rows))
    return 1 if bad else 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    frames = resolve_frames(args.source, args.split)
    out = Path(args.out)
    rows = _run(_simulate_one, [_Job(f, cfg, out) for f in frames], cfg["threads"])
    _write_csv(out / "simulate_log.csv", rows, LOG_FIELDS)
    ok = {r["frame"] for r in rows if r["status"] == "ok"}
    written = []
    for f in frames:
        if f.key in ok:
            scan, label = _out_paths(out, f, "labels")
            written.append(FrameManifest(f.sequence, f.frame, scan, label, f.dataset))
    write_manifest(written, out / "manifest.txt")
    log.info("simulated %d frames into %s", len(ok), out)
    return _report_failures(rows)


# -- denoise ----------------------------------------------------------------------


def _denoise_one(job: _Job) -> dict:
    f, cfg = job.frame, job.cfg
    rec = {"frame": f.key, "filter": cfg["filter.name"], "points": "", "flagged": "", "status": "ok"}
    try:
        pc, _ = _load_one(FrameManifest(f.sequence, f.frame, f.scan_path, None, f.dataset), cfg["layout"])
        mask = cfg.make_filter().fit_predict(pc)
        codes = np.where(mask, SNOW_CODE, 0).astype(np.uint16)
        scan_path, label_path = _out_paths(job.out, f, "predictions")
        write_labels(LabelSet(codes), label_path)
        if job.write_clouds:
            write_point_cloud(pc.subset(~mask), scan_path, cfg["layout"])
        rec["points"], rec["flagged"] = pc.n, int(mask.sum())
    except Exception as exc:  # noqa: BLE001
        rec["status"] = f"error: {exc}"
    return rec


def cmd_denoise(args, cfg: RunConfig) -> int:
    frames = resolve_frames(args.source, args.split)
    cfg.filter_params()  # fail fast on parameters the filter does not take
    out = Path(args.out)
    jobs = [_Job(f, cfg, out, args.write_clouds) for f in frames]
    rows = _run(_denoise_one, jobs, cfg["threads"])
    _write_csv(out / "denoise_log.csv", rows, ["frame", "filter", "points", "flagged", "status"])
    return _report_failures(rows)


# -- eval -------------------------------------------------------------------------


def _label_index(source) -> dict[str, Path]:
    source = Path(source)
    if source.is_file():
        return {f.key: f.label_path for f in resolve_frames(source) if f.label_path is not None}
    if source.is_dir():
        return scan_labels(source)
    raise FileNotFoundError(f"{source}: no such manifest or directory")


def cmd_eval(args, cfg: RunConfig) -> int:
    pred = _label_index(args.pred)
    gt = _label_index(args.gt)
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    failed = 0
    for key in missing:
        log.error("%s: no prediction", key)
    for key in extra:
        log.error("%s: no ground truth", key)
    entries = []
    for key in sorted(set(pred) & set(gt)):
        try:
            p, g = to_noise_mask(read_labels(pred[key])), to_noise_mask(read_labels(gt[key]))
            entries.append(metrics(confusion(p, g), key))
        except Exception as exc:  # noqa: BLE001
            log.error("%s: %s", key, exc)
            failed += 1
    if not entries:
        log.error("no frames to evaluate")
        return 1
    report = aggregate(entries)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        (out / "report.csv").write_text(report.to_csv())
    return 1 if (missing or extra or failed) else 0


# -- stats ------------------------------------------------------------------------


def cmd_stats(args, cfg: RunConfig) -> int:
    index = _label_index(args.source)
    if args.split:
        from .splits import split_sequences

        keep = set(split_sequences(args.split))
        index = {k: v for k, v in index.items() if k.split("/", 1)[0] in keep}
    totals: dict[int, int] = {c: 0 for c in sorted(WEATHER_CODES)}
    failed = 0
    for key, path in sorted(index.items()):
        try:
            codes, counts = np.unique(read_labels(path).codes, return_counts=True)
        except Exception as exc:  # noqa: BLE001
            log.error("%s: %s", key, exc)
            failed += 1
            continue
        for c, n in zip(codes.tolist(), counts.tolist()):
            totals[c] = totals.get(c, 0) + n
    lines = ["code,count"] + [f"{c},{totals[c]}" for c in sorted(totals)]
    lines.append(f"total,{sum(totals.values())}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 1 if failed else 0


# -- wavelet self-test --------------------------------------------------------------


def cmd_wavelet_selftest(args, cfg: RunConfig) -> int:
    from .projection import project_triple_planes
    from .synthetic import lidar_scene
    from .wavelet import LiftingOperators, dump_pyramid, inverse_pyramid, max_levels, wavelet_pyramid

    rng = np.random.default_rng(cfg["seed"])
    ops = LiftingOperators(cfg["wavelet.predict"], cfg["wavelet.update"])
    worst = 0.0
    for _ in range(args.trials):
        h, v = (2 * rng.integers(4, max(args.max_size, 8) // 2 + 1, size=2)).tolist()
        grid = rng.standard_normal((h, v, int(rng.integers(1, 5))))
        levels = min(cfg["wavelet.levels"], max_levels(grid.shape))
        err = np.abs(inverse_pyramid(wavelet_pyramid(grid, ops, levels)) - grid).max()
        worst = max(worst, float(err))
    print(f"random grids: {args.trials} trials, max reconstruction error {worst:.3e}")

    pc, _ = lidar_scene(seed=cfg["seed"])
    planes = project_triple_planes(pc, resolutions=cfg["projection.resolution"],
                                   bounds=cfg.projection_bounds())
    for plane in planes:
        grid = plane.grid
        levels = min(cfg["wavelet.levels"], max_levels(grid.shape))
        pyr = wavelet_pyramid(grid, ops, levels)
        err = float(np.abs(inverse_pyramid(pyr) - grid).max())
        worst = max(worst, err)
        print(f"plane {plane.plane} {grid.shape[0]}x{grid.shape[1]}x{grid.shape[2]}: "
              f"{levels} levels, error {err:.3e}")
        if args.dump:
            dump_pyramid(pyr, Path(args.dump) / plane.plane)
            plane.dump(Path(args.dump) / plane.plane / "input.grid")
    ok = worst < 1e-6
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# -- synthetic scenes ---------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> int:
    from .synthetic import lidar_scene

    out = Path(args.out)
    frames = []
    for s in range(args.sequences):
        seq = f"{s:02d}"
        for i in range(args.frames):
            f = FrameManifest(seq, f"{i:06d}", out / seq / "velodyne" / f"{i:06d}.bin",
                              out / seq / "labels" / f"{i:06d}.label")
            seed = int(frame_rng(cfg["seed"], seq, f.frame).integers(2**31))
            pc, labels = lidar_scene(args.rings, args.azimuth, seed=seed)
            write_point_cloud(pc, f.scan_path, cfg["layout"])
            write_labels(labels, f.label_path)
            frames.append(f)
    write_manifest(frames, out / "manifest.txt")
    log.info("wrote %d frames to %s", len(frames), out)
    return 0


# -- argument parsing -------------------------------------------------------------


def _global_flags(default) -> argparse.ArgumentParser:
    # the flags are accepted before and after the subcommand; the subcommand
    # copy suppresses its defaults so it cannot clobber a value given earlier
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--config", type=Path, default=default, help="key = value config file")
    g.add_argument("--seed", type=int, default=default, help="master seed (overrides config)")
    g.add_argument("--threads", type=int, default=default, help="worker processes (overrides config)")
    g.add_argument("--layout", choices=sorted(LAYOUTS), default=default,
                   help="scan layout (overrides config)")
    g.add_argument("-v", "--verbose", action="store_true",
                   default=False if default is None else default)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="wxlidar", description=__doc__.split("\n", 1)[0],
                                parents=[_global_flags(None)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def source_args(sp):
        sp.add_argument("source", help="manifest file or sequence tree")
        sp.add_argument("--split", help=f"restrict to a named split ({split_names()[0]}, ...)")

    sp = sub.add_parser("simulate", parents=[common], help="corrupt clean scans with weather")
    source_args(sp)
    sp.add_argument("out", help="output tree")
    sp.add_argument("--weather", choices=[w.value for w in Weather])
    sp.add_argument("--level", choices=[s.value for s in SeverityLevel] + ["random"])
    sp.add_argument("--value", type=float, help="fixed snow/rain rate (mm/h) or fog beta")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("denoise", parents=[common], help="flag noise points with a statistical filter")
    source_args(sp)
    sp.add_argument("out", help="output tree (predictions/*.label)")
    sp.add_argument("--filter", choices=["sor", "ror", "dror", "dsor"])
    sp.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                    help="filter parameter, repeatable")
    sp.add_argument("--write-clouds", action="store_true", help="also write the filtered scans")
    sp.set_defaults(func=cmd_denoise)

    sp = sub.add_parser("eval", parents=[common], help="score predicted masks against labels")
    sp.add_argument("pred", help="prediction tree or manifest")
    sp.add_argument("gt", help="ground-truth tree or manifest")
    sp.add_argument("--out", help="directory for report.txt and report.csv")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stats", parents=[common], help="point counts per semantic code")
    source_args(sp)
    sp.add_argument("--out", help="also write the table to this file")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("wavelet-selftest", parents=[common], help="check lifting reconstruction")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--max-size", type=int, default=64)
    sp.add_argument("--dump", help="write the sub-bands of a synthetic frame here")
    sp.set_defaults(func=cmd_wavelet_selftest)

    sp = sub.add_parser("synth", parents=[common], help="write a tree of synthetic clean scans")
    sp.add_argument("out")
    sp.add_argument("--sequences", type=int, default=1)
    sp.add_argument("--frames", type=int, default=2)
    sp.add_argument("--rings", type=int, default=32)
    sp.add_argument("--azimuth", type=int, default=1024)
    sp.set_defaults(func=cmd_synth)
    return p


def _parse_param(text: str):
    name, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--param expects NAME=VALUE, got {text!r}")
    return name.strip(), value.strip()


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("layout", "layout"),
                      ("weather", "weather.type"), ("level", "weather.level"),
                      ("value", "weather.value"), ("filter", "filter.name")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    vals = dict(cfg.values)
    vals.update(overrides)
    if getattr(args, "param", None):
        from .config import SCHEMA

        for name, value in map(_parse_param, args.param):
            key = f"filter.{name}"
            if key not in SCHEMA:
                raise ConfigError(f"unknown filter parameter {name!r}")
            vals[key] = SCHEMA[key][0](value)
    return RunConfig(vals)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    start = time.perf_counter()
    try:
        status = args.func(args, cfg)
    except (ConfigError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - start)
    return status


if __name__ == "__main__":
    sys.exit(main())
