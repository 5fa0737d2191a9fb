"""Named dataset splits and discovery of frames in KITTI-style trees.

A tree has one directory per sequence holding ``velodyne/<frame>.bin``
scans and, optionally, ``labels/<frame>.label`` files. A top-level
``sequences/`` directory, as in SemanticKITTI, is looked through.
"""

from __future__ import annotations

from pathlib import Path

from .io import FrameManifest, read_manifest

SPLITS: dict[tuple[str, str | None], dict[str, tuple[str, ...]]] = {
    ("wads", None): {
        "train": ("14", "15", "18", "20", "24", "28", "34", "36", "37"),
        "val": ("11", "16"),
        "test": ("12", "13", "17", "22", "23", "26", "30", "35", "76"),
    },
    ("weather-kitti", "snow"): {
        "train": ("00", "02", "08", "17", "19"),
        "val": ("04", "11", "12", "16"),
        "test": ("01", "03", "05", "06", "07", "09", "10", "13", "14", "15", "18", "20", "21"),
    },
    ("weather-kitti", "fog"): {
        "train": ("02", "03", "04", "16", "17", "18", "19", "20"),
        "val": ("06", "07", "09", "11"),
        "test": ("00", "01", "05", "08", "10", "12", "13", "14", "15", "21"),
    },
    ("weather-kitti", "rain"): {
        "train": ("01", "02", "03", "04", "06", "12", "16", "17", "21"),
        "val": ("09", "19"),
        "test": ("00", "05", "07", "08", "10", "13", "14", "15", "18", "20"),
    },
    ("weather-nuscenes", "snow"): {
        "train": ("01", "02", "07", "08"),
        "val": ("04",),
        "test": ("00", "03", "05", "06", "09"),
    },
    ("weather-nuscenes", "fog"): {
        "train": ("01", "02", "03", "07"),
        "val": ("04",),
        "test": ("00", "05", "06", "08", "09"),
    },
    ("weather-nuscenes", "rain"): {
        "train": ("04", "05", "07", "09"),
        "val": ("08",),
        "test": ("00", "01", "02", "03", "06"),
    },
}


def split_names() -> list[str]:
    names = []
    for (dataset, weather), parts in SPLITS.items():
        for part in parts:
            names.append("/".join(p for p in (dataset, weather, part) if p))
    return names


def split_sequences(name: str) -> tuple[str, ...]:
    """Sequence ids of a split named ``dataset[/weather]/part``, e.g. ``weather-kitti/fog/test``."""
    parts = name.lower().split("/")
    if len(parts) == 2:
        key, part = (parts[0], None), parts[1]
    elif len(parts) == 3:
        key, part = (parts[0], parts[1]), parts[2]
    else:
        key, part = None, None
    try:
        return SPLITS[key][part]
    except KeyError:
        raise ValueError(f"unknown split {name!r}; known: {', '.join(split_names())}") from None


def _sequence_root(root: Path) -> Path:
    return root / "sequences" if (root / "sequences").is_dir() else root


def scan_tree(root, sequences=None, dataset: str = "kitti-like") -> list[FrameManifest]:
    """Frames of a sequence tree, sorted by sequence then frame."""
    base = _sequence_root(Path(root))
    wanted = None if sequences is None else set(sequences)
    frames = []
    for seq_dir in sorted(p for p in base.iterdir() if p.is_dir()):
        if wanted is not None and seq_dir.name not in wanted:
            continue
        for scan in sorted((seq_dir / "velodyne").glob("*.bin")):
            label = seq_dir / "labels" / f"{scan.stem}.label"
            frames.append(FrameManifest(seq_dir.name, scan.stem, scan,
                                        label if label.exists() else None, dataset))
    return frames


def scan_labels(root) -> dict[str, Path]:
    """``sequence/frame -> label path`` for every ``*.label`` under ``root``."""
    base = _sequence_root(Path(root))
    out = {}
    for p in sorted(base.rglob("*.label")):
        rel = p.relative_to(base)
        key = f"{rel.parts[0]}/{p.stem}"
        if key in out:
            raise ValueError(f"{root}: two label files for {key}: {out[key]} and {p}")
        out[key] = p
    return out


def resolve_frames(source, split: str | None = None) -> list[FrameManifest]:
    """Frames from a manifest file or a sequence tree, optionally restricted to a split."""
    source = Path(source)
    if source.is_dir():
        frames = scan_tree(source)
    elif source.is_file():
        frames = read_manifest(source)
    else:
        raise FileNotFoundError(f"{source}: no such manifest or directory")
    if split is not None:
        keep = set(split_sequences(split))
        frames = [f for f in frames if f.sequence in keep]
    return frames
