"""Reading and writing LiDAR scans, SemanticKITTI-style labels and frame manifests.

Scan files are headerless little-endian float32 records. ``kitti4`` stores
``x, y, z, intensity`` per point (16 bytes); ``nuscenes5`` appends a fifth
value (ring index) which is carried through untouched (20 bytes).

Label files hold one little-endian uint32 word per point: the low 16 bits
are the semantic code and the high 16 bits the instance id.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

LAYOUTS = {"kitti4": 4, "nuscenes5": 5}

SNOW_CODE = 110
FOG_CODE = 111
RAIN_CODE = 112
WEATHER_CODES = frozenset({SNOW_CODE, FOG_CODE, RAIN_CODE})


class FormatError(ValueError):
    """A file does not have the byte size its format requires."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Columnar LiDAR frame.

    ``xyz`` and ``intensity`` keep their on-disk float32 values so a
    read/write cycle is bit-exact. ``ring`` is only present for ``nuscenes5``
    data. ``range`` is derived from ``xyz`` in float64.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    ring: np.ndarray | None = None
    range: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float32).reshape(-1, 3)
        intensity = np.asarray(self.intensity, dtype=np.float32).reshape(-1)
        if intensity.shape[0] != xyz.shape[0]:
            raise ValueError(
                f"intensity has {intensity.shape[0]} entries for {xyz.shape[0]} points"
            )
        if not (np.isfinite(xyz).all() and np.isfinite(intensity).all()):
            raise ValueError("point coordinates and intensities must be finite")
        object.__setattr__(self, "xyz", _frozen(xyz))
        object.__setattr__(self, "intensity", _frozen(intensity))
        if self.ring is not None:
            ring = np.asarray(self.ring, dtype=np.float32).reshape(-1)
            if ring.shape[0] != xyz.shape[0]:
                raise ValueError("ring column length does not match point count")
            object.__setattr__(self, "ring", _frozen(ring))
        rng = self.range
        if rng is None:
            rng = np.linalg.norm(xyz.astype(np.float64), axis=1)
        rng = np.asarray(rng, dtype=np.float64).reshape(-1)
        if rng.shape[0] != xyz.shape[0]:
            raise ValueError("range column length does not match point count")
        object.__setattr__(self, "range", _frozen(rng))

    @property
    def n(self) -> int:
        return self.xyz.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def x(self) -> np.ndarray:
        return self.xyz[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.xyz[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.xyz[:, 2]

    def features(self) -> np.ndarray:
        """The per-point ``(x, y, z, intensity, range)`` matrix, float64."""
        return np.column_stack(
            [self.xyz.astype(np.float64), self.intensity.astype(np.float64), self.range]
        )

    def subset(self, index) -> "PointCloud":
        ring = None if self.ring is None else self.ring[index]
        return PointCloud(self.xyz[index], self.intensity[index], ring, self.range[index])

    def replace(self, xyz=None, intensity=None) -> "PointCloud":
        """Copy with new coordinates and/or intensities; ranges are recomputed."""
        return PointCloud(
            self.xyz if xyz is None else xyz,
            self.intensity if intensity is None else intensity,
            self.ring,
        )

    @classmethod
    def from_array(cls, array) -> "PointCloud":
        """Build from an ``(n, 4)`` or ``(n, 5)`` array laid out like the scan files."""
        a = np.asarray(array)
        if a.ndim != 2 or a.shape[1] not in (4, 5):
            raise ValueError(f"expected an (n, 4) or (n, 5) array, got shape {a.shape}")
        ring = a[:, 4] if a.shape[1] == 5 else None
        return cls(a[:, :3], a[:, 3], ring)

    def to_array(self) -> np.ndarray:
        cols = [self.xyz, self.intensity[:, None]]
        if self.ring is not None:
            cols.append(self.ring[:, None])
        return np.hstack(cols).astype(np.float32)


@dataclass(frozen=True, eq=False)
class LabelSet:
    codes: np.ndarray
    instance: np.ndarray | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.size and (codes.min() < 0 or codes.max() > 0xFFFF):
            raise ValueError("semantic codes must fit in 16 bits")
        codes = codes.astype(np.uint16).reshape(-1)
        inst = self.instance
        inst = np.zeros_like(codes) if inst is None else np.asarray(inst).astype(np.uint16).reshape(-1)
        if inst.shape != codes.shape:
            raise ValueError("instance ids and codes differ in length")
        object.__setattr__(self, "codes", _frozen(codes))
        object.__setattr__(self, "instance", _frozen(inst))

    def __len__(self) -> int:
        return self.codes.shape[0]

    def subset(self, index) -> "LabelSet":
        return LabelSet(self.codes[index], self.instance[index])

    def with_codes(self, codes) -> "LabelSet":
        return LabelSet(codes, self.instance)

    @classmethod
    def zeros(cls, n: int) -> "LabelSet":
        return cls(np.zeros(n, dtype=np.uint16))


def _stride(layout: str) -> int:
    try:
        return LAYOUTS[layout]
    except KeyError:
        raise ValueError(f"unknown layout {layout!r}; expected one of {sorted(LAYOUTS)}") from None


def read_point_cloud(path, layout: str = "kitti4") -> PointCloud:
    ncols = _stride(layout)
    stride = 4 * ncols
    size = os.path.getsize(path)
    if size % stride:
        raise FormatError(
            f"{path}: {size} bytes is not a multiple of the {stride}-byte {layout} record"
        )
    data = np.fromfile(path, dtype="<f4").reshape(-1, ncols)
    return PointCloud.from_array(data)


def write_point_cloud(pc: PointCloud, path, layout: str = "kitti4") -> None:
    ncols = _stride(layout)
    if ncols == 5:
        ring = pc.ring if pc.ring is not None else np.zeros(pc.n, dtype=np.float32)
        data = np.column_stack([pc.xyz, pc.intensity, ring])
    else:
        data = np.column_stack([pc.xyz, pc.intensity])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data.astype("<f4").tofile(path)


def read_labels(path, fmt: str = "kitti") -> LabelSet:
    """Read a label file.

    ``fmt="kitti"`` is the 32-bit SemanticKITTI word format. ``fmt="nuscenes"``
    reads nuScenes-lidarseg uint8 class files into the same in-memory type
    (instance ids are zero).
    """
    size = os.path.getsize(path)
    if fmt == "nuscenes":
        return LabelSet(np.fromfile(path, dtype=np.uint8))
    if fmt != "kitti":
        raise ValueError(f"unknown label format {fmt!r}")
    if size % 4:
        raise FormatError(f"{path}: {size} bytes is not a multiple of 4")
    words = np.fromfile(path, dtype="<u4")
    return LabelSet(words & 0xFFFF, words >> 16)


def write_labels(labels: LabelSet, path) -> None:
    words = labels.codes.astype(np.uint32) | (labels.instance.astype(np.uint32) << 16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    words.astype("<u4").tofile(path)


def compute_ranges(pc: PointCloud) -> PointCloud:
    return PointCloud(pc.xyz, pc.intensity, pc.ring)


def to_noise_mask(labels: LabelSet, noise_codes: Iterable[int] = WEATHER_CODES) -> np.ndarray:
    codes = list(noise_codes)
    if not codes:
        return np.zeros(len(labels), dtype=bool)
    return np.isin(labels.codes, np.asarray(codes, dtype=np.int64))


# -- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class FrameManifest:
    sequence: str
    frame: str
    scan_path: Path
    label_path: Path | None
    dataset: str = "kitti-like"

    @property
    def key(self) -> str:
        return f"{self.sequence}/{self.frame}"

    @property
    def frame_number(self) -> int:
        digits = "".join(ch for ch in self.frame if ch.isdigit())
        return int(digits) if digits else 0


def read_manifest(path, dataset: str = "kitti-like") -> list[FrameManifest]:
    """Parse ``sequence/frame scan_path label_path`` records.

    Relative paths resolve against the manifest's directory. A label path of
    ``-`` means the frame has no label file. Blank lines and ``#`` comments
    are skipped.
    """
    path = Path(path)
    base = path.parent
    frames = []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3) or "/" not in parts[0]:
            raise ValueError(f"{path}:{lineno}: expected 'sequence/frame scan [labels]'")
        seq, frame = parts[0].split("/", 1)
        scan = base / parts[1]
        label = None
        if len(parts) == 3 and parts[2] != "-":
            label = base / parts[2]
        frames.append(FrameManifest(seq, frame, scan, label, dataset))
    return frames


def write_manifest(frames: Sequence[FrameManifest], path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    lines = []
    for f in frames:
        scan = os.path.relpath(Path(f.scan_path).resolve(), base)
        label = "-" if f.label_path is None else os.path.relpath(Path(f.label_path).resolve(), base)
        lines.append(f"{f.key} {scan} {label}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def iter_frames(
    frames: Iterable[FrameManifest], layout: str = "kitti4"
) -> Iterator[tuple[FrameManifest, PointCloud, LabelSet]]:
    for f in frames:
        pc = read_point_cloud(f.scan_path, layout)
        if f.label_path is None:
            labels = LabelSet.zeros(pc.n)
        else:
            # native lidarseg files are one byte per point; our own outputs are 32-bit words
            native = layout == "nuscenes5" and os.path.getsize(f.label_path) == pc.n != 0
            labels = read_labels(f.label_path, "nuscenes" if native else "kitti")
        if len(labels) != pc.n:
            raise FormatError(f"{f.key}: {len(labels)} labels for {pc.n} points")
        yield f, pc, labels
