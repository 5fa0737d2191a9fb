"""Binary denoising metrics: confusion counts, precision, recall, F1 and noise IoU.

All reported metrics are percentages. The noise-class IoU is what the
denoising literature reports as "mIoU"; :class:`MetricsEntry` exposes it
under both names.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._validation import as_mask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    def scaled(self, factor: int) -> "ConfusionCounts":
        return ConfusionCounts(self.tp * factor, self.fp * factor, self.fn * factor, self.tn * factor)


def confusion(pred, gt) -> ConfusionCounts:
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction has {pred.size} entries, ground truth {gt.size}")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall, both in percent."""
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def iou_from_f1(f1: float) -> float:
    """IoU implied by an F1 score (percent): ``F / (2 - F)`` on fractions."""
    return 100.0 * f1 / (200.0 - f1)


@dataclass(frozen=True)
class MetricsEntry:
    scope: str
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    iou: float
    degenerate: tuple[str, ...] = ()

    @property
    def miou(self) -> float:
        return self.iou

    @property
    def noise_iou(self) -> float:
        return self.iou

    def as_row(self) -> dict:
        c = self.counts
        return {
            "scope": self.scope, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1, "iou": self.iou,
        }


def metrics(counts: ConfusionCounts, scope: str = "frame") -> MetricsEntry:
    """Precision, recall, F1 and IoU of the noise class.

    A zero denominator yields 0 for that metric and its name is listed in
    ``degenerate`` instead of raising.
    """
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return 100.0 * num / den

    p = ratio(tp, tp + fp, "precision")
    r = ratio(tp, tp + fn, "recall")
    if p + r == 0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = f1_from_pr(p, r)
    iou = ratio(tp, tp + fp + fn, "iou")
    return MetricsEntry(scope, counts, p, r, f1, iou, tuple(flags))


@dataclass
class MetricsReport:
    frames: list[MetricsEntry]
    micro: MetricsEntry
    macro: dict = field(default_factory=dict)

    def per_sequence(self) -> list[MetricsEntry]:
        groups: dict[str, ConfusionCounts] = {}
        for e in self.frames:
            seq = e.scope.split("/", 1)[0]
            groups[seq] = groups.get(seq, ConfusionCounts()) + e.counts
        return [metrics(c, f"sequence:{s}") for s, c in sorted(groups.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["scope", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "iou"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        rows = [e.as_row() for e in self.frames + self.per_sequence() + [self.micro]]
        rows.append({"scope": "macro", "tp": "", "fp": "", "fn": "", "tn": "", **self.macro})
        for row in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        for e in self.frames:
            lines.append(_text_line(e))
        for e in self.per_sequence():
            lines.append(_text_line(e))
        lines.append(_text_line(self.micro))
        m = self.macro
        lines.append(
            f"macro precision={m['precision']:.2f} recall={m['recall']:.2f} "
            f"f1={m['f1']:.2f} iou={m['iou']:.2f} (mIoU)"
        )
        return "\n".join(lines) + "\n"


def _text_line(e: MetricsEntry) -> str:
    c = e.counts
    s = (f"{e.scope} tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn} precision={e.precision:.2f} "
         f"recall={e.recall:.2f} f1={e.f1:.2f} iou={e.iou:.2f}")
    if e.degenerate:
        s += " degenerate=" + ",".join(e.degenerate)
    return s


def aggregate(entries: Sequence[MetricsEntry] | Mapping[str, ConfusionCounts]) -> MetricsReport:
    """Pool per-frame counts (micro average); the macro average is kept alongside."""
    if isinstance(entries, Mapping):
        entries = [metrics(c, k) for k, c in entries.items()]
    entries = list(entries)
    if not entries:
        raise ValueError("cannot aggregate zero frames")
    pooled = ConfusionCounts()
    for e in entries:
        pooled = pooled + e.counts
    macro = {k: float(np.mean([getattr(e, k) for e in entries])) for k in ("precision", "recall", "f1", "iou")}
    return MetricsReport(entries, metrics(pooled, "aggregate"), macro)


def evaluate_masks(pairs: Iterable[tuple[str, np.ndarray, np.ndarray]]) -> MetricsReport:
    return aggregate([metrics(confusion(p, g), key) for key, p, g in pairs])
