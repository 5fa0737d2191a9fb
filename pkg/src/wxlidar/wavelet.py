"""Two-dimensional lifting wavelets over plane grids.

One decomposition level splits a ``(H, V, C)`` grid along the horizontal
axis (axis 1) into even/odd columns, then applies predict and update steps::

    d = x_odd  - P(x_even)
    c = x_even + U(d)

The same split/predict/update runs along axis 0 on ``c`` (giving LL, LH)
and on ``d`` (giving HL, HH). ``P`` and ``U`` are fixed three-tap stencils
with reflection padding. Every step is undone exactly by running it
backwards, whatever the coefficients are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

HAAR_PREDICT = (0.0, 1.0, 0.0)
HAAR_UPDATE = (0.0, 0.5, 0.0)


@dataclass(frozen=True)
class LiftingOperators:
    """Predict and update stencils ``(left, center, right)``."""

    predict: tuple[float, float, float] = HAAR_PREDICT
    update: tuple[float, float, float] = HAAR_UPDATE

    def __post_init__(self):
        for name in ("predict", "update"):
            taps = tuple(float(v) for v in getattr(self, name))
            if len(taps) != 3:
                raise ValueError(f"{name} stencil needs 3 coefficients, got {len(taps)}")
            if not all(math.isfinite(v) for v in taps):
                raise ValueError(f"{name} stencil coefficients must be finite")
            object.__setattr__(self, name, taps)

    @classmethod
    def haar(cls) -> "LiftingOperators":
        return cls()

    @classmethod
    def cdf53(cls) -> "LiftingOperators":
        """Linear-prediction (CDF 5/3 style) stencils."""
        return cls((0.0, 0.5, 0.5), (0.25, 0.25, 0.0))


def _stencil(x: np.ndarray, taps, axis: int) -> np.ndarray:
    a, b, c = taps
    x = np.moveaxis(x, axis, 0)
    m = x.shape[0]
    if m == 1:
        left = right = x
    else:
        left = np.concatenate([x[1:2], x[:-1]])
        right = np.concatenate([x[1:], x[-2:-1]])
    out = b * x
    if a:
        out = out + a * left
    if c:
        out = out + c * right
    return np.moveaxis(out, 0, axis)


def _split(x: np.ndarray, ops: LiftingOperators, axis: int):
    sl_e = [slice(None)] * x.ndim
    sl_o = [slice(None)] * x.ndim
    sl_e[axis] = slice(0, None, 2)
    sl_o[axis] = slice(1, None, 2)
    even, odd = x[tuple(sl_e)], x[tuple(sl_o)]
    d = odd - _stencil(even, ops.predict, axis)
    c = even + _stencil(d, ops.update, axis)
    return c, d


def _merge(c: np.ndarray, d: np.ndarray, ops: LiftingOperators, axis: int) -> np.ndarray:
    even = c - _stencil(d, ops.update, axis)
    odd = d + _stencil(even, ops.predict, axis)
    shape = list(c.shape)
    shape[axis] *= 2
    out = np.empty(shape, dtype=np.result_type(c, d))
    sl_e = [slice(None)] * out.ndim
    sl_o = [slice(None)] * out.ndim
    sl_e[axis] = slice(0, None, 2)
    sl_o[axis] = slice(1, None, 2)
    out[tuple(sl_e)] = even
    out[tuple(sl_o)] = odd
    return out


@dataclass(frozen=True)
class SubbandSet:
    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray

    def __post_init__(self):
        shapes = {b.shape for b in (self.LL, self.LH, self.HL, self.HH)}
        if len(shapes) != 1:
            raise ValueError(f"sub-band shapes differ: {sorted(shapes)}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.LL.shape

    def details(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.LH, self.HL, self.HH

    def concat(self) -> np.ndarray:
        """Channel-wise stack in the order LL, LH, HL, HH: ``(H/2, V/2, 4C)``."""
        return np.concatenate([self.LL, self.LH, self.HL, self.HH], axis=-1)

    @classmethod
    def from_concat(cls, x: np.ndarray) -> "SubbandSet":
        c = x.shape[-1] // 4
        if c * 4 != x.shape[-1]:
            raise ValueError("channel count is not a multiple of 4")
        return cls(*(x[..., i * c:(i + 1) * c] for i in range(4)))


def _as_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if g.ndim != 3:
        raise ValueError(f"expected an (H, V, C) grid, got shape {g.shape}")
    return g


def lifting_forward_2d(grid, ops: LiftingOperators | None = None) -> SubbandSet:
    ops = ops or LiftingOperators()
    g = _as_grid(grid)
    h, v = g.shape[:2]
    if h % 2 or v % 2:
        raise ValueError(f"grid dimensions must be even, got {h}x{v}; pad with pad_to_even first")
    c, d = _split(g, ops, axis=1)
    ll, lh = _split(c, ops, axis=0)
    hl, hh = _split(d, ops, axis=0)
    return SubbandSet(ll, lh, hl, hh)


def lifting_inverse_2d(subbands: SubbandSet, ops: LiftingOperators | None = None) -> np.ndarray:
    ops = ops or LiftingOperators()
    c = _merge(subbands.LL, subbands.LH, ops, axis=0)
    d = _merge(subbands.HL, subbands.HH, ops, axis=0)
    return _merge(c, d, ops, axis=1)


def pad_to_even(grid) -> tuple[np.ndarray, tuple[int, int]]:
    """Symmetric-pad odd spatial dimensions by one; returns the grid and the pad."""
    g = _as_grid(grid)
    ph, pv = g.shape[0] % 2, g.shape[1] % 2
    if ph or pv:
        g = np.pad(g, ((0, ph), (0, pv), (0, 0)), mode="symmetric")
    return g, (ph, pv)


def max_levels(shape) -> int:
    h, v = int(shape[0]), int(shape[1])
    if min(h, v) < 4:
        raise ValueError(f"grid {h}x{v} is too small for wavelet decomposition (minimum 4x4)")
    return int(math.floor(math.log2(min(h, v)))) - 2


@dataclass(frozen=True)
class WaveletPyramid:
    levels: list[SubbandSet]
    ops: LiftingOperators
    shape: tuple[int, ...]
    pads: list[tuple[int, int]] = field(default_factory=list)
    input_mean: float = 0.0

    def __len__(self) -> int:
        return len(self.levels)

    def level_channels(self) -> list[np.ndarray]:
        return [lv.concat() for lv in self.levels]


def wavelet_pyramid(grid, ops: LiftingOperators | None = None, levels: int = 1) -> WaveletPyramid:
    ops = ops or LiftingOperators()
    g = _as_grid(grid)
    limit = max_levels(g.shape)
    if levels < 1 or levels > limit:
        raise ValueError(f"levels={levels} outside 1..{limit} for a {g.shape[0]}x{g.shape[1]} grid")
    out, pads = [], []
    x = g
    for _ in range(levels):
        x, pad = pad_to_even(x)
        sb = lifting_forward_2d(x, ops)
        out.append(sb)
        pads.append(pad)
        x = sb.LL
    return WaveletPyramid(out, ops, g.shape, pads, float(g.mean()))


def inverse_pyramid(pyramid: WaveletPyramid) -> np.ndarray:
    x = pyramid.levels[-1].LL
    for sb, (ph, pv) in zip(reversed(pyramid.levels), reversed(pyramid.pads)):
        x = lifting_inverse_2d(SubbandSet(x, sb.LH, sb.HL, sb.HH), pyramid.ops)
        x = x[: x.shape[0] - ph, : x.shape[1] - pv]
    return x


def wavelet_regularization(pyramid: WaveletPyramid, lambda1: float = 0.1, lambda2: float = 0.1) -> float:
    """``lambda1 * sum_t D_t**2 + lambda2 * sum_t (A_t - A_{t-1})**2``.

    ``D_t`` is the mean over all detail coefficients (LH, HL, HH) of level
    ``t``, ``A_t`` the mean of its LL band and ``A_0`` the input mean.
    """
    if not pyramid.levels:
        raise ValueError("empty pyramid")
    detail = approx = 0.0
    prev = pyramid.input_mean
    for sb in pyramid.levels:
        d = np.concatenate([b.ravel() for b in sb.details()]).mean()
        a = sb.LL.mean()
        detail += d * d
        approx += (a - prev) ** 2
        prev = a
    return float(lambda1 * detail + lambda2 * approx)


# -- grid dumps ----------------------------------------------------------------

GRID_MAGIC = b"WXGD"


def write_grid(grid, path) -> None:
    """Raw dump: magic, uint32 H, V, C (little-endian), then float32 row-major values."""
    g = _as_grid(grid)
    h, v, c = g.shape
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(np.array([h, v, c], dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(g, dtype="<f4").tobytes())


def read_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != GRID_MAGIC:
        raise ValueError(f"{path}: not a grid dump")
    h, v, c = np.frombuffer(blob[4:16], dtype="<u4")
    values = np.frombuffer(blob[16:], dtype="<f4")
    if values.size != h * v * c:
        raise ValueError(f"{path}: header says {h}x{v}x{c} but holds {values.size} values")
    return values.reshape(h, v, c).astype(np.float64)


def dump_pyramid(pyramid: WaveletPyramid, directory) -> list:
    """Write every sub-band of every level as ``level{t}_{band}.grid``."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for t, sb in enumerate(pyramid.levels, 1):
        for band in ("LL", "LH", "HL", "HH"):
            p = directory / f"level{t}_{band}.grid"
            write_grid(getattr(sb, band), p)
            written.append(p)
    return written


class LiftingWavelet2D(TransformerMixin, BaseEstimator):
    """Multi-level lifting decomposition with a sklearn-style surface.

    ``transform`` maps a grid to a :class:`WaveletPyramid`;
    ``inverse_transform`` reconstructs the grid.
    """

    def __init__(self, predict=HAAR_PREDICT, update=HAAR_UPDATE, levels: int = 2,
                 lambda1: float = 0.1, lambda2: float = 0.1):
        self.predict = predict
        self.update = update
        self.levels = levels
        self.lambda1 = lambda1
        self.lambda2 = lambda2

    @property
    def operators(self) -> LiftingOperators:
        return LiftingOperators(tuple(self.predict), tuple(self.update))

    def fit(self, X, y=None):
        g = _as_grid(X)
        self.max_levels_ = max_levels(g.shape)
        if not 1 <= self.levels <= self.max_levels_:
            raise ValueError(f"levels={self.levels} outside 1..{self.max_levels_}")
        self.input_shape_ = g.shape
        return self

    def transform(self, X) -> WaveletPyramid:
        return wavelet_pyramid(X, self.operators, self.levels)

    def inverse_transform(self, pyramid: WaveletPyramid) -> np.ndarray:
        return inverse_pyramid(pyramid)

    def regularization(self, pyramid: WaveletPyramid) -> float:
        return wavelet_regularization(pyramid, self.lambda1, self.lambda2)
