"""Physics-based snow, fog and rain corruption of clean LiDAR scans.

Snow and rain use a per-beam particle model. Airborne particles along a
beam form a Poisson process whose size distribution is exponential
(Gunn-Marshall for snow, Marshall-Palmer for rain). A particle at range
``R`` with diameter ``D`` returns a fraction ``min((D / D_b(R))**2, 1)`` of
the beam, where ``D_b(R) = beam_divergence * R``. It wins the echo over the
hard target at ``R0`` when::

    rho_particle * occlusion / R**2 > rho_target / R0**2

The process of *winning* particles is sampled directly: its rate along
the beam has a closed form, so only the few relevant particles are drawn.
The nearest winner becomes the recorded return. Particles closer than
half a pulse length to the target merge with it and are ignored.

Fog treats every point analytically: the hard return is attenuated by
``exp(-2 alpha R0)`` and competes with the peak of the soft (volume)
return, which lies at ``R_s = 1 / (2 alpha)`` for a response shaped like
``R exp(-2 alpha R)``.

All simulators keep point count and order. Points that change position get
the weather code (110 snow, 111 fog, 112 rain); everything else keeps its
original semantic code and instance id.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .io import FOG_CODE, RAIN_CODE, SNOW_CODE, LabelSet, PointCloud
from ._validation import as_cloud, as_labels

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class SensorModel:
    tau_h: float = 6e-9  # half-power pulse width, s
    r_max: float = 120.0  # furthest detectable range, m
    f_s: float = 0.05  # focal slope
    f_o: float = 0.8  # focal offset
    i_max: float = 255.0  # full-scale intensity in file units
    beam_divergence: float = 3e-3  # rad; D_b(R) = beam_divergence * R
    r_min: float = 1.0  # closest resolvable return, m
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("tau_h", "r_max", "f_s", "f_o", "i_max", "beam_divergence", "r_min", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"sensor.{name} must be positive")
        if self.c != SPEED_OF_LIGHT:
            raise ValueError("the speed of light is not configurable")

    @property
    def half_pulse(self) -> float:
        """Half the pulse length in metres, ``c * tau_h / 2``."""
        return self.c * self.tau_h / 2.0

    def beam_diameter(self, r):
        return self.beam_divergence * np.asarray(r, dtype=np.float64)


SENSOR_PRESETS = {
    "hdl64-like": SensorModel(tau_h=6e-9, r_max=120.0, i_max=255.0),
    "vlp32-like": SensorModel(tau_h=6e-9, r_max=100.0, i_max=255.0),
}


def sensor_preset(name: str, **overrides) -> SensorModel:
    try:
        base = SENSOR_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown sensor preset {name!r}; choose from {sorted(SENSOR_PRESETS)}") from None
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class SnowParams:
    rate_mm_h: float
    reflectivity: float = 0.9

    def __post_init__(self):
        if self.rate_mm_h < 0:
            raise ValueError("snowfall rate must be non-negative")


@dataclass(frozen=True)
class FogParams:
    beta: float
    alpha: float
    beta0: float = 0.01

    def __post_init__(self):
        if min(self.beta, self.alpha, self.beta0) < 0:
            raise ValueError("fog coefficients must be non-negative")


@dataclass(frozen=True)
class RainParams:
    rate_mm_h: float
    q_e: float = 2.0
    n0_per_m3_mm: float = 8000.0
    lambda_coef: float = 4.1  # Lambda = lambda_coef * rate ** lambda_exp, 1/mm
    lambda_exp: float = -0.21
    reflectivity: float = 0.3

    def __post_init__(self):
        if self.rate_mm_h < 0:
            raise ValueError("rain rate must be non-negative")
        if not self.q_e > 0:
            raise ValueError("extinction efficiency must be positive")

    @property
    def slope(self) -> float:
        """Marshall-Palmer ``Lambda`` in 1/mm (infinite at zero rate)."""
        if self.rate_mm_h == 0:
            return np.inf
        return self.lambda_coef * self.rate_mm_h ** self.lambda_exp


# -- severity levels ---------------------------------------------------------


class Weather(str, Enum):
    SNOW = "snow"
    FOG = "fog"
    RAIN = "rain"


class SeverityLevel(str, Enum):
    LIGHT = "light"
    MODERATE = "moderate"
    HEAVY = "heavy"


SEVERITY_TABLE = {
    Weather.SNOW: {  # snowfall rate, mm/h
        SeverityLevel.LIGHT: (0.5, 1.0),
        SeverityLevel.MODERATE: (1.5, 2.0),
        SeverityLevel.HEAVY: (2.5, 3.0),
    },
    Weather.FOG: {  # backscattering coefficient beta
        SeverityLevel.LIGHT: (0.01, 0.05),
        SeverityLevel.MODERATE: (0.08, 0.14),
        SeverityLevel.HEAVY: (0.18, 0.25),
    },
    Weather.RAIN: {  # rain rate, mm/h
        SeverityLevel.LIGHT: (1.0, 1.5),
        SeverityLevel.MODERATE: (1.8, 2.4),
        SeverityLevel.HEAVY: (2.6, 3.0),
    },
}


def make_params(weather, value: float):
    """Parameter object for ``weather`` driven by its single severity value."""
    weather = Weather(weather)
    if weather is Weather.SNOW:
        return SnowParams(float(value))
    if weather is Weather.FOG:
        # the severity value doubles as the attenuation coefficient
        return FogParams(beta=float(value), alpha=float(value))
    return RainParams(float(value))


def severity_value(params) -> float:
    if isinstance(params, (SnowParams, RainParams)):
        return params.rate_mm_h
    return params.beta


def sample_severity(weather, level, rng: np.random.Generator):
    lo, hi = SEVERITY_TABLE[Weather(weather)][SeverityLevel(level)]
    return make_params(weather, rng.uniform(lo, hi))


# -- random streams ------------------------------------------------------------


def frame_rng(seed: int, sequence: str = "", frame: int | str = 0) -> np.random.Generator:
    """Independent, reproducible stream for one frame of one sequence."""
    seq_key = zlib.crc32(str(sequence).encode())
    frame_key = zlib.crc32(str(frame).encode())
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, seq_key, frame_key]))


# -- particle engine -------------------------------------------------------------

_GRID = 48
_CHUNK = 32768


def _winning_rate(r, r0, rho_t, rho_p, n0, lam, divergence):
    """Rate per metre of particles at range ``r`` that outshine the target.

    ``n0`` is in 1/(m^3 mm), ``lam`` in 1/mm. A particle of diameter ``D``
    (mm) intersects the beam when its centre is within ``(D_b + D) / 2`` of
    the axis, and wins when ``D`` exceeds the threshold ``d_star``.
    """
    b = divergence * r  # beam diameter, m
    ok = rho_p * r0 ** 2 > rho_t * r ** 2
    d_star = np.where(ok, 1e3 * b * (r / r0) * np.sqrt(rho_t / rho_p), 0.0)  # mm
    big_b = b + 1e-3 * d_star
    w = _size_weights(big_b, lam)
    rate = n0 * np.exp(-lam * d_star) * (np.pi / 4.0) * w.sum(axis=0)
    return np.where(ok, rate, 0.0), d_star, big_b


def _size_weights(big_b, lam):
    # integral of exp(-lam u) (B + 1e-3 u)^2 du split into gamma(1, 2, 3) parts
    return np.stack([big_b ** 2 / lam, 2e-3 * big_b / lam ** 2, np.broadcast_to(2e-6 / lam ** 3, big_b.shape)])


def _sample_winners(r0, rho_t, rho_p, n0, lam, sensor, rng):
    """Per beam: whether a particle wins, its range and diameter, and the largest winner diameter."""
    m = r0.shape[0]
    hit = np.zeros(m, dtype=bool)
    r_hit = np.full(m, np.inf)
    d_hit = np.zeros(m)
    d_max = np.zeros(m)
    r_hi = r0 - sensor.half_pulse
    valid = np.flatnonzero(r_hi > sensor.r_min)
    if not np.isfinite(lam) or n0 <= 0 or valid.size == 0:
        return hit, r_hit, d_hit, d_max
    u = np.linspace(0.0, 1.0, _GRID)
    for start in range(0, valid.size, _CHUNK):
        rows = valid[start:start + _CHUNK]
        lo = sensor.r_min
        hi = r_hi[rows]
        # geometric spacing puts nodes where the winning rate is concentrated
        grid = lo * (hi[:, None] / lo) ** u[None, :]
        rate, _, _ = _winning_rate(grid, r0[rows, None], rho_t[rows, None], rho_p, n0, lam,
                                   sensor.beam_divergence)
        seg = 0.5 * (rate[:, 1:] + rate[:, :-1]) * np.diff(grid, axis=1)
        cum = np.concatenate([np.zeros((len(rows), 1)), np.cumsum(seg, axis=1)], axis=1)
        total = cum[:, -1]
        counts = rng.poisson(total)
        owners = np.repeat(np.arange(len(rows)), counts)
        if owners.size == 0:
            continue
        target = rng.uniform(size=owners.size) * total[owners]
        c_own = cum[owners]
        k = np.clip((c_own < target[:, None]).sum(axis=1), 1, _GRID - 1)
        c0 = c_own[np.arange(owners.size), k - 1]
        c1 = c_own[np.arange(owners.size), k]
        g0 = grid[owners, k - 1]
        g1 = grid[owners, k]
        frac = np.where(c1 > c0, (target - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.0)
        r_p = g0 + frac * (g1 - g0)
        _, d_star, big_b = _winning_rate(r_p, r0[rows][owners], rho_t[rows][owners], rho_p, n0, lam,
                                         sensor.beam_divergence)
        w = _size_weights(big_b, lam)
        cw = np.cumsum(w, axis=0) / w.sum(axis=0)
        shape = 1 + (rng.uniform(size=owners.size)[None, :] > cw).sum(axis=0)
        diam = d_star + rng.gamma(shape.astype(np.float64), 1.0 / lam)
        beam = rows[owners]
        # nearest winner per beam: sort by range, keep first occurrence
        order = np.lexsort((r_p, beam))
        b_sorted = beam[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = b_sorted[1:] != b_sorted[:-1]
        sel = order[first]
        hit[beam[sel]] = True
        r_hit[beam[sel]] = r_p[sel]
        d_hit[beam[sel]] = diam[sel]
        np.maximum.at(d_max, beam, diam)
    return hit, r_hit, d_hit, d_max


def _target_reflectance(pc: PointCloud, sensor: SensorModel, floor: float = 0.05) -> np.ndarray:
    return np.clip(pc.intensity.astype(np.float64) / sensor.i_max, floor, 1.0)


def _check_pair(pc: PointCloud, labels: LabelSet):
    if len(labels) != pc.n:
        raise ValueError(f"{len(labels)} labels for {pc.n} points")


# -- simulators -------------------------------------------------------------------


def snow_size_distribution(rate_mm_h: float) -> tuple[float, float]:
    """Gunn-Marshall ``(N0 [1/(m^3 mm)], Lambda [1/mm])`` for a liquid-equivalent rate."""
    if rate_mm_h <= 0:
        return 0.0, np.inf
    return 3.8e3 * rate_mm_h ** -0.87, 2.55 * rate_mm_h ** -0.48


def simulate_snow(pc: PointCloud, labels: LabelSet, p: SnowParams, sensor: SensorModel | None = None,
                  rng: np.random.Generator | None = None):
    sensor = sensor or SensorModel()
    rng = rng if rng is not None else np.random.default_rng()
    _check_pair(pc, labels)
    if p.rate_mm_h == 0 or pc.n == 0:
        return pc, labels
    n0, lam = snow_size_distribution(p.rate_mm_h)
    hit, r_p, d_p, _ = _sample_winners(pc.range, _target_reflectance(pc, sensor), p.reflectivity,
                                       n0, lam, sensor, rng)
    if not hit.any():
        return pc, labels
    # the particle echo peaks half a pulse behind the particle, so the
    # recovered distance is the particle range itself
    r_star = r_p[hit]
    scale = r_star / pc.range[hit]
    xyz = pc.xyz.astype(np.float64)
    xyz[hit] *= scale[:, None]
    occl = np.minimum((1e-3 * d_p[hit] / sensor.beam_diameter(r_star)) ** 2, 1.0)
    received = sensor.i_max * p.reflectivity * occl
    i_snow = received + sensor.i_max * sensor.f_s * np.abs(sensor.f_o - (1.0 - r_star / sensor.r_max)) ** 2
    inten = pc.intensity.astype(np.float64)
    inten[hit] = np.clip(i_snow, 0.0, sensor.i_max)
    codes = np.array(labels.codes)
    codes[hit] = SNOW_CODE
    return pc.replace(xyz=xyz, intensity=inten), labels.with_codes(codes)


def fog_scatter_range(alpha: float) -> float:
    """Range of the soft-return peak; infinite in clear air."""
    return np.inf if alpha <= 0 else 1.0 / (2.0 * alpha)


def fog_intensities(intensity, r0, p: FogParams, sensor: SensorModel | None = None):
    """``(i_hard, i_soft, R_s)`` for the given intensities and ranges."""
    sensor = sensor or SensorModel()
    i = np.asarray(intensity, dtype=np.float64)
    r0 = np.asarray(r0, dtype=np.float64)
    i_hard = i * np.exp(-2.0 * p.alpha * r0)
    r_s = fog_scatter_range(p.alpha)
    if not np.isfinite(r_s) or p.beta == 0:
        return i_hard, np.zeros_like(i_hard), r_s
    i_tmp = p.beta * np.exp(-2.0 * p.alpha * r_s) * sensor.half_pulse
    i_soft = i * (r0 ** 2 / p.beta0) * p.beta * i_tmp
    return i_hard, i_soft, r_s


def simulate_fog(pc: PointCloud, labels: LabelSet, p: FogParams, sensor: SensorModel | None = None,
                 rng: np.random.Generator | None = None):
    sensor = sensor or SensorModel()
    rng = rng if rng is not None else np.random.default_rng()
    _check_pair(pc, labels)
    if pc.n == 0 or (p.alpha == 0 and p.beta == 0):
        return pc, labels
    r0 = pc.range
    i_hard, i_soft, r_s = fog_intensities(pc.intensity, r0, p, sensor)
    jitter = rng.uniform(0.95, 1.05, size=pc.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r0 > 0, r_s / r0, np.inf) * jitter
    soft = (i_soft > i_hard) & (scale * r0 < r0 - sensor.half_pulse) & (scale * r0 >= sensor.r_min)
    xyz = pc.xyz.astype(np.float64)
    xyz[soft] *= scale[soft, None]
    inten = np.where(soft, np.minimum(i_soft, sensor.i_max), i_hard)
    codes = np.array(labels.codes)
    codes[soft] = FOG_CODE
    return pc.replace(xyz=xyz, intensity=inten), labels.with_codes(codes)


def rain_extinction(p: RainParams) -> float:
    """Extinction coefficient (1/m) of a Marshall-Palmer rain field.

    ``(pi/4) q_e N0 * 2/Lambda**3``, with ``D`` in mm converted to m^2.
    """
    if p.rate_mm_h == 0:
        return 0.0
    lam = p.slope
    return float(np.pi / 4.0 * p.q_e * p.n0_per_m3_mm * 2.0 / lam ** 3 * 1e-6)


def simulate_rain(pc: PointCloud, labels: LabelSet, p: RainParams, sensor: SensorModel | None = None,
                  rng: np.random.Generator | None = None):
    sensor = sensor or SensorModel()
    rng = rng if rng is not None else np.random.default_rng()
    _check_pair(pc, labels)
    if p.rate_mm_h == 0 or pc.n == 0:
        return pc, labels
    alpha = rain_extinction(p)
    r0 = pc.range
    hit, r_d, _, d_max = _sample_winners(r0, _target_reflectance(pc, sensor), p.reflectivity,
                                         p.n0_per_m3_mm, p.slope, sensor, rng)
    gamma = np.ones(pc.n)
    gamma[hit] = r_d[hit] / r0[hit]
    xyz = pc.xyz.astype(np.float64) * gamma[:, None]
    inten = pc.intensity.astype(np.float64) * np.exp(-2.0 * alpha * r0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.minimum((1e-3 * d_max[hit] / sensor.beam_diameter(r0[hit])) ** 2, 1.0)
    inten[hit] *= ratio
    codes = np.array(labels.codes)
    codes[gamma != 1.0] = RAIN_CODE
    return pc.replace(xyz=xyz, intensity=inten), labels.with_codes(codes)


SIMULATORS = {Weather.SNOW: simulate_snow, Weather.FOG: simulate_fog, Weather.RAIN: simulate_rain}
WEATHER_CODE = {Weather.SNOW: SNOW_CODE, Weather.FOG: FOG_CODE, Weather.RAIN: RAIN_CODE}


def simulate(weather, pc: PointCloud, labels: LabelSet, params, sensor: SensorModel | None = None,
             rng: np.random.Generator | None = None):
    return SIMULATORS[Weather(weather)](pc, labels, params, sensor, rng)


class WeatherAugmenter(TransformerMixin, BaseEstimator):
    """Corrupt clean scans with one weather type.

    Give either ``level`` (a severity drawn per call from its interval) or
    ``value`` (a fixed snowfall rate, fog beta or rain rate). ``augment``
    returns the corrupted cloud and labels; ``transform`` returns only the
    cloud and stores the labels in ``labels_``.
    """

    def __init__(self, weather: str = "snow", level: str | None = "moderate", value: float | None = None,
                 sensor: str | SensorModel = "hdl64-like", random_state=None):
        self.weather = weather
        self.level = level
        self.value = value
        self.sensor = sensor
        self.random_state = random_state

    def _sensor(self) -> SensorModel:
        return self.sensor if isinstance(self.sensor, SensorModel) else sensor_preset(self.sensor)

    def fit(self, X=None, y=None):
        Weather(self.weather)
        if self.value is None:
            if self.level is None:
                raise ValueError("set either level or value")
            SeverityLevel(self.level)
        self.sensor_ = self._sensor()
        self._rng = np.random.default_rng(self.random_state)
        return self

    def augment(self, X, y=None):
        if not hasattr(self, "_rng"):
            self.fit()
        pc = as_cloud(X)
        labels = as_labels(y, pc.n)
        if self.value is not None:
            params = make_params(self.weather, self.value)
        else:
            params = sample_severity(self.weather, self.level, self._rng)
        self.params_ = params
        return simulate(self.weather, pc, labels, params, self.sensor_, self._rng)

    def transform(self, X, y=None):
        pc, labels = self.augment(X, y)
        self.labels_ = labels
        return pc if isinstance(X, PointCloud) else pc.to_array()
