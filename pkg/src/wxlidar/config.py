"""Run configuration: plain-text ``key = value`` files with dotted sections.

Recognised keys::

    seed, threads, layout
    weather.type, weather.level, weather.value
    sensor.preset, sensor.<SensorModel field>
    filter.name, filter.<parameter of any filter>
    wavelet.predict, wavelet.update, wavelet.levels
    projection.resolution, projection.bounds

Lists are written ``[a, b, c]``; an unset optional value is ``none``.
Anything else is rejected. :meth:`RunConfig.to_text` writes every key in
sorted order; parsing that text gives back an equal config.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path
from typing import Any, Callable

from .filters import FILTERS, make_filter
from .io import LAYOUTS
from .weather import SENSOR_PRESETS, SensorModel, SeverityLevel, Weather

LEVEL_CHOICES = tuple(s.value for s in SeverityLevel) + ("random",)


def _parse_int(s: str) -> int:
    return int(s)


def _parse_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"{s!r} is not finite")
    return v


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(s: str):
        return None if s.lower() == "none" else parse(s)
    return inner


def _choice(options) -> Callable[[str], str]:
    options = tuple(options)

    def inner(s: str) -> str:
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    return inner


def _float_list(n: int) -> Callable[[str], tuple]:
    def inner(s: str) -> tuple:
        s = s.strip()
        if not (s.startswith("[") and s.endswith("]")):
            raise ValueError(f"expected a bracketed list, got {s!r}")
        items = [p.strip() for p in s[1:-1].split(",") if p.strip()]
        if len(items) != n:
            raise ValueError(f"expected {n} values, got {len(items)}")
        return tuple(_parse_float(p) for p in items)
    return inner


def _int_list(n: int) -> Callable[[str], tuple]:
    floats = _float_list(n)

    def inner(s: str) -> tuple:
        vals = floats(s)
        if any(v != int(v) or v < 1 for v in vals):
            raise ValueError(f"expected positive integers, got {s!r}")
        return tuple(int(v) for v in vals)
    return inner


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_FILTER_PARAMS: dict[str, str] = {}
for _name in FILTERS:
    for _p, _default in make_filter(_name).get_params().items():
        _FILTER_PARAMS[_p] = "int" if isinstance(_default, int) else "float"

_SENSOR_FIELDS = [f.name for f in dataclasses.fields(SensorModel) if f.name != "c"]

# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "seed": (_parse_int, 0),
    "threads": (_parse_int, 1),
    "layout": (_choice(LAYOUTS), "kitti4"),
    "weather.type": (_choice(w.value for w in Weather), "snow"),
    "weather.level": (_choice(LEVEL_CHOICES), "random"),
    "weather.value": (_optional(_parse_float), None),
    "sensor.preset": (_choice(SENSOR_PRESETS), "hdl64-like"),
    "filter.name": (_choice(FILTERS), "dsor"),
    "wavelet.predict": (_float_list(3), (0.0, 1.0, 0.0)),
    "wavelet.update": (_float_list(3), (0.0, 0.5, 0.0)),
    "wavelet.levels": (_parse_int, 2),
    "projection.resolution": (_int_list(3), (256, 256, 32)),
    "projection.bounds": (_optional(_float_list(6)), None),
}
for _f in _SENSOR_FIELDS:
    SCHEMA[f"sensor.{_f}"] = (_optional(_parse_float), None)
for _p, _kind in _FILTER_PARAMS.items():
    SCHEMA[f"filter.{_p}"] = (_optional(_parse_int if _kind == "int" else _parse_float), None)


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated mapping of every schema key to its value."""

    values: dict = dataclasses.field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __post_init__(self):
        unknown = set(self.values) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        full = {k: d for k, (_, d) in SCHEMA.items()}
        full.update(self.values)
        object.__setattr__(self, "values", full)
        if full["threads"] < 1:
            raise ConfigError("threads must be at least 1")
        if full["wavelet.levels"] < 1:
            raise ConfigError("wavelet.levels must be at least 1")

    def __getitem__(self, key: str):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def section(self, prefix: str) -> dict:
        """Set (non-``None``) keys under ``prefix.``, with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p) and v is not None}

    def updated(self, **overrides) -> "RunConfig":
        """Copy with keys replaced; use ``__`` for the dot (``weather__type="fog"``)."""
        vals = dict(self.values)
        for k, v in overrides.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            vals[key] = v
        return RunConfig(vals)

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in sorted(self.values))

    # -- builders -------------------------------------------------------------

    def sensor(self) -> SensorModel:
        from .weather import sensor_preset

        overrides = {k: v for k, v in self.section("sensor").items() if k != "preset"}
        return sensor_preset(self["sensor.preset"], **overrides)

    def filter_params(self) -> dict:
        params = {k: v for k, v in self.section("filter").items() if k != "name"}
        est = make_filter(self["filter.name"])
        bad = set(params) - set(est.get_params())
        if bad:
            raise ConfigError(f"filter {self['filter.name']!r} takes no {', '.join(sorted(bad))}")
        return params

    def make_filter(self):
        return make_filter(self["filter.name"], **self.filter_params())

    def projection_bounds(self):
        b = self["projection.bounds"]
        return None if b is None else [b[0:2], b[2:4], b[4:6]]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in vals:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            vals[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {key}: {exc}") from None
    return RunConfig(vals)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
