"""Experiment configuration: INI files with a fixed schema.

Every key has a type and a per-experiment default; unknown sections or keys
are rejected.  ``ExperimentConfig.to_ini`` writes every key explicitly so a
written config reads back to an equal object.

List syntax: comma-separated numbers, where a token ``a:b:s`` expands to
``a, a+s, ..., b`` (inclusive).  Probe lists are semicolon-separated triples.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .grid import GridSpec, TestFunction, gaussian_bump, point_source, smooth_bump
from .measures import SamplerSpec

__all__ = ["ConfigError", "ExperimentConfig", "EXPERIMENTS", "SCHEMA", "load_config", "default_config"]

EXPERIMENTS = ("verify", "covariance", "ensemble", "rooms", "decay")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


# -- value codecs -----------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    out: list[float] = []
    for tok in s.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            a, b, step = (float(p) for p in tok.split(":"))
            if step <= 0:
                raise ValueError(f"range step must be positive in {tok!r}")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            out.extend(float(a + i * step) for i in range(max(count, 0)))
        else:
            out.append(float(tok))
    return tuple(out)


def _fmt_floats(v) -> str:
    return ", ".join(_fmt_float(x) for x in v)


def _parse_probes(s: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for tok in s.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"probe {tok!r} must have three coordinates")
        out.append(tuple(float(p) for p in parts))
    return tuple(out)


def _fmt_probes(v) -> str:
    return "; ".join(" ".join(_fmt_float(c) for c in p) for p in v)


def _parse_opt_float(s: str):
    s = s.strip()
    return None if s.lower() in ("", "none", "auto") else float(s)


def _fmt_opt_float(v) -> str:
    return "auto" if v is None else _fmt_float(v)


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    fmt: Callable[[Any], str]
    default: Any


_INT = (int, str)
_FLOAT = (float, _fmt_float)
_STR = (str.strip, str)
_BOOL = (_parse_bool, lambda b: "true" if b else "false")
_FLOATS = (_parse_floats, _fmt_floats)
_PROBES = (_parse_probes, _fmt_probes)
_OPTF = (_parse_opt_float, _fmt_opt_float)


def _k(codec, default):
    return _Key(codec[0], codec[1], default)


SCHEMA: dict[str, dict[str, _Key]] = {
    "run": {
        "experiment": _k(_STR, ""),
        "threads": _k(_INT, 1),
    },
    "grid": {"n": _k(_INT, 64), "L": _k(_FLOAT, 64.0)},
    "physics": {"m": _k(_FLOAT, 1.0)},
    "sampler": {
        "kind": _k(_STR, "moving_average"),
        "seed": _k(_INT, 0),
        "kernel_radius": _k(_OPTF, None),
        "kappa": _k(_FLOAT, 1.0),
        "polarization": _k(_FLOAT, 0.0),
        "amplitude": _k(_FLOAT, 1.0),
    },
    "phi": {
        "kind": _k(_STR, "bump"),
        "radius": _k(_FLOAT, 1.5),
        "sigma": _k(_FLOAT, 2.0),
        "cutoff": _k(_FLOAT, 1e-16),
        "component": _k(_INT, 0),
        "amplitude": _k(_FLOAT, 1.0),
    },
    "experiment": {
        "times": _k(_FLOATS, (0.0,)),
        "M": _k(_INT, 1000),
        "delta": _k(_FLOAT, 0.25),
        "lambdas": _k(_FLOATS, (0.5, 1.0, 2.0)),
        "probes": _k(_PROBES, ((0.0, 0.0, 0.0),)),
        "seminorm_radii": _k(_FLOATS, ()),
        "masses": _k(_FLOATS, (1.0,)),
        "fit_from": _k(_OPTF, None),
        "spot_checks": _k(_INT, 10),
        "csv_times": _k(_FLOATS, ()),
        "yukawa_check": _k(_BOOL, False),
        "write_projections": _k(_BOOL, False),
    },
    "checks": {
        "algebra_tol": _k(_FLOAT, 1e-14),
        "symbol_tol": _k(_FLOAT, 1e-12),
        "relative_tol": _k(_FLOAT, 1e-10),
        "amplitude_floor": _k(_FLOAT, 1e-9),
        "group_tol": _k(_FLOAT, 1e-11),
        "fixed_point_tol": _k(_FLOAT, 1e-11),
        "decay_factor": _k(_FLOAT, 10.0),
        "max_envelope_slope": _k(_FLOAT, -1.2),
        "yukawa_tol": _k(_FLOAT, 0.01),
        "mean_se": _k(_FLOAT, 4.0),
        "cumulant_se": _k(_FLOAT, 4.0),
        "initial_cumulant_se": _k(_FLOAT, 6.0),
        "charfun_se": _k(_FLOAT, 3.0),
        "max_room_spread": _k(_FLOAT, 4.0),
        "target_exponent": _k(_FLOAT, -1.5),
        "exponent_tol": _k(_FLOAT, 0.15),
        "mass_tol": _k(_FLOAT, 0.1),
    },
    "output": {"directory": _k(_STR, "results")},
}

# per-experiment overrides of the schema defaults
_EXPERIMENT_DEFAULTS: dict[str, dict[tuple[str, str], Any]] = {
    "verify": {
        ("phi", "kind"): "gaussian",
        ("phi", "sigma"): 2.0,
        ("experiment", "times"): (2.0, 4.0, 8.0),
        ("experiment", "seminorm_radii"): (4.0, 8.0, 12.0),
    },
    "covariance": {
        ("sampler", "kind"): "gaussian_spectral",
        ("sampler", "polarization"): 0.5,
        ("experiment", "times"): _parse_floats("1:24:0.25"),
        ("experiment", "probes"): _parse_probes("0 0 0; 1 0 0; 0 2 0; 1 1 1; 0 0 3; 2 2 0"),
        ("experiment", "csv_times"): (0.0, 2.0, 20.0),
    },
    "ensemble": {
        ("sampler", "kernel_radius"): 1.5,
        ("sampler", "polarization"): 0.5,
        ("experiment", "times"): (0.0, 4.0, 12.0, 24.0),
        ("experiment", "M"): 10000,
    },
    "rooms": {
        ("experiment", "times"): (4.0, 8.0, 16.0, 24.0),
        ("experiment", "delta"): 0.9,
    },
    "decay": {
        ("grid", "n"): 128,
        ("grid", "L"): 128.0,
        ("phi", "kind"): "gaussian",
        ("phi", "sigma"): 1.5,
        ("experiment", "times"): _parse_floats("8:48:1"),
        ("experiment", "masses"): (1.0, 2.0),
        ("experiment", "fit_from"): 8.0,
    },
}


def _defaults(experiment: str) -> dict[tuple[str, str], Any]:
    vals = {(s, k): key.default for s, keys in SCHEMA.items() for k, key in keys.items()}
    vals.update(_EXPERIMENT_DEFAULTS.get(experiment, {}))
    vals[("run", "experiment")] = experiment
    return vals


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"run.experiment: unknown experiment {self.experiment!r}; "
                              f"expected one of {EXPERIMENTS}")
        merged = _defaults(self.experiment)
        for key, v in self.values.items():
            if key not in merged:
                raise ConfigError(f"unknown key {key[0]}.{key[1]}")
            merged[key] = v
        object.__setattr__(self, "values", merged)

    def __getitem__(self, key: tuple[str, str]):
        return self.values[key]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with ``section__key=value`` overrides."""
        vals = dict(self.values)
        for name, v in updates.items():
            s, k = name.split("__", 1)
            if (s, k) not in vals:
                raise ConfigError(f"unknown key {s}.{k}")
            vals[(s, k)] = v
        return ExperimentConfig(self.experiment, vals)

    # -- derived objects ---------------------------------------------------------

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.get("grid", "n"), self.get("grid", "L"))

    @property
    def m(self) -> float:
        return float(self.get("physics", "m"))

    @property
    def seed(self) -> int:
        return int(self.get("sampler", "seed"))

    def sampler_spec(self) -> SamplerSpec:
        kind = self.get("sampler", "kind")
        params: dict[str, float] = {"amplitude": self.get("sampler", "amplitude"),
                                    "polarization": self.get("sampler", "polarization")}
        if kind == "gaussian_spectral":
            params["kappa"] = self.get("sampler", "kappa")
        else:
            r = self.get("sampler", "kernel_radius")
            if r is not None:
                params["kernel_radius"] = r
        return SamplerSpec(kind, self.grid, self.seed, params)

    def sampler_range(self) -> float:
        """Correlation range of the configured sampler, from its parameters."""
        if self.get("sampler", "kind") == "gaussian_spectral":
            return math.sqrt(-2 * math.log(1e-16)) / self.get("sampler", "kappa")
        r = self.get("sampler", "kernel_radius")
        return 2.0 * (3.0 * self.grid.h if r is None else r)

    def phi_radius(self) -> float:
        kind = self.get("phi", "kind")
        if kind == "bump":
            return float(self.get("phi", "radius"))
        if kind == "gaussian":
            return self.get("phi", "sigma") * math.sqrt(-2.0 * math.log(self.get("phi", "cutoff")))
        return 0.0

    def test_function(self, grid: GridSpec | None = None) -> TestFunction:
        grid = self.grid if grid is None else grid
        kind = self.get("phi", "kind")
        comp = self.get("phi", "component")
        amp = self.get("phi", "amplitude")
        if kind == "bump":
            return smooth_bump(grid, self.get("phi", "radius"), comp, amplitude=amp)
        if kind == "gaussian":
            return gaussian_bump(grid, self.get("phi", "sigma"), comp, cutoff=self.get("phi", "cutoff"),
                                 amplitude=amp)
        return point_source(grid, comp, amplitude=amp)

    # -- validation --------------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`ConfigError` naming the first invalid key."""
        try:
            grid = self.grid
        except ValueError as e:
            raise ConfigError(f"grid: {e}") from None
        if grid.n > 512:
            raise ConfigError("grid.n: above 512 is not supported")
        if not self.m > 0:
            raise ConfigError(f"physics.m: mass must be positive, got {self.m}")
        if self.get("run", "threads") < 1:
            raise ConfigError("run.threads: must be at least 1")
        try:
            self.sampler_spec()
        except ValueError as e:
            raise ConfigError(f"sampler: {e}") from None
        kr = self.get("sampler", "kernel_radius")
        if kr is not None and not 0 <= kr <= grid.L / 4:
            raise ConfigError(f"sampler.kernel_radius: {kr} outside [0, L/4 = {grid.L / 4}]")
        if self.get("sampler", "kappa") <= 0:
            raise ConfigError("sampler.kappa: must be positive")
        if not -1 <= self.get("sampler", "polarization") <= 1:
            raise ConfigError("sampler.polarization: must lie in [-1, 1]")
        if self.get("phi", "kind") not in ("bump", "gaussian", "point"):
            raise ConfigError(f"phi.kind: unknown test function {self.get('phi', 'kind')!r}")
        if not 0 <= self.get("phi", "component") < 8:
            raise ConfigError("phi.component: must lie in 0..7")
        if not 0 < self.get("phi", "cutoff") < 1:
            raise ConfigError("phi.cutoff: must lie in (0, 1)")
        if self.get("phi", "kind") == "bump" and self.get("phi", "radius") <= 0:
            raise ConfigError("phi.radius: must be positive")
        if self.get("phi", "kind") == "gaussian" and self.get("phi", "sigma") <= 0:
            raise ConfigError("phi.sigma: must be positive")
        if not 0 < self.get("experiment", "delta") < 1:
            raise ConfigError("experiment.delta: must lie in (0, 1)")
        if self.get("experiment", "M") < 1:
            raise ConfigError("experiment.M: need at least one sample")
        if any(m <= 0 for m in self.get("experiment", "masses")):
            raise ConfigError("experiment.masses: masses must be positive")
        times = self.get("experiment", "times")
        if not times:
            raise ConfigError("experiment.times: empty time grid")
        half = grid.L / 2
        tmax = max(abs(t) for t in times)
        rbar = self.phi_radius()
        exp = self.experiment
        if exp == "verify":
            for R in self.get("experiment", "seminorm_radii"):
                if not 0 < R < half:
                    raise ConfigError(f"experiment.seminorm_radii: R = {R} must lie in (0, L/2 = {half})")
                if not R + tmax < half:
                    raise ConfigError(f"experiment.seminorm_radii: R + t = {R + tmax} must be below L/2 = {half}")
            if not tmax + rbar < half:
                raise ConfigError(f"experiment.times: t + r_bar = {tmax + rbar} must be below L/2 = {half}")
        elif exp == "covariance":
            reach = max(float(np.linalg.norm(z)) for z in self.get("experiment", "probes"))
            if not 2 * tmax + reach + self.sampler_range() < grid.L:
                raise ConfigError(f"experiment.times: 2 t + |z| + r_corr = "
                                  f"{2 * tmax + reach + self.sampler_range():.3f} must be below L = {grid.L}")
            for z in self.get("experiment", "probes"):
                if any(abs(c / grid.h - round(c / grid.h)) > 1e-9 for c in z):
                    raise ConfigError(f"experiment.probes: {z} is not on the grid")
        elif exp in ("ensemble", "rooms"):
            need = tmax + rbar + self.sampler_range()
            if not need < half:
                raise ConfigError(f"experiment.times: t + r_bar + r_corr = {need:.3f} must be below L/2 = {half}")
            if exp == "ensemble" and not self.get("experiment", "lambdas"):
                raise ConfigError("experiment.lambdas: empty")
        elif exp == "decay":
            if not tmax + rbar < half:
                raise ConfigError(f"experiment.times: t + r_bar = {tmax + rbar:.3f} must be below L/2 = {half}")
        return self

    # -- serialization -----------------------------------------------------------

    def to_ini(self) -> str:
        lines = []
        for s, keys in SCHEMA.items():
            lines.append(f"[{s}]")
            for k, key in keys.items():
                lines.append(f"{k} = {key.fmt(self.values[(s, k)])}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        out: dict[str, dict] = {}
        for (s, k), v in self.values.items():
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out.setdefault(s, {})[k] = v
        return out

    def digest(self) -> str:
        """sha256 of the canonical JSON form."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_string(cls, text: str, experiment: str | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case-sensitive (L, M)
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        raw: dict[tuple[str, str], Any] = {}
        for s in parser.sections():
            if s not in SCHEMA:
                raise ConfigError(f"unknown section [{s}]")
            for k, text_value in parser.items(s):
                if k not in SCHEMA[s]:
                    raise ConfigError(f"unknown key {s}.{k}")
                try:
                    raw[(s, k)] = SCHEMA[s][k].parse(text_value)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"{s}.{k}: {e}") from None
        named = raw.pop(("run", "experiment"), "") or ""
        if experiment is None:
            experiment = named
        elif named and named != experiment:
            raise ConfigError(f"run.experiment: config is for {named!r}, subcommand is {experiment!r}")
        if not experiment:
            raise ConfigError("run.experiment: no experiment given")
        return cls(experiment, raw)


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return ExperimentConfig.from_string(text, experiment)


def default_config(experiment: str) -> ExperimentConfig:
    return ExperimentConfig(experiment)
