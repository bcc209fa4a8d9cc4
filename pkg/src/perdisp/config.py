"""Run configuration: JSON in, validated dataclasses out."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .potential import PeriodicPotential
from .propagator import WavePacket


@dataclass
class TimeGrid:
    """Sample times.  ``log`` spacing is geometric for start > 0; from
    start = 0 it is uniform in log(1 + t)."""
    start: float = 0.0
    stop: float = 100.0
    count: int = 101
    spacing: str = "linear"

    def values(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.start, self.stop, self.count)
        if self.start > 0:
            return np.geomspace(self.start, self.stop, self.count)
        return self.start + np.expm1(np.linspace(0.0, math.log1p(self.stop - self.start), self.count))


@dataclass
class InitialData:
    """Initial lattice function.

    kind = delta: ``amplitude`` at ``site``.  kind = gaussian:
    exp(-(n - center)^2 / (2 width^2) + i momentum n) truncated at
    ``cutoff`` widths.  kind = file: CSV lines ``site,re,im``.  If ``l1`` is
    set the datum is rescaled to that l1 norm.
    """
    kind: str = "delta"
    site: int = 0
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 2.0
    momentum: float = 0.0
    cutoff: float = 8.0
    file: str | None = None
    l1: float | None = None

    def packet(self, base: Path | None = None) -> WavePacket:
        if self.kind == "delta":
            psi = WavePacket.delta(self.site, self.amplitude)
        elif self.kind == "gaussian":
            half = int(math.ceil(self.cutoff * self.width))
            c = int(round(self.center))
            n = np.arange(c - half, c + half + 1)
            a = self.amplitude * np.exp(-((n - self.center) ** 2) / (2 * self.width ** 2)
                                        + 1j * self.momentum * n)
            psi = WavePacket(int(n[0]), a)
        else:
            path = Path(self.file)
            if base is not None and not path.is_absolute():
                path = base / path
            try:
                data = np.loadtxt(path, delimiter=",", ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError("initial.file", f"cannot read {path}: {exc}") from None
            sites = data[:, 0].astype(int)
            amp = np.zeros(sites.max() - sites.min() + 1, dtype=complex)
            amp[sites - sites.min()] = data[:, 1] + 1j * (data[:, 2] if data.shape[1] > 2 else 0)
            psi = WavePacket(int(sites.min()), amp)
        if self.l1 is not None:
            if psi.l1 == 0:
                raise ConfigError("initial.l1", "cannot rescale the zero datum")
            psi = psi * (self.l1 / psi.l1)
        return psi


@dataclass
class Tolerances:
    kernel_refinement: float = 1e-8
    oracle: float = 1e-6
    unitarity: float = 1e-10
    identity: float = 1e-9


@dataclass
class RunConfig:
    potential: list[float]
    lattice_radius: int | None = None
    boundary: str = "ring"
    ring_cells: int | None = None
    times: TimeGrid = field(default_factory=TimeGrid)
    k_grid: int = 1024
    sigma: float = 6.0
    nonlinearity_sign: str = "defocusing"
    initial: InitialData = field(default_factory=InitialData)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_dir: str = "out"
    seed: int = 0
    margin: int = 20
    dt: float | None = None
    fit_window: list[float] | None = None
    mo_samples: int = 64
    vdc_lambdas: list[float] = field(default_factory=lambda: [1e2, 1e3, 1e4])
    targets: list[int] | None = None

    @property
    def V(self) -> PeriodicPotential:
        return PeriodicPotential(self.potential)

    @property
    def sign(self) -> int:
        return 1 if self.nonlinearity_sign == "defocusing" else -1

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_NESTED = {"times": TimeGrid, "initial": InitialData, "tolerances": Tolerances}


def _number(path, x, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(path, "expected a number")
    if integer:
        if isinstance(x, float) and not x.is_integer():
            raise ConfigError(path, "expected an integer")
        return int(x)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    return float(x)


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(prefix + key, "unknown key")
    kwargs = {}
    for key, value in data.items():
        path = prefix + key
        if key in _NESTED and cls is RunConfig:
            kwargs[key] = _build(_NESTED[key], value, path + ".")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(prefix.rstrip(".") or "<root>", str(exc)) from None


def _choice(path, value, options):
    if value not in options:
        raise ConfigError(path, f"must be one of {sorted(options)}")


def validate(cfg: RunConfig) -> RunConfig:
    if not isinstance(cfg.potential, list):
        raise ConfigError("potential", "expected an array")
    if not cfg.potential:
        raise ConfigError("potential", "empty")
    cfg.potential = [_number(f"potential[{i}]", v) for i, v in enumerate(cfg.potential)]
    p = len(cfg.potential)
    _choice("boundary", cfg.boundary, {"ring", "dirichlet"})
    _choice("nonlinearity_sign", cfg.nonlinearity_sign, {"focusing", "defocusing"})
    for name in ("lattice_radius", "ring_cells"):
        v = getattr(cfg, name)
        if v is not None:
            v = _number(name, v, integer=True)
            if v < 1:
                raise ConfigError(name, "must be positive")
            setattr(cfg, name, v)
    cfg.k_grid = _number("k_grid", cfg.k_grid, integer=True)
    if cfg.k_grid < 16 * p:
        raise ConfigError("k_grid", f"must be at least 16p = {16 * p}")
    cfg.sigma = _number("sigma", cfg.sigma)
    if cfg.sigma < 1:
        raise ConfigError("sigma", "must be at least 1")
    cfg.seed = _number("seed", cfg.seed, integer=True)
    cfg.margin = _number("margin", cfg.margin, integer=True)
    if cfg.margin < 20:
        raise ConfigError("margin", "must be at least 20 sites")
    cfg.mo_samples = _number("mo_samples", cfg.mo_samples, integer=True)
    if cfg.mo_samples < 1:
        raise ConfigError("mo_samples", "must be positive")
    if cfg.dt is not None:
        cfg.dt = _number("dt", cfg.dt)
        if cfg.dt <= 0:
            raise ConfigError("dt", "must be positive")
    if not isinstance(cfg.output_dir, str):
        raise ConfigError("output_dir", "expected a string")

    t = cfg.times
    t.start = _number("times.start", t.start)
    t.stop = _number("times.stop", t.stop)
    t.count = _number("times.count", t.count, integer=True)
    _choice("times.spacing", t.spacing, {"linear", "log"})
    if t.count < 2:
        raise ConfigError("times.count", "must be at least 2")
    if not t.stop > t.start:
        raise ConfigError("times.stop", "must exceed times.start")
    if t.start < 0:
        raise ConfigError("times.start", "must be non-negative")

    ini = cfg.initial
    _choice("initial.kind", ini.kind, {"delta", "gaussian", "file"})
    ini.site = _number("initial.site", ini.site, integer=True)
    for name in ("amplitude", "center", "width", "momentum", "cutoff"):
        setattr(ini, name, _number(f"initial.{name}", getattr(ini, name)))
    if ini.width <= 0:
        raise ConfigError("initial.width", "must be positive")
    if ini.kind == "file" and not isinstance(ini.file, str):
        raise ConfigError("initial.file", "required for kind 'file'")
    if ini.l1 is not None:
        ini.l1 = _number("initial.l1", ini.l1)
        if ini.l1 <= 0:
            raise ConfigError("initial.l1", "must be positive")

    for f in fields(Tolerances):
        v = _number(f"tolerances.{f.name}", getattr(cfg.tolerances, f.name))
        if v <= 0:
            raise ConfigError(f"tolerances.{f.name}", "must be positive")
        setattr(cfg.tolerances, f.name, v)

    if cfg.fit_window is not None:
        if not isinstance(cfg.fit_window, list) or len(cfg.fit_window) != 2:
            raise ConfigError("fit_window", "expected [lo, hi]")
        cfg.fit_window = [_number(f"fit_window[{i}]", v) for i, v in enumerate(cfg.fit_window)]
    if not isinstance(cfg.vdc_lambdas, list) or not cfg.vdc_lambdas:
        raise ConfigError("vdc_lambdas", "expected a non-empty array")
    cfg.vdc_lambdas = [_number(f"vdc_lambdas[{i}]", v) for i, v in enumerate(cfg.vdc_lambdas)]
    if cfg.targets is not None:
        if not isinstance(cfg.targets, list) or not cfg.targets:
            raise ConfigError("targets", "expected a non-empty array of sites")
        cfg.targets = [_number(f"targets[{i}]", v, integer=True) for i, v in enumerate(cfg.targets)]
    return cfg


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected an object")
    if "potential" not in data:
        raise ConfigError("potential", "required")
    return validate(_build(RunConfig, data, ""))


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError("<file>", "not valid UTF-8") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc.msg} at line {exc.lineno}") from None
    return config_from_dict(data)
