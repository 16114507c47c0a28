"""Run configuration: TOML text with fixed sections and strict keys.

Every section and key is optional; missing values take the defaults below.
Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .data import InitialData
from .evolution import NonlinearityConfig
from .geometry import BackgroundERN, DomainError
from .grid import GridSpec
from .modes import ConfigurationError, build_angular_grid

__all__ = ["RunConfig", "parse_config", "serialize_config", "load_config"]


@dataclass(frozen=True)
class BackgroundSection:
    mass: float = 1.0


@dataclass(frozen=True)
class GridSection:
    u0: float = 0.0
    v0: float = 0.0
    n_u: int = 16000
    n_v: int = 6000
    h: float = 0.05
    compactify: bool = True


@dataclass(frozen=True)
class AngularSection:
    l_max: int = 4
    n_nodes: int = 0  # 0: de-aliased default


@dataclass(frozen=True)
class DataSection:
    epsilon: float = 0.05
    r_center: float = 1.5
    half_width: float = 1.0
    modes: tuple = (1.0,)


@dataclass(frozen=True)
class NonlinearitySection:
    a_mode: str = "constant"
    a_const: float = 1.0
    higher_order: str = "none"


@dataclass(frozen=True)
class DiagnosticsSection:
    R: float = 1.8
    r0: float = 1.8
    r1: float = 2.5
    delta1: float = 0.1
    delta2: float = 0.1
    p_list: tuple = (1.0, 2.0)
    tau_list: tuple = ()  # empty: automatic
    fit_fraction: float = 0.6
    weighted_deltas: tuple = (0.5, 1.0)
    series_delta: float = 0.5
    bulk_delta: float = 0.1
    proxy_u: tuple = (1000.0, 2000.0)
    snapshot_stride: int = 0  # 0: automatic


@dataclass(frozen=True)
class OutputSection:
    dir: str = ""


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    backend: str = "auto"
    mode: str = "physical"


_SECTIONS = {
    "background": BackgroundSection,
    "grid": GridSection,
    "angular": AngularSection,
    "data": DataSection,
    "nonlinearity": NonlinearitySection,
    "diagnostics": DiagnosticsSection,
    "output": OutputSection,
    "run": RunSection,
}


@dataclass(frozen=True)
class RunConfig:
    background: BackgroundSection = field(default_factory=BackgroundSection)
    grid: GridSection = field(default_factory=GridSection)
    angular: AngularSection = field(default_factory=AngularSection)
    data: DataSection = field(default_factory=DataSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    output: OutputSection = field(default_factory=OutputSection)
    run: RunSection = field(default_factory=RunSection)

    def replace(self, section: str, **changes) -> "RunConfig":
        sec = dataclasses.replace(getattr(self, section), **changes)
        new = dataclasses.replace(self, **{section: sec})
        validate(new)
        return new

    def with_spacing(self, h: float) -> "RunConfig":
        """Same spans at a new spacing."""
        g = self.grid
        n_u = int(round(g.n_u * g.h / h))
        n_v = int(round(g.n_v * g.h / h))
        return self.replace("grid", h=float(h), n_u=n_u, n_v=n_v)

    # module objects
    def background_obj(self):
        return BackgroundERN(self.background.mass)

    def grid_spec(self):
        g = self.grid
        return GridSpec(g.u0, g.v0, g.n_u, g.n_v, g.h, g.compactify)

    def angular_obj(self):
        a = self.angular
        return build_angular_grid(a.l_max, a.n_nodes or None)

    def initial_data(self):
        d = self.data
        return InitialData(d.epsilon, d.r_center, d.half_width, d.modes)

    def nonlinearity_obj(self):
        n = self.nonlinearity
        return NonlinearityConfig(n.a_mode, n.a_const, n.higher_order)

    def to_dict(self):
        out = {}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: _plain(getattr(sec, f.name)) for f in dataclasses.fields(sec)}
        return out


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _coerce(section, name, default, value):
    key = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{key} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or any(
                isinstance(x, bool) or not isinstance(x, (int, float)) for x in value):
            raise ConfigurationError(f"{key} must be a list of numbers")
        return tuple(float(x) for x in value)
    raise AssertionError(key)


def _from_dict(raw: dict) -> RunConfig:
    kwargs = {}
    for sname, body in raw.items():
        if sname not in _SECTIONS:
            if isinstance(body, dict) and body:
                raise ConfigurationError(f"unknown key {sname}.{next(iter(body))}")
            raise ConfigurationError(f"unknown key {sname}")
        if not isinstance(body, dict):
            raise ConfigurationError(f"{sname} must be a section")
        cls = _SECTIONS[sname]
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        vals = {}
        for k, v in body.items():
            if k not in defaults:
                raise ConfigurationError(f"unknown key {sname}.{k}")
            vals[k] = _coerce(sname, k, defaults[k], v)
        kwargs[sname] = cls(**vals)
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every constraint up front; raises :class:`ConfigurationError`."""
    try:
        cfg.background_obj()
    except DomainError as exc:
        raise ConfigurationError(f"background.mass: {exc}") from exc
    cfg.grid_spec()
    if cfg.angular.l_max < 0:
        raise ConfigurationError("angular.l_max must be >= 0")
    if cfg.angular.n_nodes < 0:
        raise ConfigurationError("angular.n_nodes must be >= 0 (0 selects the default)")
    ang = cfg.angular_obj()
    data = cfg.initial_data()
    if len(data.modes) > ang.n_modes and any(m != 0 for m in data.modes[ang.n_modes:]):
        raise ConfigurationError("data.modes excites degrees above angular.l_max")
    cfg.nonlinearity_obj()
    d = cfg.diagnostics
    M = cfg.background.mass
    if not (M < d.R and M < d.r0 < d.r1):
        raise ConfigurationError("diagnostics radii must satisfy M < r0 < r1 and R > M")
    if d.r0 >= 2 * M:
        raise ConfigurationError("diagnostics.r0 must lie below the photon sphere 2M")
    for name in ("delta1", "delta2", "bulk_delta", "series_delta"):
        if not getattr(d, name) > 0:
            raise ConfigurationError(f"diagnostics.{name} must be positive")
    if not 0 < d.fit_fraction <= 1:
        raise ConfigurationError("diagnostics.fit_fraction must lie in (0, 1]")
    if any(not x > 0 for x in d.weighted_deltas):
        raise ConfigurationError("diagnostics.weighted_deltas must be positive")
    if d.snapshot_stride < 0:
        raise ConfigurationError("diagnostics.snapshot_stride must be >= 0")
    if cfg.run.backend not in ("auto", "compiled", "python"):
        raise ConfigurationError("run.backend must be auto, compiled or python")
    if cfg.run.mode not in ("physical", "manufactured"):
        raise ConfigurationError("run.mode must be physical or manufactured")
    if cfg.run.mode == "manufactured" and cfg.grid.compactify:
        raise ConfigurationError("manufactured runs need grid.compactify = false")
    for x in cfg.grid.u0, cfg.grid.v0:
        if not math.isfinite(x):
            raise ConfigurationError("grid origin must be finite")


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}" if line else "unknown line"
        raise ConfigurationError(f"syntax error at {where}: {exc.msg if hasattr(exc, 'msg') else exc}") from exc
    return _from_dict(raw)


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)
