"""Sectioned key=value experiment configuration.

Every section maps onto a dataclass; unknown sections or keys are rejected with
a message naming them. Bundled configurations live in ``stochheat/configs`` and
can be referred to by bare name (``energy_check``).
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("energy", "caccioppoli", "gradient", "h0", "dh-identity", "monotonicity",
         "two-ball", "interpolation", "observability", "hum")

CONFIG_DIR = Path(__file__).with_name("configs")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSection:
    kind: str = "energy"
    name: str = ""


@dataclass
class GridSection:
    dim: int = 1
    extent: float = 16.0
    points: int = 256


@dataclass
class CoefficientSection:
    type: str = "constant"  # constant | random
    a: float = 0.0
    b: float = 0.0
    a_max: float = 1.0
    b_max: float = 0.5
    seed: int = 0


@dataclass
class GeometrySection:
    x0: tuple = (0.0,)
    r: float = 0.5
    R: float = 1.0
    delta: float = 1.0
    lam: float = 0.5


@dataclass
class TimeSection:
    T: float = 0.5
    steps: int = 128
    tau1: float = 0.125
    tau2: float = 0.25
    tau: float = 0.125


@dataclass
class EnsembleSection:
    paths: int = 100
    seed: int = 0
    workers: int = 1


@dataclass
class DataSection:
    type: str = "bump"  # bump | random
    center: tuple = (0.0,)
    width: float = 0.5
    amplitude: float = 1.0
    count: int = 1
    seed: int = 0
    spread: float = 0.0  # random bumps: centres in [-spread, spread]^dim; 0 means L/4


@dataclass
class ObservationSection:
    intervals: tuple = ()


@dataclass
class ToleranceSection:
    n_se: float = 3.0
    allowance: float = 0.02
    safety: float = 2.0
    C1: float = 0.0  # 0 means calibrate
    exponent_low: float = 0.01
    exponent_high: float = 0.99


@dataclass
class HumSection:
    tol: float = 1e-3
    max_iter: int = 200
    pairs: int = 10


@dataclass
class OutputSection:
    dir: str = "results"


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    grid: GridSection = field(default_factory=GridSection)
    coefficients: CoefficientSection = field(default_factory=CoefficientSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    time: TimeSection = field(default_factory=TimeSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    data: DataSection = field(default_factory=DataSection)
    observation: ObservationSection = field(default_factory=ObservationSection)
    tolerances: ToleranceSection = field(default_factory=ToleranceSection)
    hum: HumSection = field(default_factory=HumSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str = ""

    def digest(self) -> str:
        """sha256 of the experiment-defining content (no output dir, no worker count)."""
        d = self.as_dict()
        d.pop("output", None)
        d["ensemble"].pop("workers", None)
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def as_dict(self) -> dict:
        return {f.name: dataclasses.asdict(getattr(self, f.name))
                for f in dataclasses.fields(self) if f.name != "source"}


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)
            if f.name != "source"}


def _parse_floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _parse_intervals(text: str) -> tuple:
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        lo, hi = chunk.split(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _convert(section: str, key: str, raw: str, default):
    try:
        if key == "intervals":
            return _parse_intervals(raw)
        if isinstance(default, tuple):
            return _parse_floats(raw)
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for key '{key}' in section [{section}]: {raw!r}") from exc


def resolve_path(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    bundled = CONFIG_DIR / (p.name if p.suffix == ".ini" else p.name + ".ini")
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config not found: {name}")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (R vs r)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from exc
    cfg = ExperimentConfig(source=source)
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        obj = getattr(cfg, section)
        fields = {f.name: f for f in dataclasses.fields(obj)}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            setattr(obj, key, _convert(section, key, raw, getattr(obj, key)))
    validate(cfg)
    return cfg


def load_config(name: str) -> ExperimentConfig:
    path = resolve_path(name)
    return parse_config(path.read_text(), str(path))


def _need(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(f"parameter violation for key '{key}': {msg}")


def validate(cfg: ExperimentConfig) -> None:
    _need(cfg.experiment.kind in KINDS + ("all",), "kind", f"must be one of {KINDS + ('all',)}")
    g = cfg.grid
    _need(g.dim in (1, 2), "dim", "must be 1 or 2")
    _need(g.extent > 0, "extent", "must be positive")
    _need(g.points >= 8 and g.points % 2 == 0, "points", "must be even and >= 8")
    c = cfg.coefficients
    _need(c.type in ("constant", "random"), "type", "coefficients type must be constant or random")
    t = cfg.time
    _need(t.T > 0, "T", "must be positive")
    _need(t.steps >= 2, "steps", "must be >= 2")
    e = cfg.ensemble
    _need(e.paths >= 1, "paths", "must be >= 1")
    _need(e.workers >= 1, "workers", "must be >= 1")
    geo = cfg.geometry
    _need(len(geo.x0) in (1, g.dim), "x0", "needs 1 or dim components")
    _need(geo.r > 0 and geo.R > geo.r, "r", "need 0 < r < R")
    _need(0 < geo.delta <= 1, "delta", "must lie in (0, 1]")
    _need(geo.lam > 0, "lam", "must be positive")
    _need(cfg.data.type in ("bump", "random"), "type", "data type must be bump or random")
    _need(cfg.data.count >= 1, "count", "must be >= 1")
    kind = cfg.experiment.kind
    if kind == "caccioppoli" or kind == "h0":
        _need(0 < t.tau1 < t.tau2 < t.T, "tau1", "need 0 < tau1 < tau2 < T")
    if kind == "h0":
        _need(2 * geo.r <= geo.R, "r", "need 2r <= R")
    if kind == "gradient":
        _need(0 < t.tau < t.T / 2, "tau", "need 0 < tau < T/2")
    if kind in ("observability", "hum"):
        _need(len(cfg.observation.intervals) > 0, "intervals", "observation intervals required")
    if kind == "hum":
        noisy = c.b != 0 if c.type == "constant" else c.b_max != 0
        _need(not noisy, "b", "controlled equation needs b1 = 0")


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.ini"))
