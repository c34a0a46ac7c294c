"""Run configuration file and run manifests.

The configuration file is flat ``key = value`` text, one setting per line,
with ``#`` comments. Floats are written with ``repr`` so a written file
reads back to the identical configuration.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path

import numpy as np

from .bloch import PhysicalParams, derived_params
from .signal import QuadratureConfig, VelocityDistribution
from .spectrum import default_grid_scale, delta_grid

MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _opt_float(text):
    return None if text.lower() == "none" else float(text)


def _floats(text):
    text = text.strip()
    return tuple(float(t) for t in text.split(",")) if text else ()


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    # physical parameters (Gamma = k = 1)
    rabi: float = 0.01
    branching: float = 0.7
    ground_relax: float = 0.0
    feed: float | None = None
    raman_detuning: float = 0.0
    laser_detuning: float = 0.0
    cell_length: float = 1000.0
    doppler_width: float = 50.0
    # velocity distribution
    distribution: str = "maxwell_boltzmann"
    dist_width: float | None = None
    dist_cutoff: float = 0.0
    table_v: tuple = ()
    table_w: tuple = ()
    # velocity quadrature
    v_min: float = 1e-6
    v_max: float | None = None
    nodes_per_decade: int = 16
    panel_order: int = 8
    check_convergence: bool = False
    convergence_tol: float = 1e-3
    # Raman-detuning grid; scale None means gamma_p + gamma
    grid_scale: float | None = None
    grid_lo: float = 1e-4
    grid_hi: float = 1e2
    grid_per_decade: int = 40
    # scans and velocity selection
    scan_axis: str = "kL"
    scan_values: tuple = ()
    fit_lo: float | None = None
    fit_hi: float | None = None
    cutoffs: tuple = ()
    # run control
    out: str = "out"
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        try:
            self.physical()
            self.dist()
            self.quadrature()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (0 < self.grid_lo < self.grid_hi) or self.grid_per_decade < 1:
            raise ConfigError("empty detuning grid: need 0 < grid_lo < grid_hi and "
                              "grid_per_decade >= 1")
        if self.grid_scale is not None and not self.grid_scale > 0:
            raise ConfigError("grid_scale must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.convergence_tol > 0:
            raise ConfigError("convergence_tol must be positive")

    def physical(self) -> PhysicalParams:
        return PhysicalParams(self.rabi, self.branching, self.ground_relax, self.feed,
                              self.raman_detuning, self.laser_detuning, self.cell_length,
                              self.doppler_width)

    def dist(self) -> VelocityDistribution:
        if self.distribution == "tabulated":
            return VelocityDistribution.tabulated(self.table_v, self.table_w)
        return VelocityDistribution(self.distribution, self.dist_width, self.dist_cutoff)

    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(self.v_min, self.v_max, self.nodes_per_decade, self.panel_order)

    def grid(self, p: PhysicalParams | None = None) -> np.ndarray:
        p = p or self.physical()
        scale = self.grid_scale
        if scale is None:
            try:
                scale = default_grid_scale(p.rabi ** 2, p.ground_relax)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return delta_grid(scale, self.grid_lo, self.grid_hi, self.grid_per_decade)

    def grid_kw(self) -> dict:
        return {"lo": self.grid_lo, "hi": self.grid_hi, "per_decade": self.grid_per_decade}

    def fit_range(self):
        if self.fit_lo is None and self.fit_hi is None:
            return None
        lo = -math.inf if self.fit_lo is None else self.fit_lo
        hi = math.inf if self.fit_hi is None else self.fit_hi
        return lo, hi

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_text(self) -> str:
        lines = [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = _PARSERS[kinds[key]](val)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.from_text(text)

    def save(self, path):
        Path(path).write_text(self.to_text())


_PARSERS = {
    "float": float,
    "float | None": _opt_float,
    "int": int,
    "str": str,
    "bool": _bool,
    "tuple": _floats,
}


@dataclass
class RunManifest:
    """Everything needed to re-run a command and audit its outputs."""

    command: str
    config: dict
    derived: dict
    version: str = field(default_factory=tool_version)
    wall_clock: float = 0.0
    outputs: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    python: str = field(default_factory=platform.python_version)
    numpy: str = field(default_factory=lambda: np.__version__)

    @classmethod
    def start(cls, command: str, cfg: RunConfig, **extra) -> "RunManifest":
        p = cfg.physical()
        derived = asdict(derived_params(p)) if p.rabi > 0 else {}
        return cls(command, asdict(cfg) | {"config_text": cfg.to_text()}, derived, extra=extra)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default)
                        + "\n")
        return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
