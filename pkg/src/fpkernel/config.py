"""Experiment configuration schema.

Configs are YAML documents validated in full before any computation starts;
unknown keys are rejected. See ``configs/`` for one file per experiment kind.
"""
import hashlib
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import dynamics
from .errors import ConfigError
from .kernels import Family, KernelModel

EXPERIMENTS = ("regress", "regress-with-initial", "predict-compare", "density-combine", "kernel-check", "simulate")
BUNDLED_DIR = Path(__file__).parent / "configs"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelConfig(_Strict):
    family: Literal["gaussian_heat", "dirichlet_heat", "neumann_heat", "ornstein_uhlenbeck"]
    diffusion: float = Field(0.5, gt=0)
    theta: float = Field(1.0, gt=0)
    sigma: float = Field(math.sqrt(2.0), gt=0)
    truncation_tol: float = Field(1e-12, gt=0, lt=1)
    max_terms: int = Field(10000, ge=1)
    t_floor: float = Field(1e-6, gt=0)

    def build(self):
        return KernelModel(Family(self.family), **self.model_dump(exclude={"family"}))


class ProfileConfig(_Strict):
    """A function of position used for truths, measurements and errors."""

    kind: Literal["tent", "sine_error", "beta", "gaussian_bump", "sine_modes", "constant"]
    height: float = 0.5
    slope: float = 1.0
    amplitude: float = 0.2
    coefficients: List[float] = []
    value: float = 0.0

    def function(self):
        if self.kind == "tent":
            return lambda x: dynamics.tent(x, self.height, self.slope)
        if self.kind == "sine_error":
            return lambda x: dynamics.sine_error(x, self.amplitude)
        if self.kind == "beta":
            return dynamics.beta_density
        if self.kind == "gaussian_bump":
            return dynamics.gaussian_bump
        if self.kind == "sine_modes":
            c = np.asarray(self.coefficients, dtype=float)
            n = np.arange(1, c.size + 1)
            return lambda x: np.sin(np.pi * np.multiply.outer(np.asarray(x, dtype=float), n)) @ c
        return lambda x: np.full_like(np.asarray(x, dtype=float), self.value)


class SensorConfig(_Strict):
    """Equispaced sensors on ``[lo, hi]`` (endpoints included) or explicit positions."""

    count: Optional[int] = Field(None, ge=1)
    lo: float = 0.0
    hi: float = 1.0
    positions: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_layout(self):
        if (self.count is None) == (self.positions is None):
            raise ValueError("give exactly one of count or positions")
        if self.count is not None and not self.hi >= self.lo:
            raise ValueError("sensor range needs lo <= hi")
        return self

    def array(self):
        if self.positions is not None:
            return np.asarray(self.positions, dtype=float)
        return np.linspace(self.lo, self.hi, self.count)


class ErrorConfig(_Strict):
    kind: Literal["none", "function", "gaussian"] = "none"
    profile: Optional[ProfileConfig] = None
    sd: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "function" and self.profile is None:
            raise ValueError("error kind 'function' needs a profile")
        return self


class SnapshotConfig(_Strict):
    """One measurement time.

    Values come from ``points`` (explicit ``[x, y]`` pairs), from
    ``profile`` evaluated at the sensors, or from the experiment's truth.
    Density experiments give ``sample_size`` instead.
    """

    t: float = Field(ge=0)
    sensors: Optional[SensorConfig] = None
    points: Optional[List[Tuple[float, float]]] = None
    profile: Optional[ProfileConfig] = None
    error: ErrorConfig = ErrorConfig()
    sample_size: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _layout(self):
        given = sum(v is not None for v in (self.sensors, self.points, self.sample_size))
        if given != 1:
            raise ValueError("give exactly one of sensors, points or sample_size")
        if self.points is not None and self.profile is not None:
            raise ValueError("points already carry values; drop profile")
        return self


class TruthConfig(_Strict):
    """Exact evolution of ``profile``, which holds at time ``time``."""

    profile: ProfileConfig
    time: float = Field(0.0, ge=0)
    n_terms: int = Field(400, ge=1)
    quad_nodes: int = Field(4001, ge=3)


class SolverConfig(_Strict):
    rtol: Optional[float] = Field(None, gt=0)
    clamp_tol: float = Field(1e-10, gt=0)
    t_epsilon: float = Field(1e-6, gt=0)
    initial_weight: float = Field(1.0, gt=0)


class GridConfig(_Strict):
    times: List[float] = []
    count: int = Field(101, ge=2)
    lo: Optional[float] = None
    hi: Optional[float] = None


class BaselineConfig(_Strict):
    method: Literal["nadaraya_watson", "static_pinv"] = "nadaraya_watson"
    bandwidth: float = Field(gt=0)
    cv_grid: List[float] = []
    folds: int = Field(5, ge=2)
    fold_by: Literal["point", "snapshot"] = "point"

    @model_validator(mode="after")
    def _positive_grid(self):
        if any(not s > 0 for s in self.cv_grid):
            raise ValueError("cv_grid bandwidths must be positive")
        return self


class PredictConfig(_Strict):
    times: List[float] = Field(min_length=1)
    query_count: int = Field(100, ge=2)


class DensityConfig(_Strict):
    eval_times: List[float] = Field(min_length=1)
    renormalize: bool = True
    ise_nodes: int = Field(2001, ge=3)
    ise_factor: float = Field(1.05, gt=0)


class SimulateConfig(_Strict):
    x0: float
    dt: float = Field(gt=0)
    n_steps: int = Field(ge=1)
    n_paths: int = Field(ge=1)
    boundary: Literal["auto", "none", "reflect", "absorb"] = "auto"
    bins: int = Field(20, ge=2)
    alpha: float = Field(0.01, gt=0, lt=1)


class OutputsConfig(_Strict):
    coefficients: str = "coefficients.csv"
    grid: str = "grid.csv"
    metrics: str = "metrics.json"
    manifest: str = "manifest.json"
    snapshots: str = "snapshots.csv"

    @model_validator(mode="after")
    def _plain_names(self):
        names = list(self.model_dump().values())
        for name in names:
            if not name or Path(name).name != name:
                raise ValueError(f"output name {name!r} must be a plain file name")
        if len(set(names)) != len(names):
            raise ValueError("output names must be distinct")
        return self


_NEEDS = {
    "regress": ("data",),
    "regress-with-initial": ("data", "initial"),
    "predict-compare": ("data", "truth", "baseline", "predict"),
    "density-combine": ("data", "truth", "density"),
    "kernel-check": (),
    "simulate": ("simulate",),
}


class ExperimentConfig(_Strict):
    experiment: Literal[EXPERIMENTS]
    name: str = ""
    seed: int = Field(0, ge=0)
    kernel: KernelConfig
    truth: Optional[TruthConfig] = None
    snapshots: List[SnapshotConfig] = []
    snapshot_csv: Optional[str] = None
    initial: Optional[SnapshotConfig] = None
    solver: SolverConfig = SolverConfig()
    grid: GridConfig = GridConfig()
    baseline: Optional[BaselineConfig] = None
    predict: Optional[PredictConfig] = None
    density: Optional[DensityConfig] = None
    simulate: Optional[SimulateConfig] = None
    outputs: OutputsConfig = OutputsConfig()

    @model_validator(mode="after")
    def _sections(self):
        for need in _NEEDS[self.experiment]:
            if need == "data":
                if not self.snapshots and self.snapshot_csv is None:
                    raise ValueError(f"{self.experiment} needs snapshots or snapshot_csv")
                if self.snapshots and self.snapshot_csv is not None:
                    raise ValueError("give snapshots or snapshot_csv, not both")
            elif getattr(self, need) is None:
                raise ValueError(f"{self.experiment} needs a '{need}' section")
        times = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"snapshot times must be strictly increasing, got {times}")
        density = self.experiment == "density-combine"
        for k, snap in enumerate(self.snapshots):
            if density != (snap.sample_size is not None):
                what = "sample_size" if density else "sensors or points"
                raise ValueError(f"snapshot {k + 1}: {self.experiment} snapshots need {what}")
            if snap.sensors is not None and snap.profile is None and self.truth is None:
                raise ValueError(f"snapshot {k + 1}: sensor values need a profile or a truth section")
        if self.initial is not None:
            if self.initial.sample_size is not None:
                raise ValueError("initial condition needs sensors or points")
            if self.initial.sensors is not None and self.initial.profile is None and self.truth is None:
                raise ValueError("initial sensors need a profile or a truth section")
        if self.truth is not None and self.kernel.family == "gaussian_heat":
            if self.truth.profile.kind != "gaussian_bump":
                raise ValueError("gaussian_heat truths support only the gaussian_bump profile")
        return self

    def digest(self):
        """SHA-256 of the canonical JSON form of the validated config."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def bundled_configs():
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.yaml"))


def resolve_path(name_or_path):
    """A config file path, or the name of a bundled config."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    bundled = BUNDLED_DIR / f"{path.stem}.yaml"
    if path.suffix in ("", ".yaml") and path.parent == Path(".") and bundled.is_file():
        return bundled
    raise ConfigError(f"config {str(name_or_path)!r} not found (bundled: {', '.join(bundled_configs())})")


def _format_errors(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return parts


def parse(document, seed=None):
    """Validate a config mapping; ``seed`` overrides the config's seed."""
    if not isinstance(document, dict):
        raise ConfigError("config must be a mapping at top level")
    if seed is not None:
        document = {**document, "seed": seed}
    try:
        cfg = ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        details = _format_errors(exc)
        raise ConfigError("invalid config: " + "; ".join(details), details) from None
    check_domain(cfg)
    return cfg


def load(name_or_path, seed=None):
    """Read, validate and domain-check a config. Returns ``(config, path)``."""
    path = resolve_path(name_or_path)
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse(document, seed), path


def _check_positions(model, x, where):
    lo, hi = model.domain
    x = np.asarray(x, dtype=float)
    if x.size and not (np.all(np.isfinite(x)) and x.min() >= lo and x.max() <= hi):
        raise ConfigError(f"{where}: positions outside the domain [{lo}, {hi}] of {model.family.value}")


def check_domain(cfg):
    """Semantic checks that need the kernel: domains and time floors."""
    model = cfg.kernel.build()
    for k, snap in enumerate(cfg.snapshots):
        where = f"snapshots[{k}]"
        if snap.t < model.t_floor:
            raise ConfigError(f"{where}: t={snap.t} is below t_floor={model.t_floor}")
        if snap.sensors is not None:
            _check_positions(model, snap.sensors.array(), where)
        if snap.points is not None:
            _check_positions(model, [p[0] for p in snap.points], where)
        if cfg.truth is not None and snap.t < cfg.truth.time:
            raise ConfigError(f"{where}: t={snap.t} precedes the truth's reference time {cfg.truth.time}")
    if cfg.initial is not None:
        if cfg.solver.t_epsilon < model.t_floor:
            raise ConfigError(f"solver.t_epsilon={cfg.solver.t_epsilon} is below t_floor={model.t_floor}")
        if cfg.initial.sensors is not None:
            _check_positions(model, cfg.initial.sensors.array(), "initial")
        if cfg.initial.points is not None:
            _check_positions(model, [p[0] for p in cfg.initial.points], "initial")
        t0 = max(cfg.initial.t, cfg.solver.t_epsilon)
        if cfg.snapshots and t0 >= cfg.snapshots[0].t:
            raise ConfigError(f"initial time {t0} must precede the first snapshot at {cfg.snapshots[0].t}")
    lo, hi = cfg.grid.lo, cfg.grid.hi
    if lo is not None and hi is not None and not hi > lo:
        raise ConfigError("grid needs lo < hi")
    for where, times in (("grid.times", cfg.grid.times), ("predict.times", cfg.predict.times if cfg.predict else []),
                         ("density.eval_times", cfg.density.eval_times if cfg.density else [])):
        for t in times:
            if t < model.t_floor:
                raise ConfigError(f"{where}: t={t} is below t_floor={model.t_floor}")
    if cfg.simulate is not None:
        _check_positions(model, [cfg.simulate.x0], "simulate.x0")
    return cfg
