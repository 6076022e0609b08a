"""Experiment configuration: YAML in, validated frozen dataclasses out.

Omitted keys take the full-scale defaults; ``preset: desk`` swaps in the
small layout used for quick runs and the test suite.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .baselines import Scheme
from .netgen import ConfigError, LayoutConfig, dbm_to_watt
from .solver import SolverConfig

MODES = ("PI", "PEAR")
WEIGHTINGS = ("pf", "equal")


@dataclass(frozen=True)
class NoiseConfig:
    density_dbm_hz: float = -174.0
    figure_db: float = 8.0
    bandwidth_hz: float = 180e3

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ConfigError("noise.bandwidth_hz must be > 0")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-5
    k_stable: int = 3
    iter_max: int = 200
    threshold_frac: float = 1e-4
    lambda_init_frac: float = 1e-3
    lambda_doublings: int = 10

    def __post_init__(self):
        if not self.tol > 0 or self.k_stable < 1 or self.iter_max < 1:
            raise ConfigError("solver: tol > 0, k_stable >= 1 and iter_max >= 1 required")
        if not 0 <= self.threshold_frac < 1:
            raise ConfigError("solver.threshold_frac must lie in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    mode: str = "PEAR"
    scheme: Scheme = Scheme.PROPOSED
    tau_d: int = 200
    tau_p: int = 32
    power_dbm: float = 30.0
    pilot_power_dbm: float = 20.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    eta: float = 0.2
    epsilon: float | str = "rule"  # watts, or "rule" for 0.9 p / M
    solver: SolverSettings = field(default_factory=SolverSettings)
    weighting: str = "pf"
    rate_floor: float = 1e-3
    slots: int = 100
    window: int = 50
    realizations: int = 10
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if not 1 <= self.tau_p < self.tau_d:
            raise ConfigError(f"tau_p must satisfy 1 <= tau_p < tau_d (got {self.tau_p}, {self.tau_d})")
        for name in ("power_dbm", "pilot_power_dbm"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v != v or abs(v) == float("inf"):
                raise ConfigError(f"{name} must be finite")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        if isinstance(self.epsilon, str):
            if self.epsilon != "rule":
                raise ConfigError("epsilon must be a positive number or 'rule'")
        elif not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.rate_floor > 0:
            raise ConfigError("rate_floor must be positive")
        if self.slots < 1 or not 1 <= self.window <= self.slots:
            raise ConfigError("need slots >= 1 and 1 <= window <= slots")
        if self.realizations < 1 or self.workers < 1:
            raise ConfigError("realizations and workers must be >= 1")

    @property
    def power_w(self) -> float:
        return dbm_to_watt(self.power_dbm)

    @property
    def pilot_power_w(self) -> float:
        return dbm_to_watt(self.pilot_power_dbm)

    @property
    def epsilon_w(self) -> float:
        if self.epsilon == "rule":
            return 0.9 * self.power_w / self.layout.antennas_per_rrh
        return float(self.epsilon)

    @property
    def pre_log(self) -> float:
        return 1.0 if self.mode == "PI" else (self.tau_d - self.tau_p) / self.tau_d

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(power=self.power_w, epsilon=self.epsilon_w, tol=s.tol, k_stable=s.k_stable,
                            iter_max=s.iter_max, threshold_frac=s.threshold_frac,
                            lambda_init_frac=s.lambda_init_frac, lambda_doublings=s.lambda_doublings)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scheme"] = self.scheme.value
        return d


_SECTIONS = {"layout": LayoutConfig, "noise": NoiseConfig, "solver": SolverSettings}

PRESETS = {
    "full": {},
    "desk": {
        "layout": {"rrh_per_cell": 3, "antennas_per_rrh": 4, "user_density": 50.0},
        "slots": 40,
        "window": 20,
        "realizations": 5,
    },
}


def _check_keys(data: dict, cls, prefix: str):
    allowed = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - allowed - ({"preset"} if not prefix else set())
    if extra:
        key = sorted(extra)[0]
        raise ConfigError(f"unknown config key '{prefix}{key}'")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    preset = data.pop("preset", "full")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    data = _merge(PRESETS[preset], data)
    _check_keys(data, ExperimentConfig, "")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a mapping")
            _check_keys(value, _SECTIONS[key], f"{key}.")
            try:
                kwargs[key] = _SECTIONS[key](**value)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> ExperimentConfig:
    """Read a YAML config; a missing path or empty file gives the defaults."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    return config_from_dict(data)


def desk_config(**changes) -> ExperimentConfig:
    return config_from_dict({"preset": "desk"}).replace(**changes)
