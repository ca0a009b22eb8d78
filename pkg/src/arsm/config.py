"""Experiment configuration: strict JSON with per-experiment required fields."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "EXPERIMENTS", "ESTIMATORS"]

EXPERIMENTS = (
    "TOY",
    "VAE",
    "HIER_NET",
    "RL_CARTPOLE",
    "RL_CHAIN",
    "UNBIASEDNESS",
    "VARIANCE_BENCH",
)
ESTIMATORS = ("ANALYTIC", "REINFORCE", "AR", "ARS", "ARSM")

_REQUIRED = {
    "TOY": ("estimator", "C", "R", "iterations"),
    "VAE": ("estimator", "C", "K", "iterations"),
    "HIER_NET": ("estimator", "C", "K", "T", "iterations"),
    "RL_CARTPOLE": ("estimator", "episodes", "gamma", "S_max"),
    "RL_CHAIN": ("estimator", "C", "T", "episodes", "gamma", "S_max"),
    "UNBIASEDNESS": ("iterations",),
    "VARIANCE_BENCH": ("C", "R", "iterations"),
}

_RL_ESTIMATORS = ("ARS", "ARSM")


class ConfigError(ValueError):
    """Invalid experiment configuration (missing, unknown, or ill-typed keys)."""


@dataclass
class ExperimentConfig:
    experiment: str
    estimator: str = "ARSM"
    C: int = 30
    K: int = 4
    R: int = 30
    T: int = 1
    learning_rate: float = 1e-3
    gamma: float = 0.99
    decay: float = 0.999
    iterations: int = 0
    episodes: int = 0
    seed: int = 0
    S_max: int = 16
    output_path: str = "trace.csv"
    discount_weighting: bool = False
    entropy_weight: float = 0.0

    def validate(self, provided: set[str] | None = None) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if provided is not None:
            missing = [k for k in _REQUIRED[self.experiment] if k not in provided]
            if missing:
                raise ConfigError(
                    f"{self.experiment} requires fields: {', '.join(missing)}"
                )
        if self.experiment.startswith("RL_") and self.estimator not in _RL_ESTIMATORS:
            raise ConfigError("RL experiments support only ARS or ARSM")
        if self.experiment in ("VAE", "HIER_NET") and self.estimator == "ANALYTIC":
            raise ConfigError("network training has no analytic-gradient mode")
        if self.C < 2:
            raise ConfigError("C must be at least 2")
        if self.experiment == "RL_CARTPOLE" and "C" in (provided or set()) and self.C != 2:
            raise ConfigError("the cart-pole action space has C=2")
        for name in ("K", "R", "T"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.iterations < 0 or self.episodes < 0:
            raise ConfigError("iterations/episodes must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError("decay must lie in (0, 1)")
        if self.learning_rate <= 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.S_max < 0:
            raise ConfigError("S_max must be non-negative")
        if self.entropy_weight < 0.0:
            raise ConfigError("entropy_weight must be non-negative")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"field {name} must be a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"field {name} must be a boolean")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field {name} must be an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field {name} must be a number")
        return float(value)
    raise ConfigError(f"unhandled field type for {name}")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "experiment" not in data:
        raise ConfigError("config must name an experiment")
    kwargs = {name: _coerce(name, value) for name, value in data.items()}
    return ExperimentConfig(**kwargs).validate(provided=set(data))


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)
