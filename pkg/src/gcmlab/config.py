"""Experiment configuration: nested YAML sections, strict keys, CLI overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, get_type_hints

import yaml

from .errors import ConfigError

INITIAL_KINDS = ("delta", "mu_r", "uniform_atoms", "symmetric_pair")
ENSEMBLE_STARTS = ("uniform", "invariant")
REFERENCES = ("none", "uniform", "invariant", "ifs")


@dataclass
class FeedbackConfig:
    A: float = 0.4
    B: float = 8.0

    def validate(self):
        if not 0.0 < self.A <= 0.4:
            raise ConfigError(f"feedback.A must lie in (0, 0.4], got {self.A}")
        if self.B < 0:
            raise ConfigError(f"feedback.B must be >= 0, got {self.B}")


@dataclass
class BifurcationConfig:
    B_min: float = 2.0
    B_max: float = 10.0
    B_step: float = 0.5

    def validate(self):
        if self.B_step <= 0 or self.B_max < self.B_min or self.B_min < 0:
            raise ConfigError("bifurcation needs 0 <= B_min <= B_max and B_step > 0")


@dataclass
class InitialMeasureConfig:
    kind: str = "delta"
    y0: float = 2.0 / 3.0      # delta, symmetric_pair
    r0: float = 0.3            # mu_r
    k: int = 10                # uniform_atoms
    n_atoms: int = 10_000      # mu_r
    w_right: float = 0.5       # symmetric_pair

    def validate(self):
        if self.kind not in INITIAL_KINDS:
            raise ConfigError(f"ifs_orbit.initial.kind must be one of {INITIAL_KINDS}, got {self.kind!r}")
        if abs(self.y0) > 2.0 / 3.0 + 1e-12:
            raise ConfigError("ifs_orbit.initial.y0 must lie in [-2/3, 2/3]")
        if abs(self.r0) > 0.4:
            raise ConfigError("ifs_orbit.initial.r0 must lie in [-0.4, 0.4]")
        if self.k < 1 or self.n_atoms < 1:
            raise ConfigError("atom counts must be >= 1")
        if not 0.0 < self.w_right < 1.0:
            raise ConfigError("ifs_orbit.initial.w_right must lie in (0, 1)")


@dataclass
class IfsOrbitConfig:
    initial: InitialMeasureConfig = field(default_factory=InitialMeasureConfig)
    max_iter: int = 500
    tol: float = 1e-9
    eps_merge: float = 1e-10
    max_atoms: int = 1_000_000

    def validate(self):
        self.initial.validate()
        if self.max_iter < 1 or self.tol <= 0 or self.eps_merge < 0 or self.max_atoms < 1:
            raise ConfigError("ifs_orbit needs max_iter >= 1, tol > 0, eps_merge >= 0, max_atoms >= 1")


@dataclass
class EnsembleConfig:
    N: int = 10_000
    n_steps: int = 100
    epsilon: float = 0.0
    start: str = "uniform"
    start_r: float = 0.0       # parameter of the invariant density for start = invariant
    reference: str = "none"
    reference_r: float = 0.0
    record_every: int = 1

    def validate(self):
        if self.N < 1 or self.n_steps < 1 or self.record_every < 1:
            raise ConfigError("ensemble needs N, n_steps, record_every >= 1")
        if not 0.0 <= self.epsilon <= 0.1:
            raise ConfigError("ensemble.epsilon must lie in [0, 0.1]")
        if self.start not in ENSEMBLE_STARTS:
            raise ConfigError(f"ensemble.start must be one of {ENSEMBLE_STARTS}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"ensemble.reference must be one of {REFERENCES}")
        if abs(self.start_r) > 0.4 or abs(self.reference_r) > 0.4:
            raise ConfigError("ensemble parameters must lie in [-0.4, 0.4]")


@dataclass
class VerifyConfig:
    criteria: list = field(default_factory=list)   # empty: all
    skip_slow: bool = False


@dataclass
class ExperimentConfig:
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    seed: int = 0
    threads: int = 1
    bifurcation: BifurcationConfig = field(default_factory=BifurcationConfig)
    ifs_orbit: IfsOrbitConfig = field(default_factory=IfsOrbitConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def validate(self) -> "ExperimentConfig":
        self.feedback.validate()
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.bifurcation.validate()
        self.ifs_orbit.validate()
        self.ensemble.validate()
        return self


def _coerce(tp, value, where):
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a mapping")
        return _from_dict(tp, value, where)
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where} must be a boolean")
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where} must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return list(value)
    return value


def _from_dict(cls, data: dict, where: str = ""):
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {sorted(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}".lstrip(".")) for k, v in data.items()}
    return cls(**kwargs)


def from_dict(data: dict | None) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data or {}).validate()


def to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    data = yaml.safe_load(text)
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return from_dict(data)


def load(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    return loads(Path(path).read_text())


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply ``section.key=value`` (value parsed as YAML), returning a new config."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    data = to_dict(cfg)
    node = data
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = yaml.safe_load(raw)
    return from_dict(data)
