"""Experiment configuration read from a TOML file.

Every key has a default, so an empty file (or no file) gives the default
synthetic sweep. Unknown keys are rejected to catch typos early.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .datagen import ConfigurationError, GeneratorConfig, get_policy
from .learners import NetParams, TreeParams
from .theory import TheoryGrid
from .uncertainty import METRICS

UNION_METRIC = "MEAN+VAR"


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    csv_path: str = ""
    policy: str = "chiller"
    d: int = 16
    n_fault_types: int = 6
    offsets: tuple = (1.0, 2.0, 4.0, 5.0)
    cluster_std: float = 0.6
    direction_support: int = 1  # 0 means dense directions
    n_normal: int = 4800
    n_per_cell: int = 400
    dev_fraction: float = 0.5
    standardize: bool = True

    def generator(self, seed: int) -> GeneratorConfig:
        return GeneratorConfig(
            d=self.d, n_fault_types=self.n_fault_types, offsets=tuple(self.offsets),
            cluster_std=self.cluster_std, n_normal=self.n_normal, n_per_cell=self.n_per_cell,
            seed=seed, direction_support=self.direction_support or None,
        )


@dataclass(frozen=True)
class LearnerConfig:
    family: str = "tree"
    max_depth: int = 10
    min_samples_split: int = 10
    hidden_width: int = 16
    learning_rate: float = 0.1
    epochs: int = 60
    batch_size: int = 64
    init_scale: float = 1.0

    def params(self):
        if self.family == "tree":
            return TreeParams(self.max_depth, self.min_samples_split)
        if self.family == "net":
            return NetParams(self.hidden_width, self.learning_rate, self.epochs, self.batch_size, self.init_scale)
        raise ConfigurationError(f"unknown learner family {self.family!r}")


@dataclass(frozen=True)
class SweepConfig:
    K: tuple = (5, 25)
    max_samples: float = 0.8
    mode: str = "soft"
    rho: tuple = (0.0, 0.2, 1.0)
    q: tuple = (0.02, 0.05, 0.1)
    theta: tuple = (0.05, 0.1, 0.2)
    metrics: tuple = ("MEAN", "VAR", UNION_METRIC)
    seeds: tuple = (0, 1, 2)
    mean_tau: object = "calibrated"  # or a fixed number such as 0.5


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"
    histograms: bool = False
    histogram_examples: int = 9


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    theory: TheoryGrid = field(default_factory=TheoryGrid)

    def validate(self) -> "ExperimentConfig":
        s = self.sweep
        for name in ("K", "rho", "q", "theta", "metrics", "seeds"):
            if len(getattr(s, name)) == 0:
                raise ConfigurationError(f"sweep.{name} must not be empty")
        if any(k < 1 for k in s.K):
            raise ConfigurationError("sweep.K entries must be >= 1")
        if any(not 0.0 <= r <= 1.0 for r in s.rho):
            raise ConfigurationError("sweep.rho entries must lie in [0, 1]")
        if any(not 0.0 <= q < 1.0 for q in s.q):
            raise ConfigurationError("sweep.q entries must lie in [0, 1)")
        if any(not 0.0 <= t <= 1.0 for t in s.theta):
            raise ConfigurationError("sweep.theta entries must lie in [0, 1]")
        for m in s.metrics:
            if m not in METRICS + (UNION_METRIC,):
                raise ConfigurationError(f"unknown metric {m!r}")
        if not 0.0 < s.max_samples <= 1.0:
            raise ConfigurationError("sweep.max_samples must lie in (0, 1]")
        if s.mode not in ("soft", "hard"):
            raise ConfigurationError(f"unknown combination mode {s.mode!r}")
        if s.mean_tau != "calibrated" and not isinstance(s.mean_tau, (int, float)):
            raise ConfigurationError("sweep.mean_tau must be 'calibrated' or a number")
        if self.data.source not in ("synthetic", "csv"):
            raise ConfigurationError(f"unknown data source {self.data.source!r}")
        if self.data.source == "csv" and not self.data.csv_path:
            raise ConfigurationError("data.csv_path is required when data.source = 'csv'")
        get_policy(self.data.policy)
        self.learner.params()
        if self.data.source == "synthetic":
            self.data.generator(0).validate()
        if self.theory.trials < 1:
            raise ConfigurationError("theory.trials must be positive")
        return self


def _section(cls, raw: dict, name: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{name}]: {exc}") from None


SECTIONS = {"data": DataConfig, "learner": LearnerConfig, "sweep": SweepConfig,
            "output": OutputConfig, "theory": TheoryGrid}


def config_from_dict(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")
    parts = {name: _section(cls, raw.get(name, {}), name) for name, cls in SECTIONS.items()}
    return ExperimentConfig(**parts).validate()


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    cfg = config_from_dict(raw)
    if cfg.data.source == "csv" and not Path(cfg.data.csv_path).is_absolute():
        # relative CSV paths are resolved against the config file
        data = DataConfig(**{**cfg.data.__dict__, "csv_path": str(path.parent / cfg.data.csv_path)})
        cfg = ExperimentConfig(data, cfg.learner, cfg.sweep, cfg.output, cfg.theory)
    return cfg
