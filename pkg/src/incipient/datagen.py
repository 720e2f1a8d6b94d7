"""Synthetic severity-spectrum data, CSV ingestion, splitting and scaling.

Normal operation (SL0) is an isotropic Gaussian blob at the origin. Every
fault type owns a random unit direction; its severity levels SL1..SL4 sit at
increasing distances along that direction, so low severities overlap the
normal cluster and high severities separate from it.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import make_rng

log = logging.getLogger(__name__)

SEVERITIES = (0, 1, 2, 3, 4)
INCIPIENT_SEVERITIES = (1, 2)


class ConfigurationError(ValueError):
    pass


class PartitionError(ValueError):
    pass


class CSVParseError(ValueError):
    def __init__(self, row: int, message: str):
        self.row = row
        super().__init__(f"row {row}: {message}")


class StandardizerError(ValueError):
    pass


@dataclass(frozen=True)
class LabelingPolicy:
    """Which severity levels count as the anomaly (positive) class."""

    name: str
    positive_severities: frozenset

    def labels(self, severity: np.ndarray) -> np.ndarray:
        return np.isin(severity, sorted(self.positive_severities)).astype(np.int8)

    @property
    def incipient_severities(self) -> tuple:
        """Positive severities that belong to the incipient regime."""
        return tuple(s for s in INCIPIENT_SEVERITIES if s in self.positive_severities)


CHILLER = LabelingPolicy("chiller", frozenset({1, 2, 3, 4}))
DR = LabelingPolicy("dr", frozenset({2, 3, 4}))
POLICIES = {p.name: p for p in (CHILLER, DR)}


def get_policy(name: str) -> LabelingPolicy:
    try:
        return POLICIES[name]
    except KeyError:
        raise ConfigurationError(f"unknown labeling policy {name!r}; expected one of {sorted(POLICIES)}")


@dataclass(frozen=True)
class GeneratorConfig:
    d: int = 16
    n_fault_types: int = 6
    offsets: tuple = (1.0, 2.0, 3.0, 4.0)
    cluster_std: float = 0.6
    n_normal: int = 1200
    n_per_cell: int = 100
    seed: int = 0
    direction_support: int | None = None

    def validate(self) -> None:
        if self.d < 1:
            raise ConfigurationError(f"d must be >= 1, got {self.d}")
        if self.n_fault_types < 1:
            raise ConfigurationError(f"n_fault_types must be >= 1, got {self.n_fault_types}")
        if len(self.offsets) != 4:
            raise ConfigurationError(f"need 4 severity offsets, got {len(self.offsets)}")
        if any(o <= 0 for o in self.offsets):
            raise ConfigurationError(f"offsets must be positive: {self.offsets}")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ConfigurationError(f"offsets must increase strictly with severity: {self.offsets}")
        if self.cluster_std < 0:
            raise ConfigurationError(f"cluster_std must be non-negative, got {self.cluster_std}")
        if self.n_normal <= 0 or self.n_per_cell <= 0:
            raise ConfigurationError("sample counts must be positive")
        if self.direction_support is not None and not 1 <= self.direction_support <= self.d:
            raise ConfigurationError(f"direction_support must lie in 1..{self.d}, got {self.direction_support}")


@dataclass(frozen=True)
class SplitSpec:
    rho: float = 0.2
    dev_fraction: float = 0.5
    seed: int = 0


@dataclass
class Dataset:
    """Feature matrix plus per-example severity, fault id and binary label.

    ``ids`` are stable example identifiers that survive partitioning, so
    dev/test disjointness can be checked after the fact.
    """

    X: np.ndarray
    severity: np.ndarray
    fault_id: np.ndarray
    policy: LabelingPolicy = CHILLER
    ids: np.ndarray = None
    z: np.ndarray = field(init=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.X), -1)
        self.severity = np.asarray(self.severity, dtype=np.int64)
        self.fault_id = np.asarray(self.fault_id, dtype=np.int64)
        if self.ids is None:
            self.ids = np.arange(len(self.X), dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)
        n = len(self.X)
        if not (len(self.severity) == len(self.fault_id) == len(self.ids) == n):
            raise ValueError("dataset arrays have inconsistent lengths")
        if np.any((self.severity == 0) != (self.fault_id == 0)):
            raise ValueError("severity 0 must coincide with fault_id 0")
        self.z = self.policy.labels(self.severity)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.severity[idx], self.fault_id[idx], self.policy, self.ids[idx])

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.severity, self.fault_id, self.policy, self.ids)

    def incipient_mask(self) -> np.ndarray:
        return np.isin(self.severity, INCIPIENT_SEVERITIES)


def fault_directions(config: GeneratorConfig) -> np.ndarray:
    """Unit vectors, one row per fault type, drawn from the config seed.

    With ``direction_support`` set, each direction is non-zero on only that
    many randomly chosen features (a fault disturbs a few sensors).
    """
    rng = make_rng(config.seed, "fault-directions")
    u = rng.standard_normal((config.n_fault_types, config.d))
    if config.direction_support is not None:
        mask = np.zeros_like(u, dtype=bool)
        for f in range(config.n_fault_types):
            mask[f, rng.choice(config.d, size=config.direction_support, replace=False)] = True
        u = np.where(mask, u, 0.0)
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def generate(config: GeneratorConfig, policy: LabelingPolicy = CHILLER) -> Dataset:
    config.validate()
    directions = fault_directions(config)
    rng = make_rng(config.seed, "samples")
    std = config.cluster_std

    blocks = [std * rng.standard_normal((config.n_normal, config.d))]
    severity = [np.zeros(config.n_normal, dtype=np.int64)]
    fault = [np.zeros(config.n_normal, dtype=np.int64)]
    for f in range(config.n_fault_types):
        for level, offset in enumerate(config.offsets, start=1):
            center = offset * directions[f]
            blocks.append(center + std * rng.standard_normal((config.n_per_cell, config.d)))
            severity.append(np.full(config.n_per_cell, level, dtype=np.int64))
            fault.append(np.full(config.n_per_cell, f + 1, dtype=np.int64))
    return Dataset(np.vstack(blocks), np.concatenate(severity), np.concatenate(fault), policy)


def partition(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Split ``data`` into (dev, test), stratified by severity level.

    Every severity stratum is shuffled and cut at ``dev_fraction``. For the
    incipient strata (SL1, SL2) only the first ``rho`` share of the dev side is
    kept; the remainder is dropped rather than moved into test. Because the
    retained part is a prefix of a fixed permutation, dev sets for smaller
    ``rho`` are subsets of those for larger ``rho``.
    """
    if not 0.0 <= spec.rho <= 1.0:
        raise PartitionError(f"rho must lie in [0, 1], got {spec.rho}")
    if not 0.0 < spec.dev_fraction < 1.0:
        raise PartitionError(f"dev_fraction must lie in (0, 1), got {spec.dev_fraction}")

    dev_idx, test_idx = [], []
    for level in SEVERITIES:
        members = np.flatnonzero(data.severity == level)
        if members.size == 0:
            raise PartitionError(f"severity stratum SL{level} is empty")
        perm = make_rng(spec.seed, "partition", level).permutation(members)
        n_dev = int(np.floor(spec.dev_fraction * members.size + 0.5))
        dev_side, test_side = perm[:n_dev], perm[n_dev:]
        if level in INCIPIENT_SEVERITIES:
            n_keep = int(np.floor(spec.rho * dev_side.size + 0.5))
            dev_side = dev_side[:n_keep]
        dev_idx.append(dev_side)
        test_idx.append(test_side)
    dev_idx = np.sort(np.concatenate(dev_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return data.subset(dev_idx), data.subset(test_idx)


def feature_columns(d: int) -> list[str]:
    return [f"f{j}" for j in range(d)]


def ingest_csv(path, policy: LabelingPolicy = CHILLER, d: int | None = None) -> Dataset:
    """Read a dataset with columns ``f0..f{d-1}, severity, fault_id``.

    ``d`` is inferred from the header when not given. Row numbers in errors
    count data rows from 1 (the header is not counted).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVParseError(0, "missing header row")
        if d is None:
            d = sum(1 for h in header if h.startswith("f") and h[1:].isdigit())
        expected = feature_columns(d) + ["severity", "fault_id"]
        missing = [c for c in expected if c not in header]
        if missing:
            raise CSVParseError(0, f"missing column(s) {missing}")
        pos = [header.index(c) for c in expected]

        X, sev, fid = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise CSVParseError(row_no, f"expected {len(header)} cells, found {len(row)}")
            try:
                values = [float(row[p]) for p in pos]
            except ValueError as exc:
                raise CSVParseError(row_no, f"non-numeric cell ({exc})") from None
            s, f = values[-2], values[-1]
            if s != int(s) or int(s) not in SEVERITIES:
                raise CSVParseError(row_no, f"severity {row[pos[-2]]!r} not in 0..4")
            if f != int(f) or f < 0:
                raise CSVParseError(row_no, f"fault_id {row[pos[-1]]!r} is not a non-negative integer")
            if (int(s) == 0) != (int(f) == 0):
                raise CSVParseError(row_no, "severity 0 must coincide with fault_id 0")
            X.append(values[:-2])
            sev.append(int(s))
            fid.append(int(f))
    X = np.asarray(X, dtype=np.float64).reshape(len(X), d)
    return Dataset(X, np.asarray(sev, dtype=np.int64), np.asarray(fid, dtype=np.int64), policy)


def write_csv(data: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(feature_columns(data.d) + ["severity", "fault_id"])
        for x, s, f in zip(data.X, data.severity, data.fault_id):
            w.writerow([repr(float(v)) for v in x] + [int(s), int(f)])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # features passed through unscaled

    @property
    def warning(self) -> bool:
        return bool(self.constant.any())

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.size:
            raise StandardizerError(f"expected {self.mean.size} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std


def fit_standardizer(dev: Dataset | np.ndarray) -> Standardizer:
    """Per-feature mean/std from the development data only.

    Constant features get mean 0 and scale 1, i.e. they pass through
    unchanged, and are flagged on the returned object.
    """
    X = dev.X if isinstance(dev, Dataset) else np.asarray(dev, dtype=np.float64)
    if X.shape[0] == 0:
        raise StandardizerError("cannot fit a standardizer on an empty development set")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    constant = ~(std > 0)
    if constant.any():
        log.warning("constant feature(s) %s passed through unscaled", np.flatnonzero(constant).tolist())
    mean = np.where(constant, 0.0, mean)
    std = np.where(constant, 1.0, std)
    return Standardizer(mean, std, constant)


def apply(standardizer: Standardizer, X: np.ndarray) -> np.ndarray:
    return standardizer.apply(X)
