"""Bagged ensembles and the m x K prediction matrix."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .learners import FAMILIES, TrainingError
from .rng import seed_sequence, make_rng

MAX_RESAMPLES = 10


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    members: tuple
    member_seeds: tuple
    family: str
    params: object
    max_samples: float
    seed: int
    mode: str = "soft"

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def n_features(self) -> int:
        return self.members[0].n_features


def member_seed(master: int, k: int) -> int:
    return int(seed_sequence(master, "member", k).generate_state(1, np.uint64)[0] >> np.uint64(1))


def bootstrap_indices(n: int, max_samples: float, seed: int, attempt: int = 0) -> np.ndarray:
    size = math.ceil(max_samples * n)
    return make_rng(seed, "bootstrap", attempt).integers(0, n, size=size)


def _train_member(X, y, family, params, seed, max_samples, resample):
    _, trainer, _ = FAMILIES[family]
    if family == "net":
        params = replace(params, seed=seed)
    attempts = MAX_RESAMPLES + 1 if resample else 1
    for attempt in range(attempts):
        idx = bootstrap_indices(y.size, max_samples, seed, attempt)
        yb = y[idx]
        if yb.min() != yb.max():
            return trainer(X[idx], yb, params)
    raise TrainingError(f"bootstrap for member seed {seed} stayed single-class after {attempts} draws")


def train_bagging(X, y, family: str = "tree", params=None, K: int = 25, max_samples: float = 0.8,
                  seed: int = 0, mode: str = "soft", resample: bool = True) -> EnsembleModel:
    """Train ``K`` members, each on its own bootstrap of ``ceil(max_samples * n)`` rows.

    Single-class bootstraps are redrawn up to ``MAX_RESAMPLES`` times; the
    attempt number is part of the bootstrap seed so the result stays
    deterministic.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown learner family {family!r}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not 0.0 < max_samples <= 1.0:
        raise ValueError(f"max_samples must lie in (0, 1], got {max_samples}")
    if mode not in ("soft", "hard"):
        raise ValueError(f"unknown combination mode {mode!r}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if y.size == 0 or y.min() == y.max():
        raise TrainingError("development set must contain both classes")
    if params is None:
        params = FAMILIES[family][0]()
    seeds = tuple(member_seed(seed, k) for k in range(K))
    members = tuple(_train_member(X, y, family, params, s, max_samples, resample) for s in seeds)
    return EnsembleModel(members, seeds, family, params, max_samples, seed, mode)


def predict_matrix(ensemble: EnsembleModel, X) -> np.ndarray:
    """Entry ``(i, k)`` is member ``k``'s score on row ``i``."""
    return np.column_stack([m.score(X) for m in ensemble.members])


def combine(matrix, mode: str = "soft", tau: float | None = None) -> np.ndarray:
    """Soft voting averages member scores; hard voting is the share of members scoring above ``tau``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"prediction matrix must be 2-D, got shape {matrix.shape}")
    if mode == "soft":
        return matrix.mean(axis=1)
    if mode == "hard":
        if tau is None:
            raise ValueError("hard voting needs a member threshold tau")
        return (matrix > tau).mean(axis=1)
    raise ValueError(f"unknown combination mode {mode!r}")


def save_ensemble(ensemble: EnsembleModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, member in enumerate(ensemble.members):
        name = f"member_{k:03d}.npz"
        np.savez(directory / name, **member.to_arrays())
        files.append({"file": name, "seed": ensemble.member_seeds[k], "fingerprint": member.fingerprint})
    manifest = {
        "K": ensemble.K,
        "family": ensemble.family,
        "params": asdict(ensemble.params),
        "max_samples": ensemble.max_samples,
        "seed": ensemble.seed,
        "mode": ensemble.mode,
        "members": files,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def load_ensemble(directory) -> EnsembleModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    params_cls, _, model_cls = FAMILIES[manifest["family"]]
    members = []
    for entry in manifest["members"]:
        with np.load(directory / entry["file"]) as arrays:
            members.append(model_cls.from_arrays({k: arrays[k] for k in arrays.files}, entry["fingerprint"]))
    if len(members) != manifest["K"]:
        raise ValueError(f"manifest lists K={manifest['K']} but {len(members)} member files")
    return EnsembleModel(
        tuple(members),
        tuple(e["seed"] for e in manifest["members"]),
        manifest["family"],
        params_cls(**manifest["params"]),
        manifest["max_samples"],
        manifest["seed"],
        manifest["mode"],
    )
