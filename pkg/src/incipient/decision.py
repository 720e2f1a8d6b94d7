"""Threshold calibration and the uncertainty-informed decision rule.

Both thresholds use nearest-rank quantiles on development data: the detection
threshold fixes the dev false-positive rate at ``q`` and the uncertainty
threshold fixes the share of uncertain predicted negatives at ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionPolicy:
    tau: float
    q: float
    u_threshold: float | None = None
    theta: float | None = None
    metric: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _nearest_rank(values: np.ndarray, level: float) -> float:
    s = np.sort(values)
    # round before ceil so that e.g. 0.95 * 100 never lands on 96
    r = math.ceil(round(level * s.size, 9))
    return float(s[max(r, 1) - 1])


def calibrate_tau(dev_negative_scores, q: float) -> float:
    """Nearest-rank ``(1 - q)`` quantile of the development negatives' scores.

    With the rule ``score > tau`` at most ``q * n`` dev negatives are flagged.
    """
    s = np.asarray(dev_negative_scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise CalibrationError("no development negatives to calibrate tau on")
    if not 0.0 <= q < 1.0:
        raise CalibrationError(f"q must lie in [0, 1), got {q}")
    if q == 0.0:
        return float(s.max())
    if s.size < math.ceil(1.0 / q):
        raise CalibrationError(f"q={q} needs at least {math.ceil(1.0 / q)} dev negatives, have {s.size}")
    return _nearest_rank(s, 1.0 - q)


def classify(scores, tau: float) -> np.ndarray:
    return (np.asarray(scores) > tau).astype(np.int8)


def calibrate_u_threshold(dev_negative_uncertainty, theta: float) -> float:
    """Uncertainty threshold so that a share ``theta`` of dev predicted negatives exceeds it.

    ``theta = 1`` returns ``min - 1`` so every predicted negative is uncertain.
    """
    u = np.asarray(dev_negative_uncertainty, dtype=np.float64).ravel()
    if u.size == 0:
        raise CalibrationError("no development predicted negatives to calibrate the uncertainty threshold on")
    if not 0.0 <= theta <= 1.0:
        raise CalibrationError(f"theta must lie in [0, 1], got {theta}")
    if theta == 0.0:
        return float(u.max())
    if theta == 1.0:
        return float(u.min() - 1.0)
    return _nearest_rank(u, 1.0 - theta)


def select_uncertain_negatives(predictions, uncertainty, u_threshold: float) -> np.ndarray:
    """Indices ``i`` with ``predictions[i] == 0`` and ``uncertainty[i] > u_threshold``."""
    predictions = np.asarray(predictions)
    uncertainty = np.asarray(uncertainty, dtype=np.float64)
    return np.flatnonzero((predictions == 0) & (uncertainty > u_threshold))
