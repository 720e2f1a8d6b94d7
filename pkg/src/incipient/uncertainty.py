"""Uncertainty scores over rows of the ensemble prediction matrix.

MEAN and ENTROPY only look at the ensemble output (the row mean); VAR and KL
measure disagreement between members. Larger score means more uncertain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-12
METRICS = ("MEAN", "ENTROPY", "VAR", "KL")


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintyScores:
    metric: str
    scores: np.ndarray
    tau: float | None = None
    eps: float | None = None


def u_mean(y_ens, tau):
    """Confidence gap ``1 - |y_ens - tau|``."""
    return 1.0 - np.abs(np.asarray(y_ens, dtype=np.float64) - tau)


def u_entropy(y_ens, eps: float = EPS):
    """Binary entropy of the ensemble output, clipped to ``[eps, 1 - eps]``.

    Evaluated through the gap ``g = |y_ens - 0.5|`` so that ``y`` and ``1 - y``
    score identically in floating point, as they do under MEAN at 0.5.
    """
    g = np.minimum(np.abs(np.asarray(y_ens, dtype=np.float64) - 0.5), 0.5 - eps)
    lo, hi = 0.5 - g, 0.5 + g
    return -(lo * np.log(lo) + hi * np.log(hi))


def _as_rows(rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.shape[1] < 2:
        raise UndefinedMetricError("disagreement metrics need at least two ensemble members")
    return rows


def u_var(rows):
    """Sample variance (ddof=1) of each row; a 1-D input is treated as one row."""
    scalar = np.ndim(rows) == 1
    rows = _as_rows(rows)
    # shifting by the first member keeps constant rows at exactly zero
    out = (rows - rows[:, :1]).var(axis=1, ddof=1)
    return float(out[0]) if scalar else out


def bernoulli_kl(p, q):
    return p * (np.log(p) - np.log(q)) + (1.0 - p) * (np.log1p(-p) - np.log1p(-q))


def u_kl(rows, eps: float = EPS):
    """Average Bernoulli KL divergence of each member from the row mean."""
    scalar = np.ndim(rows) == 1
    p = np.clip(_as_rows(rows), eps, 1.0 - eps)
    q = p.mean(axis=1, keepdims=True)
    # rounding can push the divergence a hair below zero, or off zero for a constant row
    out = np.maximum(bernoulli_kl(p, q).mean(axis=1), 0.0)
    out[np.ptp(p, axis=1) == 0] = 0.0
    return float(out[0]) if scalar else out


def uncertainty(matrix, metric: str, tau: float = 0.5) -> UncertaintyScores:
    """Score every row of the m x K prediction matrix under ``metric``.

    ``tau`` is the ensemble decision threshold; only MEAN uses it.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    metric = metric.upper()
    if metric == "MEAN":
        return UncertaintyScores(metric, u_mean(matrix.mean(axis=1), tau), tau=tau)
    if metric == "ENTROPY":
        return UncertaintyScores(metric, u_entropy(matrix.mean(axis=1)), eps=EPS)
    if metric == "VAR":
        return UncertaintyScores(metric, u_var(matrix))
    if metric == "KL":
        return UncertaintyScores(metric, u_kl(matrix), eps=EPS)
    raise ValueError(f"unknown uncertainty metric {metric!r}; expected one of {METRICS}")


def rank_uncertain(scores, negatives) -> list[int]:
    """Predicted negatives ordered by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.asarray(sorted(negatives), dtype=np.int64)
    if idx.size == 0:
        return []
    order = np.lexsort((idx, -scores[idx]))
    return idx[order].tolist()


def union_mean_var(uncertain_by_mean, uncertain_by_var) -> set:
    return set(uncertain_by_mean) | set(uncertain_by_var)
