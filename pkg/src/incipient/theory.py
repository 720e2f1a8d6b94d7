"""Beta model of ensemble outputs and Monte Carlo checks of MEAN vs VAR.

Each member's prediction on an input is modelled as a Beta(alpha, beta) draw
with alpha + beta = c shared across inputs. For a less severe input i and a
more ambiguous input j (alpha_i < alpha_j <= beta_j) the expected gap of the
row mean exceeds the expected gap of the row variance, and mis-ranking
probabilities shrink like 1 / (K * gap**2).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .rng import make_rng

log = logging.getLogger(__name__)

THEORY_METRICS = ("MEAN", "VAR")


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def c(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class BetaPair:
    left: BetaParams
    right: BetaParams

    def __post_init__(self):
        if not math.isclose(self.left.c, self.right.c, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"pair must share alpha + beta, got {self.left.c} and {self.right.c}")

    @property
    def c(self) -> float:
        return self.left.c

    @property
    def in_regime(self) -> bool:
        return self.left.alpha < self.right.alpha <= self.right.beta

    @classmethod
    def from_alphas(cls, alpha_i: float, alpha_j: float, c: float) -> "BetaPair":
        return cls(BetaParams(alpha_i, c - alpha_i), BetaParams(alpha_j, c - alpha_j))

    def swapped(self) -> "BetaPair":
        return BetaPair(self.right, self.left)


@dataclass(frozen=True)
class MisrankEstimate:
    metric: str
    K: int
    trials: int
    p_hat: float
    se: float
    stat_var_left: float
    stat_var_right: float
    in_regime: bool


def beta_moments(p: BetaParams) -> tuple[float, float]:
    mu = p.alpha / p.c
    return mu, mu * (1.0 - mu) / (1.0 + p.c)


def delta_mean(pair: BetaPair) -> float:
    return beta_moments(pair.right)[0] - beta_moments(pair.left)[0]


def delta_var(pair: BetaPair) -> float:
    mu_i, mu_j = beta_moments(pair.left)[0], beta_moments(pair.right)[0]
    return (mu_j * (1.0 - mu_j) - mu_i * (1.0 - mu_i)) / (1.0 + pair.c)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_gamma(shape: float, size, rng: np.random.Generator) -> np.ndarray:
    """Unit-scale Gamma draws by Marsaglia-Tsang squeeze/rejection.

    Shapes below one are boosted: ``G(a) = G(a + 1) * U**(1/a)``.
    """
    size = tuple(np.atleast_1d(size))
    if shape <= 0:
        raise ValueError(f"Gamma shape must be positive, got {shape}")
    a = shape + 1.0 if shape < 1.0 else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    n = int(np.prod(size))
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        x = rng.standard_normal(todo.size)
        v = (1.0 + c * x) ** 3
        u = rng.random(todo.size)
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(u) < 0.5 * x * x + d * (1.0 - v + np.log(np.where(ok, v, 1.0))))
            )
        out[todo[accept]] = d * v[accept]
        todo = todo[~accept]
    if shape < 1.0:
        out *= rng.random(n) ** (1.0 / shape)
    return out.reshape(size)


def sample_beta(p: BetaParams, size, rng: np.random.Generator) -> np.ndarray:
    g1 = sample_gamma(p.alpha, size, rng)
    g2 = sample_gamma(p.beta, size, rng)
    return g1 / (g1 + g2)


def sample_row(p: BetaParams, K: int, seed: int) -> np.ndarray:
    """``K`` independent Beta draws standing in for one prediction-matrix row."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return sample_beta(p, K, make_rng(seed, "beta-row"))


def row_statistic(rows: np.ndarray, metric: str) -> np.ndarray:
    """Raw statistics analysed by the theory: row mean or row sample variance."""
    if metric == "MEAN":
        return rows.mean(axis=1)
    if metric == "VAR":
        return rows.var(axis=1, ddof=1)
    raise ValueError(f"theory metric must be one of {THEORY_METRICS}, got {metric!r}")


def misrank_probability(pair: BetaPair, metric: str, K: int, trials: int, seed: int,
                        chunk: int = 20000) -> MisrankEstimate:
    """Monte Carlo estimate of ``P(s(x_i) > s(x_j))`` for rows of ``K`` draws."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if metric == "VAR" and K < 2:
        raise ValueError("VAR needs K >= 2")
    if not pair.in_regime:
        log.warning("pair %s is outside the alpha_i < alpha_j <= beta_j regime", pair)
    rng = make_rng(seed, "misrank", metric, K)
    hits = 0
    # running moments of the per-side statistic (for the Chebyshev bound)
    sums = np.zeros((2, 2))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        s_i = row_statistic(sample_beta(pair.left, (m, K), rng), metric)
        s_j = row_statistic(sample_beta(pair.right, (m, K), rng), metric)
        hits += int(np.sum(s_i > s_j))
        for side, s in enumerate((s_i, s_j)):
            sums[side] += (s.sum(), np.square(s).sum())
        done += m
    p_hat = hits / trials
    means = sums[:, 0] / trials
    variances = np.maximum(sums[:, 1] / trials - means**2, 0.0)
    return MisrankEstimate(metric, K, trials, p_hat, math.sqrt(p_hat * (1.0 - p_hat) / trials),
                           float(variances[0]), float(variances[1]), pair.in_regime)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def fit_beta_moments(m: float, v: float) -> BetaParams:
    if not 0.0 < m < 1.0:
        raise FitError(f"sample mean {m} outside (0, 1)")
    if not v > 0.0:
        raise FitError("sample variance is zero")
    t = m * (1.0 - m) / v - 1.0
    if t <= 0.0:
        raise FitError(f"variance {v} too large for a Beta with mean {m}")
    return BetaParams(m * t, (1.0 - m) * t)


def fit_beta_mom(samples) -> BetaParams:
    """Method-of-moments Beta fit (sample variance with ddof=1)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise FitError("need at least two samples")
    return fit_beta_moments(float(x.mean()), float(x.var(ddof=1)))


def prediction_histogram(row, bins: int = 10) -> dict:
    """Histogram of one example's member predictions plus a fitted Beta when one exists."""
    counts, edges = np.histogram(np.asarray(row, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    out = {"counts": counts.tolist(), "edges": edges.tolist(), "alpha": None, "beta": None}
    try:
        fit = fit_beta_mom(row)
    except FitError:
        return out
    out.update(alpha=fit.alpha, beta=fit.beta)
    return out


# ---------------------------------------------------------------------------
# Grid verification
# ---------------------------------------------------------------------------


def regime_pairs(c: float, alphas) -> list[BetaPair]:
    """All pairs ``alpha_i < alpha_j <= c / 2`` drawn from ``alphas``."""
    alphas = sorted(a for a in alphas if 0 < a <= c / 2)
    return [BetaPair.from_alphas(ai, aj, c) for n, ai in enumerate(alphas) for aj in alphas[n + 1:]]


def half_step_alphas(c: float) -> list[float]:
    return [0.5 * k for k in range(1, int(c) + 1)]


def delta_grid(c_values=(4, 10, 20), alphas_for=half_step_alphas) -> list[dict]:
    rows = []
    for c in c_values:
        for pair in regime_pairs(c, alphas_for(c)):
            dm, dv = delta_mean(pair), delta_var(pair)
            rows.append({"c": c, "alpha_i": pair.left.alpha, "alpha_j": pair.right.alpha,
                         "delta_mean": dm, "delta_var": dv, "ordered": dm > dv > 0})
    return rows



@dataclass(frozen=True)
class TheoryGrid:
    c_values: tuple = (4, 10, 20)
    mean_fractions: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    K_values: tuple = (5, 25, 100)
    trials: int = 20000
    seed: int = 0

    def pairs(self) -> list[BetaPair]:
        out = []
        for c in self.c_values:
            out.extend(regime_pairs(c, [c * f for f in self.mean_fractions]))
        return out


def verify_theorem_grid(grid: TheoryGrid) -> tuple[list[dict], dict]:
    """Closed-form gaps and Monte Carlo mis-ranking rates over a parameter grid.

    Returns ``(rows, summary)``; one row per (pair, K). The summary flags:

    * ``delta_ordering`` - delta_mean > delta_var > 0 in every cell (exact);
    * ``mean_le_var`` - p_mean <= p_var within 3 combined standard errors;
    * ``chebyshev_bound`` - p_hat <= (Var s_i + Var s_j) / delta**2 + 3 se,
      with the statistic variances estimated from the same trials;
    * ``inverse_k_scaling`` - K * (Var s_i + Var s_j) varies by at most a
      factor 2 across K, so the bound decays like 1 / (K delta**2);
    * ``vanishing_in_k`` - p_hat at the largest K is no larger than at the
      smallest K (within 3 se).
    """
    if grid.trials < 1:
        raise ValueError("trials must be positive")
    rows = []
    for pair_no, pair in enumerate(grid.pairs()):
        dm, dv = delta_mean(pair), delta_var(pair)
        for K in grid.K_values:
            row = {"c": pair.c, "alpha_i": pair.left.alpha, "alpha_j": pair.right.alpha, "K": K,
                   "delta_mean": dm, "delta_var": dv}
            for metric, delta in (("MEAN", dm), ("VAR", dv)):
                est = misrank_probability(pair, metric, K, grid.trials, seed=_cell_seed(grid.seed, pair_no))
                tag = metric.lower()
                row[f"p_{tag}"] = est.p_hat
                row[f"se_{tag}"] = est.se
                row[f"statvar_{tag}"] = est.stat_var_left + est.stat_var_right
                row[f"bound_{tag}"] = row[f"statvar_{tag}"] / delta**2
            rows.append(row)
    return rows, summarize(rows, grid.K_values)


def _cell_seed(seed: int, pair_no: int) -> int:
    return int(make_rng(seed, "theory-cell", pair_no).integers(2**62))


def summarize(rows: list[dict], K_values) -> dict:
    k_lo, k_hi = min(K_values), max(K_values)
    flags = {
        "delta_ordering": all(r["delta_mean"] > r["delta_var"] > 0 for r in rows),
        "mean_le_var": all(
            r["p_mean"] <= r["p_var"] + 3 * math.hypot(r["se_mean"], r["se_var"]) for r in rows
        ),
        "chebyshev_bound": all(
            r[f"p_{t}"] <= r[f"bound_{t}"] + 3 * r[f"se_{t}"] for r in rows for t in ("mean", "var")
        ),
    }
    by_pair = {}
    for r in rows:
        by_pair.setdefault((r["c"], r["alpha_i"], r["alpha_j"]), {})[r["K"]] = r
    scaling, vanishing = True, True
    for cells in by_pair.values():
        for t in ("mean", "var"):
            scaled = [K * cells[K][f"statvar_{t}"] for K in cells]
            if min(scaled) <= 0 or max(scaled) / min(scaled) > 2.0:
                scaling = False
            lo, hi = cells[k_lo], cells[k_hi]
            if hi[f"p_{t}"] > lo[f"p_{t}"] + 3 * math.hypot(hi[f"se_{t}"], lo[f"se_{t}"]):
                vanishing = False
    flags["inverse_k_scaling"] = scaling
    flags["vanishing_in_k"] = vanishing
    flags["n_rows"] = len(rows)
    flags["n_pairs"] = len(by_pair)
    return flags


def write_theory_report(rows: list[dict], summary: dict, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out_dir / "theory_grid.csv", out_dir / "theory_summary.json"
    with csv_path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["c"])
        w.writeheader()
        w.writerows(rows)
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def estimate_to_dict(est: MisrankEstimate) -> dict:
    return asdict(est)
