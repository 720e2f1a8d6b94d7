"""Sweep orchestration: data -> ensemble -> calibration -> triage -> metrics.

One *job* is a (seed, rho, K) cell: it builds the data split and trains one
ensemble, then fans out over q, theta and metric cheaply. Every record holds
its full sweep coordinates, so a failed combination leaves the others intact.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen
from .config import UNION_METRIC, ExperimentConfig
from .decision import (DecisionPolicy, calibrate_tau, calibrate_u_threshold, classify,
                       select_uncertain_negatives)
from .ensemble import combine, predict_matrix, train_bagging
from .evaluation import evaluate, fpr
from .rng import seed_sequence
from .theory import prediction_histogram
from .uncertainty import uncertainty, union_mean_var

log = logging.getLogger(__name__)

METRIC_ORDER = ("MEAN", "ENTROPY", "VAR", "KL", UNION_METRIC)

# (column, type) in output order; the type drives CSV parsing on read-back
SCHEMA = [
    ("seed", int), ("rho", float), ("K", int), ("q", float), ("theta", float), ("metric", str),
    ("family", str), ("max_samples", float), ("mode", str), ("policy", str),
    ("status", str), ("error", str),
    ("tau", float), ("u_threshold", float), ("mean_tau", float),
    ("n_dev", int), ("n_test", int), ("dev_fpr", float),
    ("fnr_incipient", float), ("fnr_non_incipient", float), ("fpr", float),
    ("fn_precision", float), ("total_fn", int), ("certain_fn", int), ("uncertain_fn", int),
    ("uncertain_negative_count", int),
    ("fnr_sl1", float), ("fnr_sl2", float), ("fnr_sl3", float), ("fnr_sl4", float),
    ("fn_sl1", int), ("fn_sl2", int), ("fn_sl3", int), ("fn_sl4", int),
]
COLUMNS = [name for name, _ in SCHEMA]
NA = "NA"


def derived_seed(seed: int, *tags) -> int:
    return int(seed_sequence(seed, *tags).generate_state(1, np.uint64)[0] >> np.uint64(2))


def load_dataset(cfg: ExperimentConfig, seed: int) -> datagen.Dataset:
    policy = datagen.get_policy(cfg.data.policy)
    if cfg.data.source == "csv":
        return datagen.ingest_csv(cfg.data.csv_path, policy)
    return datagen.generate(cfg.data.generator(derived_seed(seed, "data")), policy)


def prepare_split(cfg: ExperimentConfig, seed: int, rho: float):
    data = load_dataset(cfg, seed)
    # split seed ignores rho so dev sets are nested across the rho sweep
    dev, test = datagen.partition(data, datagen.SplitSpec(rho, cfg.data.dev_fraction, derived_seed(seed, "split")))
    if cfg.data.standardize:
        scaler = datagen.fit_standardizer(dev)
        dev, test = dev.with_features(scaler.apply(dev.X)), test.with_features(scaler.apply(test.X))
    return dev, test


def _base_record(cfg, seed, rho, K, q, theta, metric) -> dict:
    rec = dict.fromkeys(COLUMNS)
    rec.update(seed=seed, rho=rho, K=K, q=q, theta=theta, metric=metric, family=cfg.learner.family,
               max_samples=cfg.sweep.max_samples, mode=cfg.sweep.mode, policy=cfg.data.policy,
               status="ok", error="")
    return rec


def _error_records(cfg, seed, rho, K, exc) -> list[dict]:
    out = []
    for q in cfg.sweep.q:
        for theta in cfg.sweep.theta:
            for metric in cfg.sweep.metrics:
                rec = _base_record(cfg, seed, rho, K, q, theta, metric)
                rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
                out.append(rec)
    return out


def run_job(cfg: ExperimentConfig, seed: int, rho: float, K: int) -> list[dict]:
    """All records of one (seed, rho, K) cell."""
    try:
        dev, test = prepare_split(cfg, seed, rho)
        ens = train_bagging(dev.X, dev.z, cfg.learner.family, cfg.learner.params(), K,
                            cfg.sweep.max_samples, derived_seed(seed, "ensemble", rho, K), cfg.sweep.mode)
        dev_matrix, test_matrix = predict_matrix(ens, dev.X), predict_matrix(ens, test.X)
    except Exception as exc:  # any stage failure is recorded, the sweep goes on
        log.warning("job seed=%s rho=%s K=%s failed: %s", seed, rho, K, exc)
        return _error_records(cfg, seed, rho, K, exc)

    records = []
    incipient = dev.policy.incipient_severities
    for q in cfg.sweep.q:
        for theta in cfg.sweep.theta:
            records.extend(_evaluate_cell(cfg, seed, rho, K, q, theta, dev, test, dev_matrix, test_matrix, incipient))
    return records


def _evaluate_cell(cfg, seed, rho, K, q, theta, dev, test, dev_matrix, test_matrix, incipient):
    out = []
    try:
        mode = cfg.sweep.mode
        # hard voting needs a member threshold before tau exists; 0.5 is the natural member cut
        dev_score = combine(dev_matrix, mode, 0.5)
        test_score = combine(test_matrix, mode, 0.5)
        tau = calibrate_tau(dev_score[dev.z == 0], q)
        dev_pred, test_pred = classify(dev_score, tau), classify(test_score, tau)
        dev_fpr = fpr(dev_pred, dev.z)
    except Exception as exc:
        for metric in cfg.sweep.metrics:
            rec = _base_record(cfg, seed, rho, K, q, theta, metric)
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
            out.append(rec)
        return out

    mean_tau = tau if cfg.sweep.mean_tau == "calibrated" else float(cfg.sweep.mean_tau)
    selected = {}

    def select(metric):
        if metric not in selected:
            u_dev = uncertainty(dev_matrix, metric, mean_tau).scores
            u_test = uncertainty(test_matrix, metric, mean_tau).scores
            u_thr = calibrate_u_threshold(u_dev[dev_pred == 0], theta)
            selected[metric] = (DecisionPolicy(tau, q, u_thr, theta, metric),
                                select_uncertain_negatives(test_pred, u_test, u_thr))
        return selected[metric]

    for metric in cfg.sweep.metrics:
        rec = _base_record(cfg, seed, rho, K, q, theta, metric)
        rec.update(tau=tau, n_dev=len(dev), n_test=len(test), dev_fpr=dev_fpr,
                   mean_tau=mean_tau if metric in ("MEAN", UNION_METRIC) else None)
        try:
            if metric == UNION_METRIC:
                uncertain = sorted(union_mean_var(select("MEAN")[1].tolist(), select("VAR")[1].tolist()))
            else:
                policy, uncertain = select(metric)
                rec["u_threshold"] = policy.u_threshold
            report = evaluate(test_pred, test.z, test.severity, uncertain, incipient)
            rec.update(report.flat())
        except Exception as exc:
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}")
        out.append(rec)
    return out


def _job(args):
    cfg, seed, rho, K = args
    return run_job(cfg, seed, rho, K)


def sort_key(rec: dict):
    return (rec["seed"], rec["rho"], rec["K"], rec["q"], rec["theta"], METRIC_ORDER.index(rec["metric"]))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Run the full sweep; records come back sorted with seeds outermost."""
    cells = [(cfg, seed, rho, K) for seed in cfg.sweep.seeds for rho in cfg.sweep.rho for K in cfg.sweep.K]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_job, cells))
    else:
        chunks = [_job(c) for c in cells]
    return sorted((r for chunk in chunks for r in chunk), key=sort_key)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return NA if math.isnan(value) else repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    return str(value)


def emit_results(records: list[dict], out_dir, formats=("csv", "json")) -> list[Path]:
    if not records:
        raise ValueError("no records to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / "results.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for rec in records:
                w.writerow([_fmt(rec.get(c)) for c in COLUMNS])
        written.append(path)
    if "json" in formats:
        path = out_dir / "results.json"
        clean = [{c: _json_value(rec.get(c)) for c in COLUMNS} for rec in records]
        path.write_text(json.dumps(clean, indent=1) + "\n", encoding="utf-8")
        written.append(path)
    return written


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def read_results(path) -> list[dict]:
    types = dict(SCHEMA)
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, raw in row.items():
                if key == "error":
                    rec[key] = raw
                elif raw == NA:
                    rec[key] = None
                else:
                    rec[key] = types.get(key, str)(raw)
            out.append(rec)
    return out


def export_histograms(cfg: ExperimentConfig, seed: int, rho: float, K: int, out_dir) -> Path:
    """Per-severity histograms of member predictions with Beta fits, for a few test examples."""
    dev, test = prepare_split(cfg, seed, rho)
    ens = train_bagging(dev.X, dev.z, cfg.learner.family, cfg.learner.params(), K,
                        cfg.sweep.max_samples, derived_seed(seed, "ensemble", rho, K), cfg.sweep.mode)
    matrix = predict_matrix(ens, test.X)
    rng = np.random.default_rng(seed_sequence(seed, "histogram-probe"))
    entries = []
    for level in datagen.SEVERITIES:
        idx = np.flatnonzero(test.severity == level)
        pick = np.sort(rng.choice(idx, size=min(cfg.output.histogram_examples, idx.size), replace=False))
        for i in pick:
            entries.append({"severity": int(level), "example": int(test.ids[i]), **prediction_histogram(matrix[i])})
    path = Path(out_dir) / f"histograms_seed{seed}_rho{rho}_K{K}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=1) + "\n")
    return path


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

REPORT_TABLES = {
    # figure-style summaries: value column grouped by sweep coordinates
    "fnr_by_q": ("fnr_incipient", ("family", "K", "rho", "q")),
    "fnr_non_incipient_by_q": ("fnr_non_incipient", ("family", "K", "rho", "q")),
    "certain_fn_by_metric": ("certain_fn", ("family", "K", "rho", "q", "theta", "metric")),
    "fn_precision_by_metric": ("fn_precision", ("family", "K", "rho", "q", "theta", "metric")),
}


def summarize_records(records: list[dict]) -> dict[str, list[dict]]:
    """Median and quartiles per group, i.e. the numbers behind a box plot."""
    tables = {}
    for name, (value, keys) in REPORT_TABLES.items():
        groups = {}
        seen_metric = set()
        for rec in records:
            if rec.get("status") != "ok":
                continue
            k = tuple(rec[c] for c in keys)
            if "metric" not in keys:
                # rate columns do not depend on the metric; count each run once
                dedup = k + (rec["seed"], rec["theta"])
                if dedup in seen_metric:
                    continue
                seen_metric.add(dedup)
            groups.setdefault(k, []).append(rec[value])
        rows = []
        for k in sorted(groups, key=lambda t: tuple(str(x) if isinstance(x, str) else x for x in t)):
            vals = np.array([v for v in groups[k] if v is not None], dtype=float)
            row = dict(zip(keys, k))
            row["n"] = int(vals.size)
            row["n_undefined"] = len(groups[k]) - int(vals.size)
            if vals.size:
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                row.update(q1=float(q1), median=float(med), q3=float(q3), min=float(vals.min()), max=float(vals.max()))
            else:
                row.update(q1=None, median=None, q3=None, min=None, max=None)
            rows.append(row)
        tables[name] = rows
    return tables


def write_report(tables: dict[str, list[dict]], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in tables.items():
        path = out_dir / f"summary_{name}.csv"
        with path.open("w", newline="") as fh:
            if rows:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                for row in rows:
                    w.writerow({k: _fmt(v) for k, v in row.items()})
        paths.append(path)
    return paths
