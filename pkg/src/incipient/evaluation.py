"""Detection and triage metrics.

Rates over empty populations are undefined; they raise here and surface as
``None`` in reports rather than a silent zero.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .datagen import SEVERITIES


class UndefinedRateError(ValueError):
    pass


def fnr(predictions, labels, mask=None) -> float:
    """Share of positives (inside ``mask``) predicted negative."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    pos = labels == 1
    if mask is not None:
        pos &= np.asarray(mask, dtype=bool)
    if not pos.any():
        raise UndefinedRateError("FNR undefined: stratum has no positives")
    return float(np.mean(predictions[pos] == 0))


def fpr(predictions, labels, mask=None) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    neg = labels == 0
    if mask is not None:
        neg &= np.asarray(mask, dtype=bool)
    if not neg.any():
        raise UndefinedRateError("FPR undefined: no negatives")
    return float(np.mean(predictions[neg] == 1))


def fn_precision(uncertain, labels) -> float | None:
    """Share of flagged uncertain negatives that are real anomalies; ``None`` if nothing was flagged."""
    idx = np.asarray(sorted(uncertain), dtype=np.int64)
    if idx.size == 0:
        return None
    return float(np.mean(np.asarray(labels)[idx] == 1))


def remaining_false_negatives(predictions, labels, uncertain) -> int:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    fn = (predictions == 0) & (labels == 1)
    flagged = np.zeros(fn.size, dtype=bool)
    flagged[np.asarray(sorted(uncertain), dtype=np.int64)] = True
    return int(np.sum(fn & ~flagged))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney form of the ROC AUC; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRateError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except UndefinedRateError:
        return None


@dataclass
class MetricsReport:
    fnr_incipient: float | None
    fnr_non_incipient: float | None
    fpr: float | None
    fn_precision: float | None
    total_fn: int
    certain_fn: int
    uncertain_fn: int
    uncertain_negative_count: int
    fnr_by_severity: dict = field(default_factory=dict)
    fn_by_severity: dict = field(default_factory=dict)

    def flat(self) -> dict:
        """Flatten the per-severity dicts into ``fnr_sl1``-style keys."""
        out = asdict(self)
        by_sl = out.pop("fnr_by_severity")
        fn_sl = out.pop("fn_by_severity")
        for level in SEVERITIES[1:]:
            out[f"fnr_sl{level}"] = by_sl.get(level)
            out[f"fn_sl{level}"] = fn_sl.get(level)
        return out


def evaluate(predictions, labels, severity, uncertain, incipient_severities=(1, 2)) -> MetricsReport:
    """Build a report for one test set.

    ``incipient_severities`` are the positive severities treated as incipient
    under the active labeling policy.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    severity = np.asarray(severity)
    uncertain = np.asarray(sorted(uncertain), dtype=np.int64)
    incipient = np.isin(severity, incipient_severities)

    fn_mask = (predictions == 0) & (labels == 1)
    flagged = np.zeros(labels.size, dtype=bool)
    flagged[uncertain] = True
    total_fn = int(fn_mask.sum())
    uncertain_fn = int(np.sum(fn_mask & flagged))

    return MetricsReport(
        fnr_incipient=_safe(fnr, predictions, labels, incipient),
        fnr_non_incipient=_safe(fnr, predictions, labels, ~incipient),
        fpr=_safe(fpr, predictions, labels),
        fn_precision=fn_precision(uncertain, labels),
        total_fn=total_fn,
        certain_fn=total_fn - uncertain_fn,
        uncertain_fn=uncertain_fn,
        uncertain_negative_count=int(uncertain.size),
        fnr_by_severity={int(s): _safe(fnr, predictions, labels, severity == s) for s in SEVERITIES[1:]},
        fn_by_severity={int(s): int(np.sum(fn_mask & (severity == s))) for s in SEVERITIES[1:]},
    )
