"""Ensemble uncertainty for incipient anomaly detection.

Bagged tree/network ensembles, uncertainty metrics over the member
prediction matrix, FPR-percentile threshold calibration, uncertain-negative
triage, and Monte Carlo checks of the Beta output model.
"""

__version__ = "0.1.0"
