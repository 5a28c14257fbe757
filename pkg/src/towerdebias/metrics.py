"""Fairness and utility metrics.

Fairness is the Pearson correlation between predictions and each sensitive
column (every dummy level of a categorical sensitive attribute, no reference
level dropped); utility is mean absolute error for regression and the
misclassification rate for classification. Correlations of constant vectors
are reported as an explicit undefined status (``None``), never NaN: debiasing
with k equal to the reference size produces constant predictions, so the case
is structural, not exceptional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector, check_binary_labels, check_same_length
from .data import Dataset
from .debias import classify

_VAR_FLOOR = 1e-24


def pearson(u, v) -> float | None:
    """Sample Pearson correlation, or None when either input is constant.

    Two-pass computation (center, then accumulate cross products); the result
    is clamped to [-1, 1] against floating-point overshoot.
    """
    u = as_float_vector(np.asarray(u, dtype=np.float64), "u")
    v = as_float_vector(np.asarray(v, dtype=np.float64), "v")
    check_same_length(u, v)
    if len(u) < 2:
        raise ValueError("pearson needs vectors of length >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    n1 = len(u) - 1
    if (du @ du) / n1 < _VAR_FLOOR or (dv @ dv) / n1 < _VAR_FLOOR:
        return None
    r = (du @ dv) / np.sqrt((du @ du) * (dv @ dv))
    return float(min(1.0, max(-1.0, r)))


def mape(actual, predicted) -> float:
    """Mean absolute prediction error, in target units (not a percentage)."""
    actual = as_float_vector(np.asarray(actual, dtype=np.float64), "actual")
    predicted = as_float_vector(np.asarray(predicted, dtype=np.float64), "predicted")
    check_same_length(actual, predicted, "actual", "predicted")
    if len(actual) < 1:
        raise ValueError("mape needs at least one value")
    return float(np.mean(np.abs(actual - predicted)))


def misclassification_rate(actual, predicted) -> float:
    """Fraction of label mismatches; both inputs must be 0/1."""
    actual = as_float_vector(np.asarray(actual, dtype=np.float64), "actual")
    predicted = as_float_vector(np.asarray(predicted, dtype=np.float64), "predicted")
    check_same_length(actual, predicted, "actual", "predicted")
    if len(actual) < 1:
        raise ValueError("misclassification_rate needs at least one label")
    check_binary_labels(actual, "actual")
    check_binary_labels(predicted, "predicted")
    return float(np.mean(actual != predicted))


@dataclass(frozen=True)
class CorrelationEntry:
    """Signed correlations of one sensitive column with both prediction sets."""

    name: str
    baseline: float | None
    debiased: float | None

    @property
    def reduction(self) -> float | None:
        """Drop in absolute correlation; positive means the debiased side is fairer."""
        if self.baseline is None or self.debiased is None:
            return None
        return abs(self.baseline) - abs(self.debiased)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "baseline_correlation": self.baseline,
            "debiased_correlation": self.debiased,
            "reduction": self.reduction,
            "status": "ok" if self.baseline is not None and self.debiased is not None
            else "undefined",
        }


@dataclass(frozen=True)
class FairnessReport:
    """Per-sensitive-level correlations plus a utility score, before and after debiasing."""

    entries: tuple[CorrelationEntry, ...]
    utility_metric: str  # "mape" | "misclassification_rate"
    utility_baseline: float
    utility_debiased: float
    k: int
    n_holdout: int

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "utility_metric": self.utility_metric,
            "utility_baseline": self.utility_baseline,
            "utility_debiased": self.utility_debiased,
            "k": self.k,
            "n_holdout": self.n_holdout,
        }


def fairness_report(holdout: Dataset, baseline_predictions, debiased_predictions,
                    k: int, task: str = "regression", threshold: float = 0.5) -> FairnessReport:
    """Correlate both prediction sets with every sensitive column and score utility.

    For classification the correlations use the probabilities as given, while
    utility thresholds them into labels first.
    """
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    sensitive_names = holdout.sensitive_names
    if not sensitive_names:
        raise ValueError("holdout has no sensitive columns to report on")
    baseline = as_float_vector(np.asarray(baseline_predictions, dtype=np.float64), "baseline")
    debiased = as_float_vector(np.asarray(debiased_predictions, dtype=np.float64), "debiased")
    if len(baseline) != holdout.n_rows or len(debiased) != holdout.n_rows:
        raise ValueError("prediction vectors must align with the holdout rows")

    entries = tuple(
        CorrelationEntry(
            name=name,
            baseline=pearson(baseline, holdout.column(name)),
            debiased=pearson(debiased, holdout.column(name)),
        )
        for name in sensitive_names
    )
    y = holdout.target()
    if task == "regression":
        metric = "mape"
        util_base = mape(y, baseline)
        util_deb = mape(y, debiased)
    else:
        metric = "misclassification_rate"
        util_base = misclassification_rate(y, classify(baseline, threshold))
        util_deb = misclassification_rate(y, classify(debiased, threshold))
    return FairnessReport(entries, metric, util_base, util_deb, k, holdout.n_rows)
