"""Quantities reported for a finished competition.

All functions are pure: they read traces and final predictors and never
mutate them. Accuracies are fractions in [0, 1]; the population accuracy
delta against a baseline run is reported in percentage points.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .engine import CompetitionTrace
from .errors import InvalidArgumentError
from .learners import Learner


def predict_all(learners: Sequence[Learner], X) -> np.ndarray:
    """Predictions of every learner on ``X`` as a (k, n) array."""
    return np.stack([lrn.predict_many(X) for lrn in learners])


def _row_ids(y, groups, num_rows):
    rows = np.asarray(y if groups is None else groups)
    if num_rows is None:
        num_rows = int(rows.max()) + 1
    counts = np.bincount(rows, minlength=num_rows)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        what = "class" if groups is None else "group"
        raise InvalidArgumentError(f"test set has no example of {what} {int(missing[0])}")
    return rows, num_rows, counts


def conditional_accuracy(preds: np.ndarray, y, groups=None, num_rows: int | None = None) -> np.ndarray:
    """Per-row (class or group) accuracy of each predictor: shape (rows, k).

    ``preds`` is the (k, n) output of :func:`predict_all`.
    """
    y = np.asarray(y)
    rows, num_rows, counts = _row_ids(y, groups, num_rows)
    correct = (np.atleast_2d(preds) == y[None, :]).astype(float)
    acc = np.stack([np.bincount(rows, weights=c, minlength=num_rows) for c in correct], axis=1)
    return acc / counts[:, None]


def specialization_matrix(learners: Sequence[Learner], X, y, num_classes: int | None = None,
                          groups=None, num_groups: int | None = None) -> np.ndarray:
    """Class-conditional accuracy minus its mean over predictors, shape (rows, k).

    With ``groups`` the rows are the values of a categorical feature rather
    than the label classes.
    """
    preds = predict_all(learners, X)
    acc = conditional_accuracy(preds, y, groups, num_classes if groups is None else num_groups)
    return acc - acc.mean(axis=1, keepdims=True)


def specialization_index(delta: np.ndarray) -> float:
    """Mean over rows of the across-predictor variance of conditional accuracy."""
    return float(np.mean(np.asarray(delta) ** 2))


def population_accuracy(learner: Learner, X, y) -> float:
    return float(np.mean(learner.predict_many(X) == np.asarray(y)))


def population_risk(learner: Learner, X, y) -> float:
    """Error rate for classifiers, mean squared error for regressors."""
    pred = learner.predict_many(X)
    if learner.classification:
        return float(np.mean(pred != np.asarray(y)))
    return float(np.mean((pred - np.asarray(y, dtype=float)) ** 2))


def mean_risk(learners: Sequence[Learner], X, y) -> float:
    """Average population risk over the competing predictors."""
    return float(np.mean([population_risk(lrn, X, y) for lrn in learners]))


def user_quality(trace: CompetitionTrace) -> float:
    """Average over rounds of the winner's quality.

    For classification this is the fraction of rounds whose winner was
    correct; for regression it is the mean negative squared error.
    """
    if trace.rounds < 1:
        raise InvalidArgumentError("trace has no rounds")
    return float(np.mean(trace.winner_qualities()))


def population_accuracy_delta(trace: CompetitionTrace, baseline_trace: CompetitionTrace, X, y) -> float:
    """Mean over predictors of (competition - baseline) test accuracy, in points."""
    if not trace.config.matches(baseline_trace.config):
        raise InvalidArgumentError("traces differ in k, seed size, rounds or learner")
    comp = [population_accuracy(lrn, X, y) for lrn in trace.learners]
    base = [population_accuracy(lrn, X, y) for lrn in baseline_trace.learners]
    return 100.0 * float(np.mean(comp) - np.mean(base))


class RiskRatio(NamedTuple):
    value: float
    infinite: bool


def risk_ratio(k_traces: Sequence[CompetitionTrace], single_traces: Sequence[CompetitionTrace], X, y) -> RiskRatio:
    """Mean k-predictor risk over replicates divided by the mean monopolist risk."""
    if not k_traces or not single_traces:
        raise InvalidArgumentError("both replicate sets must be nonempty")
    num = float(np.mean([mean_risk(tr.learners, X, y) for tr in k_traces]))
    den = float(np.mean([mean_risk(tr.learners, X, y) for tr in single_traces]))
    if den == 0.0:
        return RiskRatio(math.inf if num > 0 else math.nan, True)
    return RiskRatio(num / den, False)


def mean_se(values) -> tuple[float, float]:
    """Replicate mean and standard error (sample std / sqrt(n)); SE is NaN for n = 1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidArgumentError("no values to aggregate")
    if v.size == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
