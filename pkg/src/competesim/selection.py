"""Softmax user choice among competing predictors.

A user facing ``k`` predictors picks predictor ``i`` with probability
``exp(alpha * q_i) / sum_j exp(alpha * q_j)`` where ``q`` is the vector of
prediction qualities. ``alpha = inf`` is perfect information (argmax with a
uniform tie-break) and ``alpha = 0`` is uniform choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

#: Sentinel for perfect information; compared by identity-free ``math.isinf``.
INF = math.inf

CLASSIFICATION = "classification-indicator"
NEGATIVE_LOSS = "negative-loss"


@dataclass(frozen=True)
class SelectionRule:
    """How users pick a winner from a quality vector.

    Attributes:
        alpha: information efficiency, a nonnegative float or ``math.inf``.
        per_user_alpha: draw a fresh alpha from a standard normal every round.
        clamp_negative: with ``per_user_alpha``, clamp negative draws to 0.
        quality_kind: ``"classification-indicator"`` (q = 1{y == yhat}) or
            ``"negative-loss"`` (q = -(y - yhat)**2).
    """

    alpha: float = 0.0
    per_user_alpha: bool = False
    clamp_negative: bool = True
    quality_kind: str = CLASSIFICATION

    def __post_init__(self):
        if math.isnan(self.alpha):
            raise InvalidArgumentError("alpha must not be NaN")
        if not self.per_user_alpha and self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")
        if self.quality_kind not in (CLASSIFICATION, NEGATIVE_LOSS):
            raise InvalidArgumentError(f"unknown quality kind {self.quality_kind!r}")

    def draw_alpha(self, rng: np.random.Generator) -> float:
        """Alpha for the current round; consumes one normal variate if per-user."""
        if not self.per_user_alpha:
            return self.alpha
        a = float(rng.standard_normal())
        if self.clamp_negative and a < 0.0:
            a = 0.0
        return a


def qualities(y, predictions, quality_kind: str = CLASSIFICATION) -> np.ndarray:
    """Quality vector for one user's label against every predictor's output."""
    preds = np.asarray(predictions)
    if quality_kind == CLASSIFICATION:
        return (preds == y).astype(float)
    return -((preds.astype(float) - float(y)) ** 2)


def selection_probabilities(q, alpha: float) -> np.ndarray:
    """Exact softmax selection distribution for quality vector ``q``."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise InvalidArgumentError("quality vector must be a nonempty 1-d array")
    if math.isinf(alpha):
        top = q == q.max()
        return top / top.sum()
    z = alpha * (q - q.max())
    w = np.exp(z)
    return w / w.sum()


def select_winner(q, alpha: float, rng: np.random.Generator) -> int:
    """Sample a winner index; draws exactly one uniform variate from ``rng``."""
    q = [float(v) for v in q]
    k = len(q)
    if k == 0:
        raise InvalidArgumentError("quality vector must be nonempty")
    u = rng.random()
    top = max(q)
    if math.isinf(alpha):
        best = [i for i, v in enumerate(q) if v == top]
        return best[min(int(u * len(best)), len(best) - 1)]
    if alpha == 0.0:
        return min(int(u * k), k - 1)
    weights = [math.exp(alpha * (v - top)) for v in q]
    target = u * math.fsum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if target < acc:
            return i
    return k - 1
