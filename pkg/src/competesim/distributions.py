"""Population sources that users (and seed data) are drawn from.

Synthetic sources are stateless: ``sample(rng)`` draws i.i.d. forever. The
empirical source walks a shuffled copy of its rows without replacement and
raises :class:`DataExhaustedError` once every row has been handed out.

The ``thm*`` kinds are the small adversarial constructions used to show
the cost of competition:

* ``thm41``: x = 1 with probability 1/s, else 0; y = x.
* ``thm42``: x = 0; y = 1 with probability 1 - eps, else 0.
* ``thm43i``: x = Delta/2; y is 0 or Delta with equal probability.
* ``thm43ii``: x = 1; y ~ Uniform(1 - delta, 1 + delta).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataExhaustedError, InvalidArgumentError

log = logging.getLogger(__name__)

_ONE = np.ones(1)
_ZERO = np.zeros(1)


class Datum(NamedTuple):
    id: int
    x: np.ndarray
    y: int | float


class PopulationSource:
    """Base class. ``num_classes`` is None for regression sources."""

    kind = "base"
    dim = 1
    num_classes: int | None = None

    def __init__(self):
        self._drawn = 0

    @property
    def classification(self) -> bool:
        return self.num_classes is not None

    def start(self, rng: np.random.Generator) -> None:
        """Prepare for a new run (empirical sources reshuffle here)."""
        self._drawn = 0

    def sample(self, rng: np.random.Generator) -> Datum:
        x, y = self._draw(rng)
        d = Datum(self._drawn, x, y)
        self._drawn += 1
        return d

    def _draw(self, rng):
        raise NotImplementedError

    def test_set(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``n`` fresh i.i.d. draws for evaluation."""
        pairs = [self._draw(rng) for _ in range(n)]
        X = np.array([p[0] for p in pairs]).reshape(n, self.dim)
        y = np.array([p[1] for p in pairs], dtype=np.int64 if self.classification else float)
        return X, y

    def params(self) -> dict:
        return {}


class Thm41Source(PopulationSource):
    kind = "thm41"
    num_classes = 2

    def __init__(self, s: int):
        super().__init__()
        if s < 1:
            raise InvalidArgumentError(f"thm41 needs s >= 1, got {s}")
        self.s = s
        self.p_one = 1.0 / s

    def _draw(self, rng):
        if rng.random() < self.p_one:
            return _ONE, 1
        return _ZERO, 0

    def params(self):
        return {"s": self.s}


class Thm42Source(PopulationSource):
    kind = "thm42"
    num_classes = 2

    def __init__(self, eps: float):
        super().__init__()
        if not 0 < eps <= 1 / 3:
            raise InvalidArgumentError(f"thm42 needs eps in (0, 1/3], got {eps}")
        self.eps = eps

    def _draw(self, rng):
        return _ZERO, int(rng.random() < 1.0 - self.eps)

    def params(self):
        return {"eps": self.eps}


class Thm43iSource(PopulationSource):
    kind = "thm43i"

    def __init__(self, Delta: float):
        super().__init__()
        if Delta <= 0:
            raise InvalidArgumentError(f"thm43i needs Delta > 0, got {Delta}")
        self.Delta = Delta
        self._x = np.array([Delta / 2.0])

    def _draw(self, rng):
        return self._x, self.Delta if rng.random() < 0.5 else 0.0

    def params(self):
        return {"Delta": self.Delta}


class Thm43iiSource(PopulationSource):
    kind = "thm43ii"

    def __init__(self, delta: float):
        super().__init__()
        if delta <= 0:
            raise InvalidArgumentError(f"thm43ii needs delta > 0, got {delta}")
        self.delta = delta

    def _draw(self, rng):
        return _ONE, float(rng.uniform(1.0 - self.delta, 1.0 + self.delta))

    def params(self):
        return {"delta": self.delta}


class GaussianMixtureSource(PopulationSource):
    """Equiprobable classes with means ``separation * e_c`` and shared isotropic noise."""

    kind = "gaussian_mixture"

    def __init__(self, num_classes: int = 4, dim: int | None = None, separation: float = 1.0, sigma: float = 1.0):
        super().__init__()
        dim = num_classes if dim is None else dim
        if num_classes < 2 or dim < num_classes:
            raise InvalidArgumentError("gaussian_mixture needs num_classes >= 2 and dim >= num_classes")
        if sigma <= 0:
            raise InvalidArgumentError("sigma must be > 0")
        self.num_classes, self.dim = num_classes, dim
        self.separation, self.sigma = separation, sigma
        self.means = np.zeros((num_classes, dim))
        self.means[np.arange(num_classes), np.arange(num_classes)] = separation

    def _draw(self, rng):
        c = int(rng.integers(self.num_classes))
        return self.means[c] + self.sigma * rng.standard_normal(self.dim), c

    def test_set(self, n, rng, balanced: bool = True):
        """Balanced by default: ``n // num_classes`` points of every class."""
        if not balanced:
            return super().test_set(n, rng)
        per = max(1, n // self.num_classes)
        y = np.repeat(np.arange(self.num_classes), per)
        X = self.means[y] + self.sigma * rng.standard_normal((y.size, self.dim))
        return X, y

    def params(self):
        return {"num_classes": self.num_classes, "dim": self.dim,
                "separation": self.separation, "sigma": self.sigma}


class EmpiricalSource(PopulationSource):
    """Rows of a dataset handed out once each, in an order fixed by ``start``."""

    kind = "empirical"

    def __init__(self, X, y, num_classes: int | None):
        super().__init__()
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y)
        self.dim = self.X.shape[1]
        self.num_classes = num_classes
        self._order = np.arange(len(self.y))

    def start(self, rng):
        super().start(rng)
        self._order = rng.permutation(len(self.y))

    def sample(self, rng=None) -> Datum:
        if self._drawn >= len(self._order):
            raise DataExhaustedError(f"empirical source exhausted after {self._drawn} rows")
        row = int(self._order[self._drawn])
        self._drawn += 1
        return Datum(row, self.X[row], self.y[row].item())

    def _draw(self, rng):
        d = self.sample(rng)
        return d.x, d.y

    def params(self):
        return {"rows": int(len(self.y))}


def make_source(kind: str, **params) -> PopulationSource:
    """Factory by kind name (empirical sources are built from a Dataset instead)."""
    table = {
        "thm41": Thm41Source,
        "thm42": Thm42Source,
        "thm43i": Thm43iSource,
        "thm43ii": Thm43iiSource,
        "gaussian_mixture": GaussianMixtureSource,
    }
    if kind not in table:
        raise InvalidArgumentError(f"unknown source kind {kind!r}")
    return table[kind](**params)


@dataclass(frozen=True)
class PreferenceMatrix:
    """Item-by-user interaction probabilities, affinely scaled onto [0, 1]."""

    M: np.ndarray
    rank: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.M.shape


def make_preference_matrix(r: int, m: int, rank: int, rng: np.random.Generator) -> PreferenceMatrix:
    """Product of Gaussian low-rank factors, scaled so its min is 0 and max is 1."""
    if r < 1 or m < 1 or rank < 1:
        raise InvalidArgumentError("r, m and rank must all be >= 1")
    if r * m < 2:
        raise InvalidArgumentError("a 1x1 matrix cannot be scaled onto [0, 1]")
    while True:
        V = rng.standard_normal((r, rank))
        W = rng.standard_normal((m, rank))
        raw = V @ W.T
        lo, hi = raw.min(), raw.max()
        if hi > lo:
            return PreferenceMatrix((raw - lo) / (hi - lo), rank)
        log.info("constant preference matrix drawn; regenerating")
