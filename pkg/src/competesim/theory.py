"""Closed-form bounds and numerical checks for the competition theorems.

Everything here is either a pure formula or a small Monte Carlo / exact
enumeration used to verify one. All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError, PreconditionError

# Constant in the k = 2 regression bound; an alternative printing of the
# same result uses 3567.
THM43I_CONSTANT = 7056
# Walks that reach a level L with (q/p)**L below this count as escaped.
ESCAPE_TOL = 1e-15


# ---------------------------------------------------------------- random walks

@dataclass(frozen=True)
class WalkParams:
    """Lazy walk on the integers: down w.p. q, up w.p. p, stay w.p. r."""

    q: float
    p: float
    r: float | None = None
    start: int = 1

    def __post_init__(self):
        r = 1.0 - self.q - self.p if self.r is None else self.r
        object.__setattr__(self, "r", r)
        if min(self.q, self.p, r) < 0 or not math.isclose(self.q + self.p + r, 1.0, abs_tol=1e-12):
            raise InvalidArgumentError(f"(q, p, r) = ({self.q}, {self.p}, {r}) is not a probability vector")
        if self.start < 1:
            raise InvalidArgumentError("the walk must start above the origin")


def rw_survival_prob(walk: WalkParams) -> float:
    """Closed-form survival value 1 - 2q/(q+p) used in the extinction argument.

    Returns 0 when q/(q+p) >= 1/2. This is a lower bound on the true
    survival probability from 1, see :func:`rw_survival_exact`.
    """
    if walk.q + walk.p == 0:
        return 1.0
    ratio = walk.q / (walk.q + walk.p)
    if ratio >= 0.5:
        return 0.0
    return 1.0 - 2.0 * ratio


def rw_survival_exact(walk: WalkParams) -> float:
    """Gambler's-ruin probability of never hitting 0: 1 - (q/p)**start."""
    if walk.q == 0:
        return 1.0
    if walk.q >= walk.p:
        return 0.0
    return 1.0 - (walk.q / walk.p) ** walk.start


class Estimate(NamedTuple):
    value: float
    se: float
    n: int


def rw_survival_mc(walk: WalkParams, horizon: int = 10_000, trials: int = 100_000,
                   rng: np.random.Generator | None = None) -> Estimate:
    """Fraction of simulated walks whose position stays > 0 for ``horizon`` steps.

    A walk that climbs to a level from which ruin has probability below
    ``ESCAPE_TOL`` is counted as surviving without simulating further.
    """
    if horizon < 0 or trials < 1:
        raise InvalidArgumentError("need horizon >= 0 and trials >= 1")
    if rng is None:
        rng = np.random.default_rng()
    if walk.q == 0 or horizon == 0:
        return Estimate(1.0, 0.0, trials)
    escape = math.inf
    if walk.q < walk.p:
        escape = math.ceil(math.log(ESCAPE_TOL) / math.log(walk.q / walk.p))
    pos = np.full(trials, walk.start, dtype=np.int64)
    active = np.arange(trials)
    dead = 0
    down, up = walk.q, walk.q + walk.p
    for _ in range(horizon):
        u = rng.random(active.size)
        step = (u < up).astype(np.int64) - 2 * (u < down)
        cur = pos[active] + step
        pos[active] = cur
        hit = cur <= 0
        dead += int(hit.sum())
        active = active[~hit & (cur < escape)]
        if active.size == 0:
            break
    p_hat = 1.0 - dead / trials
    return Estimate(p_hat, math.sqrt(p_hat * (1.0 - p_hat) / trials), trials)


# ------------------------------------------------------- truncated binomial

class TruncatedVariance(NamedTuple):
    exact: Fraction
    bound: Fraction

    @property
    def value(self) -> float:
        return float(self.exact)


def truncated_binomial_variance(n: int, c: int) -> TruncatedVariance:
    """Exact variance of Bin(2n, 1/2) conditioned on [n - c, n + c]."""
    if not (isinstance(n, int) and isinstance(c, int)) or not 0 < c < n:
        raise InvalidArgumentError(f"need integers n > c > 0, got n={n}, c={c}")
    support = range(n - c, n + c + 1)
    w = [math.comb(2 * n, j) for j in support]
    total = sum(w)
    mean = Fraction(sum(wi * j for wi, j in zip(w, support)), total)
    var = Fraction(sum(wi * (j - mean) ** 2 for wi, j in zip(w, support)), total)
    bound = Fraction(c, 2)
    if var < bound:
        raise AssertionError(f"variance {var} below c/2 at n={n}, c={c}")
    return TruncatedVariance(var, bound)


# ---------------------------------------------------------------- bounds

@dataclass(frozen=True)
class TheoryParams:
    s: int = 2
    k: int = 2
    alpha: float = 1.0
    eps: float = 0.0
    delta: float = 0.0
    rho: float = 0.0
    Delta: float = 1.0
    A1: float = 0.9

    @property
    def chi(self) -> float:
        return 4 * self.eps / (2 * self.eps + 1)


def _require(cond: bool, what: str) -> None:
    if not cond:
        raise PreconditionError(f"precondition violated: {what}")


def _theorem_key(theorem) -> str:
    key = str(theorem).lower().replace("thm", "").replace(".", "").replace("(", "").replace(")", "")
    if key not in {"41", "42", "43i", "43ii"}:
        raise InvalidArgumentError(f"unknown theorem {theorem!r}; expected 41, 42, 43i or 43ii")
    return key


def thm_bounds(theorem, params: TheoryParams) -> float:
    """Closed-form value attached to each theorem.

    * ``41``: floor on the competing predictors' mean risk, (1 - e^(1-k)) / (4ks).
    * ``42``: lower bound on the 1-NN risk ratio for two predictors.
    * ``43i``: lower bound on the OLS risk ratio for two predictors.
    * ``43ii``: asymptotic OLS risk ratio 2k/(k+1).
    """
    key = _theorem_key(theorem)
    p = params
    if key == "41":
        _require(p.s >= 1, "s >= 1")
        _require(p.k >= 1, "k >= 1")
        return (1.0 - math.exp(-p.k + 1)) / (4 * p.k * p.s)
    if key == "42":
        _require(p.s >= 2, "s >= 2")
        _require(p.alpha > math.log(2), "alpha > log 2")
        _require(0 <= p.eps <= 1 / 3, "eps in [0, 1/3]")
        s = p.s
        shrink = (1.0 - 2.0 / (2.0 + math.exp(p.alpha))) ** 2 if math.isfinite(p.alpha) else 1.0
        return 1.0 + (8.0 / (9.0 * math.sqrt(s))) ** (s / 2) * shrink / (54.0 * math.sqrt(2 * s))
    if key == "43i":
        _require(p.s >= 1, "s >= 1")
        return 1.0 + 1.0 / (THM43I_CONSTANT * p.s ** 1.5)
    _require(p.k >= 1, "k >= 1")
    return 2.0 * p.k / (p.k + 1)


class Thm44Interval(NamedTuple):
    c1_upper: float
    c2_lower: float
    valid: bool

    @property
    def nonempty(self) -> bool:
        return self.c1_upper < self.c2_lower


def thm44_condition(A1: float, delta: float, rho: float) -> bool:
    """Covariance condition rho < A1 - (A1 - delta)^2 - 6 delta."""
    return rho < A1 - (A1 - delta) ** 2 - 6 * delta


def thm44_interval(A1: float, delta: float, eps: float, rho: float) -> Thm44Interval:
    """Upper bound on c1 and lower bound on c2 for the interior-optimum range of alpha."""
    _require(2 / 3 < A1 < 1, "A1 in (2/3, 1)")
    _require(0 < delta < 1 / 6, "delta in (0, 1/6)")
    _require(0 <= eps < 1 / 14, "eps in [0, 1/14)")
    psi = A1 - (A1 - delta) ** 2 - rho
    if psi - 2 * delta <= 0:
        raise PreconditionError(
            f"interval empty: A1 - (A1 - delta)^2 - rho - 2 delta = {psi - 2 * delta:.6g} <= 0")
    c1 = math.log(psi / (psi - 2 * delta))
    c2 = math.log((1 - 4 * eps) * A1 / (1 - A1))
    return Thm44Interval(c1, c2, thm44_condition(A1, delta, rho))


# ---------------------------------------------------------------- weak pool

def weak_pool_quality(alpha: float, eps: float) -> float:
    """Limit, as the pool grows, of the chance that the selected weak learner is correct.

    Each learner is independently correct with probability 1/2 + eps.
    """
    if not 0 <= eps < 1 / 14:
        raise InvalidArgumentError("eps must lie in [0, 1/14)")
    if alpha < 0:
        raise InvalidArgumentError("alpha must be >= 0")
    if math.isinf(alpha):
        return 1.0
    chi = 4 * eps / (2 * eps + 1)
    ea = math.exp(alpha)
    return ea / (ea + 1 - chi)


def weak_pool_mc(alpha: float, eps: float, k: int = 200, trials: int = 100_000,
                 rng: np.random.Generator | None = None, chunk: int = 10_000) -> Estimate:
    """One-round simulation: k weak learners, softmax pick, was the pick correct?"""
    if k < 1 or trials < 1:
        raise InvalidArgumentError("need k >= 1 and trials >= 1")
    if rng is None:
        rng = np.random.default_rng()
    weight = math.exp(alpha)
    hits = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        correct = rng.random((n, k)) < 0.5 + eps
        cum = np.cumsum(np.where(correct, weight, 1.0), axis=1)
        target = rng.random(n) * cum[:, -1]
        pick = (cum <= target[:, None]).sum(axis=1)
        hits += int(correct[np.arange(n), np.minimum(pick, k - 1)].sum())
        done += n
    p_hat = hits / trials
    return Estimate(p_hat, math.sqrt(p_hat * (1 - p_hat) / trials), trials)


# ------------------------------------------------------- sequential k-means

def sequential_kmeans_quanta(k: int, delta: float) -> tuple[np.ndarray, float]:
    """Limit centroids of the unbiased partition of Uniform(1 - delta, 1 + delta), and its MSE."""
    if k < 1 or delta <= 0:
        raise InvalidArgumentError("need k >= 1 and delta > 0")
    i = np.arange(1, k + 1)
    return i * 2 * delta / (k + 1) - delta + 1, 2 * delta ** 2 * k / (3 * (k + 1))


def centroidal_quanta(k: int, delta: float) -> tuple[np.ndarray, float]:
    """Centroidal Voronoi partition of Uniform(1 - delta, 1 + delta): equal cells, centroids at midpoints.

    This is where the nearest-centroid running-mean process actually settles.
    Its mean risk over centroids is (delta^2 / 3) * (2 - 1/k^2).
    """
    if k < 1 or delta <= 0:
        raise InvalidArgumentError("need k >= 1 and delta > 0")
    i = np.arange(1, k + 1)
    return 1 - delta + (2 * i - 1) * delta / k, delta ** 2 / 3 * (2 - 1 / k ** 2)


def kmeans_path(centroids, counts, ys) -> tuple[list[float], list[int]]:
    """Feed ``ys`` to the nearest centroid's running mean (ties go uniformly; callers avoid them)."""
    c = [float(v) for v in centroids]
    n = [int(v) for v in counts]
    k = len(c)
    for y in ys:
        best, dist = 0, abs(y - c[0])
        for i in range(1, k):
            d = abs(y - c[i])
            if d < dist:
                best, dist = i, d
        n[best] += 1
        c[best] += (y - c[best]) / n[best]
    return c, n


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    counts: np.ndarray
    mse: float


def plugin_mse(centroids, delta: float) -> float:
    """Mean over centroids of E(Y - c)^2 for Y ~ Uniform(1 - delta, 1 + delta)."""
    c = np.asarray(centroids, dtype=float)
    return float(np.mean(delta ** 2 / 3 + (c - 1.0) ** 2))


def simulate_sequential_kmeans(k: int, delta: float, rounds: int, seeds_per_center: int = 1,
                               rng: np.random.Generator | None = None) -> KMeansResult:
    """Nearest-centroid running means on uniform draws, each centroid started at its seed mean."""
    if rounds < 1 or k < 1 or seeds_per_center < 1 or delta <= 0:
        raise InvalidArgumentError("need rounds, k, seeds_per_center >= 1 and delta > 0")
    if rng is None:
        rng = np.random.default_rng()
    seeds = rng.uniform(1 - delta, 1 + delta, size=(k, seeds_per_center))
    ys = rng.uniform(1 - delta, 1 + delta, size=rounds).tolist()
    c, n = kmeans_path(seeds.mean(axis=1), [seeds_per_center] * k, ys)
    order = np.argsort(c)
    cs = np.asarray(c)[order]
    return KMeansResult(cs, np.asarray(n)[order], plugin_mse(cs, delta))


# ---------------------------------------------------------- exact enumeration

def _softmax_probs(q: list[float], alpha: float) -> list[float]:
    if math.isinf(alpha):
        top = max(q)
        winners = [i for i, v in enumerate(q) if v == top]
        return [1.0 / len(winners) if i in winners else 0.0 for i in range(len(q))]
    w = [math.exp(alpha * v) for v in q]
    z = sum(w)
    return [v / z for v in w]


def _nn_label(counts: tuple[int, int]) -> int:
    # every point sits at the same x, so 1-NN is a vote over all labels; ties -> class 0
    return 1 if counts[1] > counts[0] else 0


def enumerate_winner_sequences(p_one: float, seed_size: int, k: int, rounds: int,
                               alpha: float) -> dict[tuple[int, ...], float]:
    """Exact law of the winner sequence for 1-NN learners on a constant-x binary source.

    ``p_one`` is the chance a label is 1. Seeds and round outcomes are
    expanded as a tree; each leaf adds its probability to its winner sequence.
    """
    if not 0 <= p_one <= 1 or seed_size < 1 or k < 1 or rounds < 0:
        raise InvalidArgumentError("need p_one in [0,1], seed_size >= 1, k >= 1, rounds >= 0")
    seed_law = [(math.comb(seed_size, j) * p_one ** j * (1 - p_one) ** (seed_size - j), j)
                for j in range(seed_size + 1)]
    out: dict[tuple[int, ...], float] = {}

    def rounds_from(state, seq, prob, t):
        if prob == 0.0:
            return
        if t == rounds:
            out[seq] = out.get(seq, 0.0) + prob
            return
        for y, py in ((1, p_one), (0, 1 - p_one)):
            if py == 0:
                continue
            q = [1.0 if _nn_label(c) == y else 0.0 for c in state]
            for w, pw in enumerate(_softmax_probs(q, alpha)):
                if pw == 0:
                    continue
                nxt = list(state)
                c = list(nxt[w])
                c[y] += 1
                nxt[w] = tuple(c)
                rounds_from(tuple(nxt), seq + (w,), prob * py * pw, t + 1)

    def seeds_from(state, prob):
        if len(state) == k:
            rounds_from(tuple(state), (), prob, 0)
            return
        for pj, j in seed_law:
            seeds_from(state + [(seed_size - j, j)], prob * pj)

    seeds_from([], 1.0)
    return out
