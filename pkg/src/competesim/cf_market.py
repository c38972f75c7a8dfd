"""Recommenders competing for bandit users.

``m`` users repeatedly pick one of ``k`` recommenders with an epsilon-greedy
bandit (epsilon = tau**-0.3, tau counting the user's rounds including the
current one). The chosen recommender proposes an item, epsilon-greedily over
its own matrix-factorization scores, the user interacts with probability
``M[item, user]``, and only that recommender learns from the outcome.

In the baseline market the selected recommender trains on an interaction
with an independently drawn user instead of the one who chose it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distributions import PreferenceMatrix, make_preference_matrix
from .engine import make_rng, substream
from .errors import CompetesimError, InvalidArgumentError

log = logging.getLogger(__name__)

EXPLORE_POWER = -0.3


def explore_rate(tau: int) -> float:
    """Epsilon for the ``tau``-th decision (tau >= 1)."""
    return float(tau) ** EXPLORE_POWER


@dataclass
class RecommenderState:
    """Factor estimates plus running means of observed (item, user) outcomes."""

    V: np.ndarray
    W: np.ndarray
    M_hat: np.ndarray
    counts: np.ndarray
    served: int = 0

    @classmethod
    def fresh(cls, r: int, m: int, latent_dim: int, rng: np.random.Generator) -> "RecommenderState":
        return cls(V=rng.random((r, latent_dim)), W=rng.random((m, latent_dim)),
                   M_hat=np.zeros((r, m)), counts=np.zeros((r, m), dtype=np.int64))

    @property
    def r(self) -> int:
        return self.V.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def scores(self, j: int) -> np.ndarray:
        return self.V @ self.W[j]

    def best_items(self) -> np.ndarray:
        """Greedy item for every user."""
        return np.argmax(self.V @ self.W.T, axis=0)


@dataclass
class UserBanditState:
    pulls: np.ndarray
    rewards: np.ndarray
    tau: int = 0

    @classmethod
    def fresh(cls, k: int) -> "UserBanditState":
        return cls(np.zeros(k, dtype=np.int64), np.zeros(k))

    def record(self, arm: int, reward: float) -> None:
        self.pulls[arm] += 1
        self.rewards[arm] += reward
        self.tau += 1


def mf_update(state: RecommenderState, i: int, j: int, outcome: int, gamma: float = 0.1,
              lam: float = 1e-4) -> RecommenderState:
    """Fold one observed outcome for (item i, user j) into ``state`` in place.

    The running mean is updated first; then both factor rows take a gradient
    step on the squared residual with weight decay, using the pre-update
    rows for both.
    """
    if not (0 <= i < state.r and 0 <= j < state.m):
        raise InvalidArgumentError(f"index out of range: item {i}, user {j}")
    if gamma < 0 or lam < 0:
        raise InvalidArgumentError("gamma and lambda must be nonnegative")
    state.counts[i, j] += 1
    n = state.counts[i, j]
    state.M_hat[i, j] += (outcome - state.M_hat[i, j]) / n
    v, w = state.V[i].copy(), state.W[j].copy()
    resid = state.M_hat[i, j] - v @ w
    state.V[i] = v + gamma * resid * w - lam * v
    state.W[j] = w + gamma * resid * v - lam * w
    return state


def bandit_select(state: UserBanditState, k: int, rng: np.random.Generator, eps: float | None = None,
                  optimistic: bool = False) -> int:
    """Epsilon-greedy choice of a recommender.

    Unpulled arms count as mean 0 (or 1 with ``optimistic``). Ties between
    greedy arms are broken uniformly.
    """
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if eps is None:
        eps = explore_rate(state.tau + 1)
    if rng.random() < eps:
        return int(rng.integers(k))
    fill = 1.0 if optimistic else 0.0
    means = np.where(state.pulls > 0, state.rewards / np.maximum(state.pulls, 1), fill)
    best = np.flatnonzero(means == means.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def recommend(state: RecommenderState, j: int, rng: np.random.Generator, eps: float | None = None) -> int:
    """Greedy item for user ``j`` with probability 1 - eps, else a uniform item."""
    if not 0 <= j < state.m:
        raise InvalidArgumentError(f"user {j} out of range")
    if eps is None:
        eps = explore_rate(state.served + 1)
    if rng.random() < eps:
        return int(rng.integers(state.r))
    return int(np.argmax(state.scores(j)))


def population_pctr(M: np.ndarray, state: RecommenderState) -> float:
    """Mean over users of the true preference of the recommender's greedy item."""
    items = state.best_items()
    return float(M[items, np.arange(M.shape[1])].mean())


@dataclass
class CFConfig:
    r: int = 8
    m: int = 16
    k: int = 2
    rounds: int = 20_000
    latent_dim: int = 4
    rank: int = 3
    gamma: float = 0.1
    lam: float = 1e-4
    optimistic: bool = False
    user_reward: str = "outcome"
    baseline: bool = False
    eval_every: int = 1000

    def __post_init__(self):
        for name in ("r", "m", "k", "rounds", "latent_dim", "rank", "eval_every"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.user_reward not in ("outcome", "preference"):
            raise InvalidArgumentError("user_reward must be 'outcome' or 'preference'")


@dataclass
class CFTrace:
    config: CFConfig
    M: np.ndarray
    users: np.ndarray
    recommenders: np.ndarray
    items: np.ndarray
    preferences: np.ndarray
    outcomes: np.ndarray
    eval_rounds: np.ndarray
    pctr: np.ndarray
    states: list[RecommenderState] = field(default_factory=list)
    bandits: list[UserBanditState] = field(default_factory=list)

    def user_quality(self) -> float:
        """Mean true preference of the items users were served."""
        return float(self.preferences.mean())

    def final_pctr(self) -> np.ndarray:
        return np.array([population_pctr(self.M, st) for st in self.states])

    def served(self) -> np.ndarray:
        return np.bincount(self.recommenders, minlength=self.config.k)


# substream indices within one market replicate
_PREF, _USERS, _RECS, _OUTCOMES, _FRESH, _INIT0 = range(6)


def run_cf_market(r: int, m: int, k: int, rounds: int, rng: np.random.Generator | int,
                  preference: PreferenceMatrix | None = None, **options) -> CFTrace:
    """Simulate the recommender market; ``options`` are extra :class:`CFConfig` fields."""
    config = CFConfig(r=r, m=m, k=k, rounds=rounds, **options)
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    if preference is None:
        preference = make_preference_matrix(r, m, config.rank, substream(rng, _PREF))
    M = preference.M
    if M.shape != (r, m):
        raise InvalidArgumentError(f"preference matrix has shape {M.shape}, expected {(r, m)}")
    user_rng, rec_rng, out_rng = (substream(rng, i) for i in (_USERS, _RECS, _OUTCOMES))
    fresh_rng = substream(rng, _FRESH) if config.baseline else None
    recs = [RecommenderState.fresh(r, m, config.latent_dim, substream(rng, _INIT0 + a)) for a in range(k)]
    bandits = [UserBanditState.fresh(k) for _ in range(m)]
    reward_outcome = config.user_reward == "outcome"

    users = np.empty(rounds, dtype=np.int64)
    chosen = np.empty(rounds, dtype=np.int64)
    items = np.empty(rounds, dtype=np.int64)
    prefs = np.empty(rounds)
    outcomes = np.empty(rounds, dtype=np.int8)
    eval_rounds, pctr = [], []

    for t in range(rounds):
        j = int(user_rng.integers(m))
        a = bandit_select(bandits[j], k, user_rng, optimistic=config.optimistic)
        rec = recs[a]
        i = recommend(rec, j, rec_rng)
        y = int(out_rng.random() < M[i, j])
        bandits[j].record(a, y if reward_outcome else M[i, j])
        rec.served += 1
        if config.baseline:
            j2 = int(fresh_rng.integers(m))
            i2 = recommend(rec, j2, rec_rng)
            y2 = int(fresh_rng.random() < M[i2, j2])
            mf_update(rec, i2, j2, y2, config.gamma, config.lam)
        else:
            mf_update(rec, i, j, y, config.gamma, config.lam)
        users[t], chosen[t], items[t], prefs[t], outcomes[t] = j, a, i, M[i, j], y
        if (t + 1) % config.eval_every == 0 or t + 1 == rounds:
            if not all(np.isfinite(s.V).all() and np.isfinite(s.W).all() for s in recs):
                log.error("factor estimates diverged by round %d", t + 1)
                raise CompetesimError(f"matrix factorization diverged by round {t + 1}")
            eval_rounds.append(t + 1)
            pctr.append([population_pctr(M, s) for s in recs])

    return CFTrace(config, M, users, chosen, items, prefs, outcomes,
                   np.array(eval_rounds), np.array(pctr), recs, bandits)
