"""Round-based competition between predictors.

Each predictor is seeded with ``s`` i.i.d. samples. Every round a user is
drawn, all predictors answer, the user picks a winner with the softmax rule,
and only the winner receives the user's datum. The baseline variant keeps
the same selection step but hands the winner a fresh independent draw, which
removes the selection bias from what the winner learns.

Randomness: the replicate generator is split into independent keyed
substreams (seed data, user stream, selection, baseline draws, one per
learner), so the user stream is identical across different ``k`` and
``alpha`` for the same seed. Within the selection stream the per-round
alpha draw (if any) precedes the selection variate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import PopulationSource
from .errors import DataExhaustedError, InvalidArgumentError
from .learners import Learner, LearnerSpec
from .selection import CLASSIFICATION, NEGATIVE_LOSS, SelectionRule, select_winner


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for ``seed``; ``key`` picks an independent substream."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def substream(rng: np.random.Generator, index: int) -> np.random.Generator:
    """Child stream number ``index`` of ``rng``; unlike ``Generator.spawn`` this is stateless."""
    ss = rng.bit_generator.seed_seq
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (index,))
    return np.random.Generator(type(rng.bit_generator)(child))


# substream indices within one replicate
_SEED, _STREAM, _SELECT, _FRESH, _LEARNER0 = range(5)


@dataclass(frozen=True)
class CompetitionConfig:
    k: int
    seed_size: int
    rounds: int
    rule: SelectionRule = field(default_factory=SelectionRule)
    learner: LearnerSpec = field(default_factory=LearnerSpec)
    rng_seed: int = 0
    baseline: bool = False
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {self.k}")
        if self.seed_size < 0:
            raise InvalidArgumentError(f"seed size must be >= 0, got {self.seed_size}")
        if self.rounds < 1:
            raise InvalidArgumentError(f"rounds must be >= 1, got {self.rounds}")
        if not 0 <= self.test_fraction < 1:
            raise InvalidArgumentError(f"test fraction must lie in [0, 1), got {self.test_fraction}")

    def matches(self, other: "CompetitionConfig") -> bool:
        """Same k, s, T and learner (alpha, seed and mode may differ)."""
        return (self.k, self.seed_size, self.rounds, self.learner) == \
            (other.k, other.seed_size, other.rounds, other.learner)


@dataclass
class CompetitionTrace:
    """Per-round log of one competition plus the final predictors.

    ``sizes[t, i]`` is predictor ``i``'s dataset size after round ``t``
    (row 0 is the seed state).
    """

    config: CompetitionConfig
    datum_ids: np.ndarray
    labels: np.ndarray
    predictions: np.ndarray
    qualities: np.ndarray
    winners: np.ndarray
    alphas: np.ndarray
    sizes: np.ndarray
    learners: list[Learner]
    classification: bool = True

    @property
    def rounds(self) -> int:
        return len(self.winners)

    @property
    def k(self) -> int:
        return self.config.k

    def winner_qualities(self) -> np.ndarray:
        return self.qualities[np.arange(self.rounds), self.winners]

    def rows(self) -> list[dict]:
        """Flat per-round records, one dict per round (for CSV output)."""
        out = []
        for t in range(self.rounds):
            row = {"t": t + 1, "datum_id": int(self.datum_ids[t]), "label": self.labels[t].item(),
                   "winner": int(self.winners[t]), "alpha": float(self.alphas[t])}
            for i in range(self.k):
                row[f"pred_{i}"] = self.predictions[t, i].item()
            for i in range(self.k):
                row[f"q_{i}"] = float(self.qualities[t, i])
            out.append(row)
        return out


def _check(config: CompetitionConfig, source: PopulationSource) -> None:
    kind = config.rule.quality_kind
    if source.classification and kind != CLASSIFICATION:
        raise InvalidArgumentError("classification sources need the classification-indicator quality")
    if not source.classification and kind != NEGATIVE_LOSS:
        raise InvalidArgumentError("regression sources need the negative-loss quality")
    if config.learner.kind == "nearest_neighbor" and config.seed_size == 0:
        raise InvalidArgumentError("nearest-neighbor learners need a nonempty seed set")


def run_competition(config: CompetitionConfig, source: PopulationSource,
                    rng: np.random.Generator | None = None) -> CompetitionTrace:
    """Play ``config.rounds`` rounds; honours ``config.baseline``."""
    _check(config, source)
    if rng is None:
        rng = make_rng(config.rng_seed)
    k, s, T = config.k, config.seed_size, config.rounds
    seed_rng, stream_rng, select_rng = (substream(rng, i) for i in (_SEED, _STREAM, _SELECT))
    fresh_rng = substream(rng, _FRESH) if config.baseline else None
    # nearest-neighbor learners never draw random numbers
    needs_rng = config.learner.kind != "nearest_neighbor"

    source.start(seed_rng)
    learners = []
    for i in range(k):
        try:
            seed = [source.sample(seed_rng) for _ in range(s)]
        except DataExhaustedError as exc:
            raise DataExhaustedError(f"population exhausted while drawing seed data for predictor {i}",
                                     round_index=0) from exc
        learner = config.learner.build(source.dim, source.num_classes,
                                       substream(rng, _LEARNER0 + i) if needs_rng else None)
        learner.fit_seed(np.array([d.x for d in seed]).reshape(s, source.dim), [d.y for d in seed])
        learners.append(learner)

    label_dtype = np.int64 if source.classification else float
    datum_ids = np.empty(T, dtype=np.int64)
    labels = np.empty(T, dtype=label_dtype)
    preds = np.empty((T, k), dtype=label_dtype)
    quals = np.empty((T, k))
    winners = np.empty(T, dtype=np.int64)
    alphas = np.empty(T)
    sizes = np.empty((T + 1, k), dtype=np.int64)
    sizes[0] = s

    rule = config.rule
    indicator = rule.quality_kind == CLASSIFICATION
    for t in range(T):
        try:
            d = source.sample(stream_rng)
        except DataExhaustedError as exc:
            raise DataExhaustedError(f"population exhausted at round {t + 1}", round_index=t + 1) from exc
        p = [lrn.predict(d.x) for lrn in learners]
        if indicator:
            q = [1.0 if pi == d.y else 0.0 for pi in p]
        else:
            q = [-(pi - d.y) ** 2 for pi in p]
        a = rule.draw_alpha(select_rng)
        w = select_winner(q, a, select_rng)
        if config.baseline:
            try:
                fresh = source.sample(fresh_rng)
            except DataExhaustedError as exc:
                raise DataExhaustedError(f"population exhausted at round {t + 1} (baseline draw)",
                                         round_index=t + 1) from exc
            learners[w].observe(fresh.x, fresh.y)
        else:
            learners[w].observe(d.x, d.y)
        datum_ids[t], labels[t], winners[t], alphas[t] = d.id, d.y, w, a
        preds[t] = p
        quals[t] = q
        sizes[t + 1] = sizes[t]
        sizes[t + 1, w] += 1

    return CompetitionTrace(config, datum_ids, labels, preds, quals, winners, alphas, sizes,
                            learners, classification=source.classification)


def run_baseline(config: CompetitionConfig, source: PopulationSource,
                 rng: np.random.Generator | None = None) -> CompetitionTrace:
    """Same selection dynamics, but winners train on independent draws."""
    if not config.baseline:
        config = CompetitionConfig(config.k, config.seed_size, config.rounds, config.rule, config.learner,
                                   config.rng_seed, True, config.test_fraction)
    return run_competition(config, source, rng)


def alpha_label(alpha: float) -> str:
    return "inf" if math.isinf(alpha) else repr(float(alpha))
