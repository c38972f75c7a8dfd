import math

import numpy as np
import pytest

from competesim.distributions import EmpiricalSource, GaussianMixtureSource, Thm41Source, Thm42Source, Thm43iiSource
from competesim.engine import CompetitionConfig, alpha_label, make_rng, run_baseline, run_competition, substream
from competesim.errors import DataExhaustedError, InvalidArgumentError
from competesim.learners import LearnerSpec
from competesim.selection import NEGATIVE_LOSS, SelectionRule

NN = LearnerSpec("nearest_neighbor")
OLS = LearnerSpec("ols")


def mixture_config(k=3, alpha=2.0, rounds=60, **kw):
    return CompetitionConfig(k, 2, rounds, SelectionRule(alpha=alpha), NN, **kw)


def regression_config(k=2, alpha=math.inf, rounds=50, **kw):
    return CompetitionConfig(k, 1, rounds, SelectionRule(alpha=alpha, quality_kind=NEGATIVE_LOSS), OLS, **kw)


class TestRng:
    def test_keys_give_distinct_streams(self):
        assert make_rng(1, 0).random() != make_rng(1, 1).random()

    def test_substream_is_stable(self):
        assert substream(make_rng(4), 2).random() == substream(make_rng(4), 2).random()


class TestCompetition:
    def test_monopolist_gets_everything(self):
        tr = run_competition(mixture_config(k=1, rounds=40), GaussianMixtureSource(3), make_rng(0))
        assert (tr.winners == 0).all()
        assert tr.learners[0].size == 2 + 40
        assert tr.sizes[-1, 0] == 42

    def test_data_conservation_and_monotone_sizes(self):
        tr = run_competition(mixture_config(k=4), GaussianMixtureSource(3), make_rng(1))
        np.testing.assert_array_equal(tr.sizes.sum(axis=1), 4 * 2 + np.arange(61))
        steps = np.diff(tr.sizes, axis=0)
        assert (steps >= 0).all() and (steps.sum(axis=1) == 1).all()
        np.testing.assert_array_equal(steps.argmax(axis=1), tr.winners)
        assert [lrn.size for lrn in tr.learners] == list(tr.sizes[-1])

    def test_winner_stores_the_user_datum(self):
        tr = run_competition(regression_config(), Thm43iiSource(0.3), make_rng(2))
        for t in (0, 10, 49):
            w = tr.winners[t]
            assert tr.labels[t] in tr.learners[w].y

    def test_deterministic(self):
        a = run_competition(mixture_config(), GaussianMixtureSource(3), make_rng(3))
        b = run_competition(mixture_config(), GaussianMixtureSource(3), make_rng(3))
        for field in ("datum_ids", "labels", "predictions", "winners", "sizes"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field))

    def test_qualities_are_indicators(self):
        tr = run_competition(mixture_config(), GaussianMixtureSource(3), make_rng(4))
        np.testing.assert_array_equal(tr.qualities, (tr.predictions == tr.labels[:, None]).astype(float))

    def test_per_user_alpha_is_logged(self):
        cfg = CompetitionConfig(2, 2, 30, SelectionRule(per_user_alpha=True), NN)
        tr = run_competition(cfg, GaussianMixtureSource(3), make_rng(5))
        assert (tr.alphas >= 0).all() and (tr.alphas > 0).any()

    def test_rows_have_one_record_per_round(self):
        tr = run_competition(mixture_config(k=2, rounds=5), GaussianMixtureSource(3), make_rng(6))
        rows = tr.rows()
        assert [r["t"] for r in rows] == [1, 2, 3, 4, 5]
        assert {"pred_0", "pred_1", "q_0", "q_1", "winner"} <= set(rows[0])

    def test_seed_lacking_label_one(self):
        src = Thm41Source(2)
        cfg = CompetitionConfig(1, 2, 1, SelectionRule(alpha=math.inf), NN)
        n = 4000
        lacks = sum(1 not in run_competition(cfg, src, make_rng(8, i)).learners[0].y[:2] for i in range(n))
        assert abs(lacks / n - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


class TestBaseline:
    def test_alpha_zero_matches_competition_sizes(self):
        comp = run_competition(mixture_config(alpha=0.0), GaussianMixtureSource(3), make_rng(9))
        base = run_baseline(mixture_config(alpha=0.0), GaussianMixtureSource(3), make_rng(9))
        np.testing.assert_array_equal(comp.sizes, base.sizes)

    def test_winner_trains_on_fresh_draw(self):
        tr = run_baseline(regression_config(), Thm43iiSource(0.3), make_rng(10))
        stored = np.concatenate([lrn.y for lrn in tr.learners])
        assert not np.isin(tr.labels, stored).any()

    def test_monopolist_is_iid_mean(self):
        tr = run_baseline(regression_config(k=1), Thm43iiSource(0.3), make_rng(11))
        lrn = tr.learners[0]
        assert lrn.size == 51
        assert lrn.predict([1.0]) == pytest.approx(lrn.y.mean(), abs=1e-12)


class TestErrors:
    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            CompetitionConfig(0, 1, 1)
        with pytest.raises(InvalidArgumentError):
            CompetitionConfig(1, -1, 1)
        with pytest.raises(InvalidArgumentError):
            CompetitionConfig(1, 1, 0)

    def test_quality_kind_must_match_task(self):
        with pytest.raises(InvalidArgumentError):
            run_competition(mixture_config(), Thm43iiSource(0.3), make_rng(0))
        with pytest.raises(InvalidArgumentError):
            run_competition(regression_config(), Thm42Source(0.2), make_rng(0))

    def test_nearest_neighbor_needs_seed(self):
        cfg = CompetitionConfig(2, 0, 5, SelectionRule(), NN)
        with pytest.raises(InvalidArgumentError):
            run_competition(cfg, GaussianMixtureSource(3), make_rng(0))

    def test_exhaustion_names_round(self):
        src = EmpiricalSource(np.eye(3)[np.arange(10) % 3], np.arange(10) % 3, 3)
        cfg = CompetitionConfig(2, 2, 20, SelectionRule(), NN)
        with pytest.raises(DataExhaustedError) as err:
            run_competition(cfg, src, make_rng(0))
        assert err.value.round_index == 7
        assert "round 7" in str(err.value)


def test_alpha_label():
    assert alpha_label(math.inf) == "inf"
    assert alpha_label(2.0) != "inf"
