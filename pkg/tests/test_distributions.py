import math

import numpy as np
import pytest

from competesim.distributions import (EmpiricalSource, GaussianMixtureSource, Thm41Source, Thm42Source,
                                      Thm43iiSource, Thm43iSource, make_preference_matrix, make_source)
from competesim.engine import make_rng
from competesim.errors import DataExhaustedError, InvalidArgumentError

N = 40_000


def _draws(src, seed=0, n=N):
    rng = make_rng(seed)
    pairs = [src.sample(rng) for _ in range(n)]
    return np.array([float(d.x[0]) for d in pairs]), np.array([float(d.y) for d in pairs])


def _within(sample, mean, var):
    return abs(sample.mean() - mean) <= 4 * math.sqrt(var / sample.size)


class TestToySources:
    def test_thm41_label_equals_feature(self):
        x, y = _draws(Thm41Source(4))
        np.testing.assert_array_equal(x, y)
        assert _within(y, 0.25, 0.25 * 0.75)

    def test_thm41_single_seed_is_all_ones(self):
        x, y = _draws(Thm41Source(1), n=100)
        assert (y == 1).all() and (x == 1).all()

    def test_thm42_constant_feature(self):
        x, y = _draws(Thm42Source(0.2))
        assert (x == 0).all()
        assert _within(y, 0.8, 0.16)

    def test_thm43i_two_point_label(self):
        x, y = _draws(Thm43iSource(2.0))
        assert (x == 1.0).all()
        assert set(np.unique(y)) == {0.0, 2.0}
        assert _within(y, 1.0, 1.0)

    def test_thm43ii_uniform(self):
        _, y = _draws(Thm43iiSource(0.3))
        assert y.min() >= 0.7 and y.max() <= 1.3
        assert _within(y, 1.0, 0.09 / 3)
        assert abs(y.var() - 0.03) < 0.002

    def test_parameter_validation(self):
        for bad in (lambda: Thm41Source(0), lambda: Thm42Source(0.5), lambda: Thm43iSource(0.0),
                    lambda: Thm43iiSource(-1.0), lambda: GaussianMixtureSource(1),
                    lambda: make_source("nope")):
            with pytest.raises(InvalidArgumentError):
                bad()

    def test_ids_count_up(self):
        src = Thm42Source(0.1)
        rng = make_rng(0)
        assert [src.sample(rng).id for _ in range(3)] == [0, 1, 2]
        src.start(rng)
        assert src.sample(rng).id == 0


class TestGaussianMixture:
    def test_balanced_test_set(self):
        X, y = GaussianMixtureSource(3, 5, 2.0).test_set(30, make_rng(0))
        assert X.shape == (30, 5)
        np.testing.assert_array_equal(np.bincount(y), [10, 10, 10])

    def test_class_means(self):
        src = GaussianMixtureSource(2, 3, separation=3.0, sigma=0.5)
        X, y = src.test_set(4000, make_rng(1))
        np.testing.assert_allclose(X[y == 1].mean(axis=0), [0, 3, 0], atol=0.06)


class TestEmpiricalSource:
    def test_each_row_once_then_exhausted(self):
        src = EmpiricalSource(np.arange(10.0)[:, None], np.arange(10) % 2, 2)
        src.start(make_rng(0))
        ids = [src.sample().id for _ in range(10)]
        assert sorted(ids) == list(range(10))
        with pytest.raises(DataExhaustedError):
            src.sample()


class TestPreferenceMatrix:
    def test_scaled_onto_unit_interval(self):
        P = make_preference_matrix(8, 16, 3, make_rng(0))
        assert P.shape == (8, 16)
        assert P.M.min() == 0.0 and P.M.max() == 1.0

    def test_rank_at_most_rank_plus_one(self):
        for seed in range(5):
            P = make_preference_matrix(10, 12, 2, make_rng(seed))
            assert np.linalg.matrix_rank(P.M, tol=1e-9) <= 3

    def test_deterministic(self):
        a = make_preference_matrix(4, 5, 2, make_rng(3)).M
        b = make_preference_matrix(4, 5, 2, make_rng(3)).M
        np.testing.assert_array_equal(a, b)

    def test_degenerate_shape(self):
        with pytest.raises(InvalidArgumentError):
            make_preference_matrix(1, 1, 1, make_rng(0))
