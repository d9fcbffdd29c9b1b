import math

import numpy as np
import pytest

from wrckit.core import (Metric, PhiFunction, as_instance, distance, phi_eval,
                         sample_gaussian_in_ball, sample_uniform_ball)
from wrckit.errors import (DimensionMismatchError, InvalidRadiusError,
                           NegativeDistanceError, RejectionBudgetError)
from wrckit.rng import RngHandle


class TestDistance:
    def test_identity(self):
        m = Metric.euclidean()
        assert distance(m, [0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_single_coordinate_offset(self):
        m = Metric.euclidean()
        assert distance(m, [0.2, 0.3], [0.3, 0.3]) == pytest.approx(0.1)

    def test_l1_sum_of_gaps(self):
        m = Metric.l1(2)
        assert distance(m, [0.1, 0.1], [0.4, 0.5]) == pytest.approx(0.7)

    def test_weighted_l2(self):
        m = Metric.weighted_l2([4.0, 1.0])
        assert distance(m, [0.0, 0.0], [0.5, 0.0]) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            distance(Metric.euclidean(), [0.1, 0.2], [0.1, 0.2, 0.3])
        with pytest.raises(DimensionMismatchError):
            distance(Metric.weighted_l2([1.0, 2.0]), [0.1], [0.2])

    def test_symmetry_and_nonnegativity(self):
        gen = RngHandle(11).generator()
        for m in (Metric.euclidean(), Metric.l1(4), Metric.weighted_l2(
                [0.5, 1.0, 2.0, 4.0])):
            X = gen.random((200, 4))
            Y = gen.random((200, 4))
            for x, y in zip(X, Y):
                dxy = distance(m, x, y)
                assert dxy >= 0.0
                assert dxy == pytest.approx(distance(m, y, x), abs=0.0)


@pytest.mark.parametrize("metric", [
    Metric.euclidean(), Metric.l1(3), Metric.weighted_l2([0.3, 1.0, 5.0])])
def test_triangle_inequality_random_triples(metric):
    gen = RngHandle(5).generator()
    X, Y, Z = (gen.random((10_000, 3)) for _ in range(3))
    for x, y, z in zip(X, Y, Z):
        assert distance(metric, x, z) <= \
            distance(metric, x, y) + distance(metric, y, z) + 1e-12


@pytest.mark.parametrize("metric", [
    Metric.euclidean(5), Metric.l1(5), Metric.weighted_l2(
        [0.2, 0.7, 1.0, 3.0, 9.0])])
def test_metric_equivalence_constants(metric):
    # C_L * d <= d_E <= C_U * d on 1e4 random pairs
    euclid = Metric.euclidean()
    gen = RngHandle(17).generator()
    X = gen.random((10_000, 5))
    Y = gen.random((10_000, 5))
    for x, y in zip(X, Y):
        d = distance(metric, x, y)
        de = distance(euclid, x, y)
        assert metric.c_lower * d <= de * (1.0 + 1e-12)
        assert de <= metric.c_upper * d * (1.0 + 1e-12)


class TestPhi:
    def test_inverse_shifted_at_zero(self):
        p = PhiFunction.inverse_shifted(1e-6)
        assert phi_eval(p, 0.0) == pytest.approx(1e6)

    def test_inverse_shifted_value(self):
        p = PhiFunction.inverse_shifted(1e-6)
        assert phi_eval(p, 0.1) == pytest.approx(1.0 / 0.100001)

    def test_exponential_decay_at_zero(self):
        p = PhiFunction.exponential_decay(rate=1.0)
        assert phi_eval(p, 0.0) == 1.0

    def test_negative_distance_rejected(self):
        with pytest.raises(NegativeDistanceError):
            phi_eval(PhiFunction.inverse_shifted(), -0.1)

    @pytest.mark.parametrize("p", [PhiFunction.inverse_shifted(1e-6),
                                   PhiFunction.exponential_decay(2.0)])
    def test_strictly_decreasing_on_sorted_grids(self, p):
        gen = RngHandle(23).generator()
        for _ in range(1000):
            grid = np.sort(gen.random(8) * 3.0)
            grid = np.unique(grid)
            vals = p.eval_many(grid)
            assert np.all(np.diff(vals) < 0.0)
            assert np.all(vals > 0.0)


class TestUniformBall:
    def test_containment(self):
        pts = sample_uniform_ball([0.5, 0.5], 0.1, 3, RngHandle(42))
        assert pts.shape == (3, 2)
        assert np.all(np.linalg.norm(pts - [0.5, 0.5], axis=1) <= 0.1)
        assert np.all((pts >= 0.0) & (pts <= 1.0))

    def test_law_of_large_numbers_mean(self):
        # coordinate sd for uniform in a 2-ball of radius r is r/2, so the
        # mean of 1e4 draws sits within 3 * r/2/100 = 0.0015 << 0.01
        pts = sample_uniform_ball([0.5, 0.5], 0.1, 10_000, RngHandle(1))
        assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01)

    def test_corner_clipping(self):
        pts = sample_uniform_ball([0.0, 0.0], 0.1, 500, RngHandle(3))
        assert np.all(pts >= 0.0)
        assert np.all(np.linalg.norm(pts, axis=1) <= 0.1)

    def test_invalid_radius(self):
        with pytest.raises(InvalidRadiusError):
            sample_uniform_ball([0.5, 0.5], 0.0, 3, RngHandle(0))

    def test_reproducible(self):
        a = sample_uniform_ball([0.4, 0.6], 0.2, 64, RngHandle(9, 4))
        b = sample_uniform_ball([0.4, 0.6], 0.2, 64, RngHandle(9, 4))
        assert np.array_equal(a, b)


class TestGaussianInBall:
    def test_degenerate_sigma_returns_mean(self):
        x = sample_gaussian_in_ball([0.5, 0.5], [0.5, 0.5], 1e-12, 0.1,
                                    100, RngHandle(5))
        assert np.all(np.abs(x - 0.5) < 1e-6)

    def test_acceptance_predicate(self):
        x = sample_gaussian_in_ball([0.5, 0.5], [0.5, 0.5], 0.1 / 3.0, 0.1,
                                    10_000, RngHandle(7))
        assert np.linalg.norm(x - [0.5, 0.5]) <= 0.1
        assert np.all((x >= 0.0) & (x <= 1.0))

    def test_budget_exhausted_when_sigma_dwarfs_radius(self):
        # acceptance probability per draw is P(||N(0, sigma^2 I_2)|| <= r)
        # = 1 - exp(-r^2 / (2 sigma^2)) = 1 - exp(-0.005) ~ 0.5%, so 8
        # consecutive rejections happen with probability ~0.96
        with pytest.raises(RejectionBudgetError):
            sample_gaussian_in_ball([0.5, 0.5], [0.5, 0.5], 1e-4, 1e-5,
                                    8, RngHandle(12))

    def test_reproducible(self):
        a = sample_gaussian_in_ball([0.5, 0.5], [0.52, 0.5], 0.03, 0.1,
                                    1000, RngHandle(8, 2))
        b = sample_gaussian_in_ball([0.5, 0.5], [0.52, 0.5], 0.03, 0.1,
                                    1000, RngHandle(8, 2))
        assert np.array_equal(a, b)


class TestInstance:
    def test_validates_range(self):
        with pytest.raises(ValueError):
            as_instance([0.5, 1.4])
        with pytest.raises(ValueError):
            as_instance([float("nan"), 0.2])

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatchError):
            as_instance([0.1, 0.2], k=3)

    def test_passthrough(self):
        x = as_instance([0.25, 0.75])
        assert x.dtype == np.float64
        assert x.tolist() == [0.25, 0.75]


def test_rng_streams_are_independent_and_stable():
    a = RngHandle(100, 1).generator().random(5)
    b = RngHandle(100, 2).generator().random(5)
    a2 = RngHandle(100, 1).generator().random(5)
    assert np.array_equal(a, a2)
    assert not np.array_equal(a, b)
    child = RngHandle(100).child("x", 3)
    assert child.seed == 100
    assert child == RngHandle(100).child("x", 3)
    assert child != RngHandle(100).child("x", 4)
