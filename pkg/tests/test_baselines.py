import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from overbound.baselines import (InapplicableBoundError, InfeasibleBoundError, paired_overbound,
                                 quantile_overbound, two_step_overbound)
from overbound.bounds import Side
from overbound.distributions import (EmpiricalSample, GaussianMixture, mixture_type,
                                     sample_mixture)
from overbound.loss import QuantileGrid
from overbound.metrics import verify_overbound, wasserstein_tail
from overbound.stdnorm import std_normal_quantile

N01 = GaussianMixture((1.0,), (0.0,), (1.0,))
GRID = QuantileGrid.uniform()
TYPE1 = mixture_type("type1")


def feasible(q, lv, eps, mu, sigma):
    """Grid constraint in the left frame: mu + z sigma <= q at every level."""
    z = std_normal_quantile(lv / (1 + eps))
    return bool(np.all(mu + z * sigma <= q + 1e-12 * (1 + np.abs(q))))


class TestPaired:
    def test_standard_normal_bounds_itself(self):
        left, right = paired_overbound(N01, 0.0, GRID)
        # the scan starts at the mean in steps of 0.001 of the grid quantile range;
        # mu = 0 itself may be lost to quantile roundoff, so allow one step
        step = 1e-3 * 2 * -std_normal_quantile(GRID.levels[0])
        assert abs(left.mu) <= step * (1 + 1e-9) and abs(right.mu) <= step * (1 + 1e-9)
        np.testing.assert_allclose([left.sigma, right.sigma], [1.0, 1.0], atol=2 * step)

    @pytest.mark.parametrize("data", [TYPE1, sample_mixture(TYPE1, 50000, 3)], ids=["analytic", "empirical"])
    def test_type1_conservative(self, data):
        left, right = paired_overbound(data, 0.0025, GRID)
        assert left.side is Side.LEFT and right.side is Side.RIGHT
        assert left.sigma > 0 and right.sigma > 0
        assert verify_overbound(data, left, GRID).passed
        assert verify_overbound(data, right, GRID).passed

    def test_two_point_sample_never_nonpositive(self):
        s = EmpiricalSample([0.0] * 60 + [1.0] * 60)
        try:
            left, right = paired_overbound(s, 0.0025, GRID)
        except InfeasibleBoundError:
            return
        assert left.sigma > 0 and right.sigma > 0

    def test_constant_sample_infeasible(self):
        with pytest.raises(InfeasibleBoundError):
            paired_overbound(EmpiricalSample([2.0] * 200), 0.0025, GRID)

    def test_sample_smaller_than_grid(self):
        with pytest.raises(ValueError):
            paired_overbound(EmpiricalSample(np.arange(10.0)), 0.0025, GRID)

    @given(st.floats(-8, 2), st.floats(0.5, 10), st.floats(0, 0.01), st.floats(0, 0.05))
    @settings(max_examples=200, deadline=None)
    def test_relaxation_monotone(self, mu, sigma, eps1, d_eps):
        lv = GRID.levels
        q = TYPE1.quantile(lv)
        if feasible(q, lv, eps1, mu, sigma):
            assert feasible(q, lv, eps1 + d_eps, mu, sigma)


class TestTwoStep:
    def test_standard_normal_near_identity(self):
        left, right = two_step_overbound(N01, 0.0025, GRID)
        for b in (left, right):
            assert abs(b.mu) < 0.02 and abs(b.sigma - 1) < 0.01
        np.testing.assert_allclose(left.mu, -right.mu, atol=1e-12)

    @pytest.mark.parametrize("data", [TYPE1, sample_mixture(TYPE1, 50000, 3)], ids=["analytic", "empirical"])
    def test_type1_conservative(self, data):
        left, right = two_step_overbound(data, 0.0025, GRID)
        assert verify_overbound(data, left, GRID).passed
        assert verify_overbound(data, right, GRID).passed

    def test_type1_looser_than_paired(self):
        pl, _ = paired_overbound(TYPE1, 0.0025, GRID)
        tl, _ = two_step_overbound(TYPE1, 0.0025, GRID)
        assert wasserstein_tail(TYPE1, tl, GRID) > wasserstein_tail(TYPE1, pl, GRID)

    def test_binding_constraint_is_tight(self):
        left, _ = two_step_overbound(TYPE1, 0.0025, GRID)
        margins = verify_overbound(TYPE1, left, GRID).margins
        np.testing.assert_allclose(margins.min(), 0.0, atol=1e-12)


class TestQuantileOB:
    def test_standard_normal(self):
        left, right = quantile_overbound(sample_mixture(N01, 200000, 1), 0.99)
        np.testing.assert_allclose([left.sigma, right.sigma], [1.0, 1.0], atol=0.02)
        assert left.mu == 0.0 and right.mu == 0.0

    def test_biased_truth_inflates(self):
        _, right = quantile_overbound(GaussianMixture((1.0,), (2.0,), (1.0,)), 0.99)
        np.testing.assert_allclose(right.sigma, (2 + 2.326347874040841) / 2.326347874040841, rtol=1e-10)
        np.testing.assert_allclose(right.sigma, 1.8597, atol=1e-4)

    def test_wrong_side_inapplicable(self):
        with pytest.raises(InapplicableBoundError):
            quantile_overbound(GaussianMixture((1.0,), (5.0,), (1.0,)), 0.99)

    def test_bad_level(self):
        with pytest.raises(ValueError):
            quantile_overbound(N01, 0.4)

    def test_type1_violates(self):
        left, right = quantile_overbound(TYPE1, 0.99)
        reports = [verify_overbound(TYPE1, left, GRID), verify_overbound(TYPE1, right, GRID)]
        assert not all(r.passed for r in reports)

    @given(st.floats(0.01, 100.0))
    @settings(max_examples=50, deadline=None)
    def test_scale_equivariant(self, c):
        values = sample_mixture(TYPE1, 2000, 4).values
        l1, r1 = quantile_overbound(EmpiricalSample(values), 0.99)
        l2, r2 = quantile_overbound(EmpiricalSample(c * values), 0.99)
        np.testing.assert_allclose([l2.sigma, r2.sigma], [c * l1.sigma, c * r1.sigma], rtol=1e-12)
