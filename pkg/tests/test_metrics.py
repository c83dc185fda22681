import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from overbound.bounds import GaussianBound, Side
from overbound.distributions import EmpiricalSample, GaussianMixture, mixture_type
from overbound.loss import QuantileGrid
from overbound.metrics import (Truth, as_truth, bonferroni_pl, certify_continuum, format_range,
                               overbound_factor, protection_level, quantile_gap, verify_overbound,
                               wasserstein_tail)

N01 = GaussianMixture((1.0,), (0.0,), (1.0,))
GRID = QuantileGrid.uniform()
CASE2_TABLE = GaussianBound(-2.539, 2.760, Side.LEFT, 0.0025)


def left(mu, sigma, eps=0.0):
    return GaussianBound(mu, sigma, Side.LEFT, eps)


class TestProtectionLevel:
    def test_published_case2_values(self):
        assert abs(protection_level(CASE2_TABLE, 1e-3, 1) - (-11.069)) <= 0.005
        assert abs(protection_level(CASE2_TABLE, 1e-3, 10) - (-5.242)) <= 0.005

    def test_standard_normal(self):
        assert abs(protection_level(left(0, 1), 1e-3, 1) - (-3.09023)) <= 1e-4

    def test_against_scipy(self):
        b = GaussianBound(1.5, 2.0, Side.RIGHT, 0.0025)
        want = stats.norm.isf(1e-3 / 1.0025 ** 4) * 2.0 / 2.0 + 1.5
        np.testing.assert_allclose(protection_level(b, 1e-3, 4), want, rtol=1e-12)

    @pytest.mark.parametrize("ir,n", [(0.0, 1), (0.5, 1), (1e-3, 0)])
    def test_rejects(self, ir, n):
        with pytest.raises(ValueError):
            protection_level(left(0, 1), ir, n)

    @given(st.floats(-5, 5), st.floats(0.1, 5), st.floats(0.01, 2))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_sigma(self, mu, sigma, d):
        assert protection_level(left(mu, sigma + d)) < protection_level(left(mu, sigma))
        r1 = GaussianBound(mu, sigma, Side.RIGHT, 0.0)
        r2 = GaussianBound(mu, sigma + d, Side.RIGHT, 0.0)
        assert protection_level(r2) > protection_level(r1)

    def test_shrinks_with_n(self):
        pls = [abs(protection_level(left(0, 1), 1e-3, n)) for n in range(1, 30)]
        assert all(a > b for a, b in zip(pls, pls[1:]))


class TestBonferroni:
    def test_values(self):
        assert abs(bonferroni_pl(left(0, 1), 1e-3, 10) - (-3.71902)) <= 1e-4
        assert bonferroni_pl(left(0.3, 2), 1e-3, 1) == protection_level(left(0.3, 2), 1e-3, 1)

    def test_against_convolution(self):
        b = bonferroni_pl(left(0, 1), 1e-3, 10)
        c = protection_level(left(0, 1, 0.0025), 1e-3, 10)
        np.testing.assert_allclose([b, c], [-3.719, -0.980], atol=1e-3)

    def test_sweep_dominance(self):
        for n, ir, sigma, eps in itertools.product((2, 5, 10), (1e-2, 1e-3, 1e-4), (0.5, 1, 2), (0, 0.0025)):
            for side in Side:
                b = GaussianBound(0.7, sigma, side, eps)
                assert abs(bonferroni_pl(b, ir, n) - 0.7) >= abs(protection_level(b, ir, n) - 0.7)

    @given(st.integers(2, 50), st.floats(1e-6, 0.49), st.floats(0, 0.01))
    @settings(max_examples=200, deadline=None)
    def test_dominance_property(self, n, ir, eps):
        b = left(0.0, 1.0, eps)
        assert abs(bonferroni_pl(b, ir, n)) >= abs(protection_level(b, ir, n))


class TestWasserstein:
    def test_self_is_zero(self):
        np.testing.assert_allclose(wasserstein_tail(N01, left(0, 1), GRID), 0.0, atol=1e-9)

    def test_shift_adds_n_l_delta(self):
        truth = GaussianMixture((1.0,), (0.0,), (1.0,))
        base = wasserstein_tail(truth, left(-1.0, 1.0), GRID)
        np.testing.assert_allclose(base, 50 * 1.0, rtol=1e-9)
        np.testing.assert_allclose(wasserstein_tail(truth, left(-1.25, 1.0), GRID) - base, 50 * 0.25, rtol=1e-9)

    def test_brute_sum(self):
        t1 = mixture_type("type1")
        b = left(-3.0, 4.0, 0.0025)
        lv = GRID.levels[GRID.levels < 0.5]
        want = sum(abs(t1.quantile(p) - (-3.0 + stats.norm.ppf(p / 1.0025) * 4.0)) for p in lv)
        np.testing.assert_allclose(wasserstein_tail(t1, b, GRID), want, rtol=1e-10)

    def test_right_mirrors(self):
        t1 = mixture_type("type1")
        r = GaussianBound(2.0, 4.0, Side.RIGHT, 0.0025)
        np.testing.assert_allclose(wasserstein_tail(t1, r, GRID),
                                   wasserstein_tail(t1.negate(), left(-2.0, 4.0, 0.0025), GRID), rtol=1e-12)


class TestOverboundFactor:
    def test_self_zero(self):
        np.testing.assert_allclose(overbound_factor(N01, left(0, 1), GRID), 0.0, atol=1e-10)

    def test_excess_mass(self):
        np.testing.assert_allclose(overbound_factor(N01, left(0, 1, 0.0025), GRID), 0.0025, rtol=1e-9)

    def test_nonnegative_when_conservative(self):
        t1 = mixture_type("type1")
        b = left(-3.0, 6.0, 0.0025)
        assert verify_overbound(t1, b, GRID).passed
        assert overbound_factor(t1, b, GRID) >= 0


class TestVerify:
    def test_self_with_excess_mass(self):
        assert verify_overbound(N01, left(0, 1, 0.0025), GRID).passed

    def test_self_zero_margin(self):
        rep = verify_overbound(N01, left(0, 1), GRID)
        assert rep.passed and rep.violating_range is None
        np.testing.assert_allclose(rep.margins, 0.0, atol=1e-12)

    def test_gross_violation(self):
        rep = verify_overbound(N01, left(10.0, 1.0), GRID)
        assert not rep.passed
        assert rep.violating_range == (GRID.levels[0], GRID.levels[-1])
        assert format_range(rep.violating_range) == "0.01-0.99"

    def test_report_invariant(self):
        for b in (left(0, 1), left(0.2, 1), left(-0.2, 0.8)):
            rep = verify_overbound(N01, b, GRID)
            assert rep.passed == (rep.violating_range is None) == bool(np.all(rep.margins >= -1e-12 * rep.levels))

    def test_right_side_frame(self):
        r = GaussianBound(-1.0, 1.0, Side.RIGHT, 0.0)
        rep = verify_overbound(N01, r, GRID)
        assert not rep.passed and rep.side is Side.RIGHT
        d = rep.to_dict()
        assert d["side"] == "right" and d["violating_range_label"] == "0.01-0.99"

    def test_format(self):
        assert format_range(None) == "yes"
        assert format_range((0.19, 0.84)) == "0.19-0.84"
        assert format_range((0.0, 0.5)) == "0-0.5"

    def test_empirical_truth(self):
        s = EmpiricalSample(np.random.default_rng(1).normal(size=5000))
        lower = QuantileGrid(GRID.levels[GRID.levels < 0.5])
        assert verify_overbound(s, left(-0.5, 1.3, 0.0025), lower).passed
        # a wider bound crosses the truth in the upper half
        assert not verify_overbound(s, left(-0.5, 1.3, 0.0025), GRID).passed


class TestCertification:
    def example(self):
        grid = QuantileGrid(np.linspace(0.01, 0.5, 49))
        return certify_continuum(N01, left(-0.5, 1.0), grid, tau_min=0.01), grid

    def test_constructed_example_values(self):
        rep, grid = self.example()
        np.testing.assert_allclose(rep.m_T, 0.5, rtol=1e-9)
        np.testing.assert_allclose(rep.h_T, 0.49 / 48, rtol=1e-12)
        # bound slope at tau_min, oracle from scipy
        np.testing.assert_allclose(rep.L_qbar, 1 / stats.norm.pdf(stats.norm.ppf(0.01)), rtol=1e-10)
        assert rep.certified == (rep.slack > 0)
        np.testing.assert_allclose(rep.slack, rep.m_T - (rep.L_q + rep.L_qbar) * rep.h_T, rtol=1e-12)

    def test_touching_bound_not_certified(self):
        rep = certify_continuum(N01, left(0.0, 1.0), QuantileGrid(np.linspace(0.01, 0.5, 49)))
        assert not rep.certified

    def test_halving_spacing_increases_slack(self):
        b = left(-3.0, 1.0)
        a = certify_continuum(N01, b, QuantileGrid(np.linspace(0.05, 0.5, 10)), tau_min=0.05)
        c = certify_continuum(N01, b, QuantileGrid(np.linspace(0.05, 0.5, 19)), tau_min=0.05)
        np.testing.assert_allclose(c.h_T, a.h_T / 2, rtol=1e-12)
        assert c.slack > a.slack

    def test_refined_grid_respects_certificate(self):
        b = left(-3.0, 1.0)
        grid = QuantileGrid(np.linspace(0.05, 0.5, 46))
        rep = certify_continuum(N01, b, grid, tau_min=0.05)
        assert rep.certified
        fine = np.linspace(0.05, 0.5, 45 * 100 + 1)
        assert np.all(quantile_gap(N01, b, fine) >= rep.m_T - (rep.L_q + rep.L_qbar) * rep.h_T)
        assert np.all(quantile_gap(N01, b, fine) > 0)

    def test_rejects_bad_tau_min(self):
        with pytest.raises(ValueError):
            certify_continuum(N01, left(-1, 1), QuantileGrid(np.array([0.1, 0.3])), tau_min=0.2)


class TestTruth:
    def test_callable_pair(self):
        t = as_truth((stats.norm.ppf, stats.norm.cdf))
        assert isinstance(t, Truth)
        np.testing.assert_allclose(t.negate().quantile(0.2), stats.norm.ppf(0.2), rtol=1e-12)

    def test_bound_as_truth(self):
        t = as_truth(left(1.0, 2.0))
        np.testing.assert_allclose(t.quantile(0.3), 1.0 + 2.0 * stats.norm.ppf(0.3), rtol=1e-12)

    def test_rejects(self):
        with pytest.raises(TypeError):
            as_truth(3.0)
