import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpsde.analysis import (
    contraction_constant,
    fit_slope,
    moment_monitor,
    ms_error,
    numerical_contraction_test,
)
from rpsde.integrator import ThetaScheme
from rpsde.models import build_additive_model, build_cubic_model, build_linear_model

BENCH = dict(lam=5 * math.pi, a=3.0, b=1.5, c=0.5, dcoef=0.1, pstar=21.0)


class TestContractionConstant:
    def test_boundary_example(self):
        # lam - L_f = 1, theta = 1, p* = 21, dt = 1: branches {1/3, 21/40, 0}
        consts = contraction_constant(2.0, 1.0, 1.0, 21.0, 1.0)
        assert consts.c_delta == pytest.approx(21.0 / 40.0, abs=1e-15)

    def test_third_branch_vanishes_at_theta_one(self):
        theta = 1.0
        assert (2 * theta - 1) / theta**2 == 1.0
        consts = contraction_constant(3.0, 0.1, theta, 4.0, 0.5)
        # with p* = 4, theta = 1: second branch = 1 - 2/6 = 2/3
        gap = 2 * (3.0 - 0.1) * 0.5
        assert consts.c_delta == pytest.approx(max(1 - gap / (1 + gap), 2.0 / 3.0, 0.0))

    def test_exact_rate(self):
        consts = contraction_constant(2.0, 0.5, 0.8, 21.0, 0.1)
        assert consts.exact_rate == pytest.approx(math.exp(2 * (0.5 - 2.0) * 0.1))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            contraction_constant(1.0, 2.0, 1.0, 21.0, 0.1)  # L_f >= lambda
        with pytest.raises(ValueError):
            contraction_constant(1.0, 0.5, 0.5, 21.0, 0.1)  # theta at boundary
        with pytest.raises(ValueError):
            contraction_constant(1.0, 0.5, 1.0, 2.0, 0.1)  # p* too small
        with pytest.raises(ValueError):
            contraction_constant(1.0, 0.5, 1.0, 21.0, 0.0)  # dt out of range

    def test_property_sweep(self):
        # c_delta in [0, 1) across the valid parameter domain
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            lam = rng.uniform(0.01, 50.0)
            l_f = lam * rng.uniform(1e-6, 0.999999)
            theta = rng.uniform(0.5 + 1e-9, 1.0)
            pstar = rng.uniform(2.0 + 1e-9, 100.0)
            dt = rng.uniform(1e-9, 1.0 - 1e-9)
            c = contraction_constant(lam, l_f, theta, pstar, dt).c_delta
            assert 0.0 <= c < 1.0

    # bounds keep (lam - l_f) * theta * dt above ~1e-14 so the first branch
    # stays representable below 1.0; at smaller gaps it rounds to exactly 1.0
    @given(
        lam=st.floats(0.01, 50.0),
        frac=st.floats(1e-6, 1.0 - 1e-6),
        theta=st.floats(0.5, 1.0, exclude_min=True),
        pstar=st.floats(2.0, 100.0, exclude_min=True),
        dt=st.floats(1e-6, 1.0, exclude_max=True),
    )
    @settings(max_examples=200, deadline=None)
    def test_property_hypothesis(self, lam, frac, theta, pstar, dt):
        c = contraction_constant(lam, lam * frac, theta, pstar, dt).c_delta
        assert 0.0 <= c < 1.0


class TestFitSlope:
    def test_exact_order_one(self):
        h = np.array([2.0**-i for i in range(3, 9)])
        slope, _ = fit_slope(h, 7.3 * h)
        assert slope == pytest.approx(1.0, abs=1e-12)

    def test_exact_order_half(self):
        h = np.array([2.0**-i for i in range(3, 9)])
        slope, _ = fit_slope(h, 0.2 * np.sqrt(h))
        assert slope == pytest.approx(0.5, abs=1e-12)

    def test_two_point_hand_solved(self):
        # e = 8 * dt^{1/2}: log2 e = 3 + 0.5 log2 dt, so slope 1/2, intercept 3
        slope, intercept = fit_slope(
            [2.0**-3, 2.0**-5], [8 * 2.0**-1.5, 8 * 2.0**-2.5]
        )
        assert slope == pytest.approx(0.5, abs=1e-12)
        assert intercept == pytest.approx(3.0, abs=1e-12)

    def test_degenerate_inputs(self):
        with pytest.raises(ValueError):
            fit_slope([0.5, 0.5], [1.0, 2.0])
        with pytest.raises(ValueError):
            fit_slope([0.5], [1.0])
        with pytest.raises(ValueError):
            fit_slope([0.5, -0.25], [1.0, 1.0])

    @given(
        order=st.floats(0.25, 2.0),
        scale=st.floats(0.01, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_power_law_property(self, order, scale):
        h = np.array([2.0**-i for i in range(2, 8)])
        slope, _ = fit_slope(h, scale * h**order)
        assert slope == pytest.approx(order, rel=1e-9)


class TestMsError:
    def test_self_comparison_is_zero(self):
        prob = build_linear_model(1.0, 0.3)
        rep = ms_error(prob, 1.0, [5], 5, 8, 0.0, 1.0, seed=0, xi=[1.0])
        assert rep.rms_errors[0] == 0.0

    def test_linear_oracle_order_one(self):
        prob = build_linear_model(1.0, 0.3)
        rep = ms_error(
            prob, 0.75, [6, 7, 8, 9, 10], 12, 200, 0.0, 2.0,
            seed=0, xi=[1.0], newton_tol=1e-9,
        )
        assert 0.9 <= rep.fitted_slope <= 1.1

    def test_ensemble_stability(self):
        prob = build_additive_model()
        small = ms_error(prob, 1.0, [5, 6, 7], 9, 100, 0.0, 1.0, seed=0, xi=[0.1])
        big = ms_error(prob, 1.0, [5, 6, 7], 9, 200, 0.0, 1.0, seed=0, xi=[0.1])
        for e1, e2, se in zip(small.rms_errors, big.rms_errors, small.stderrs):
            assert abs(e1 - e2) < 3 * max(se, 1e-300)

    def test_jobs_do_not_change_results(self):
        prob = build_additive_model()
        a = ms_error(prob, 1.0, [5, 6], 8, 40, 0.0, 1.0, seed=3, xi=[0.1], jobs=1)
        b = ms_error(prob, 1.0, [5, 6], 8, 40, 0.0, 1.0, seed=3, xi=[0.1], jobs=4)
        assert np.array_equal(a.rms_errors, b.rms_errors)

    def test_reference_must_be_finest(self):
        prob = build_additive_model()
        with pytest.raises(ValueError):
            ms_error(prob, 1.0, [5, 6], 4, 10, 0.0, 1.0, seed=0)


class TestMomentMonitor:
    def test_zero_noise_decay(self):
        prob = build_linear_model(1.0, 0.0)
        sch = ThetaScheme(theta=1.0, dt=0.25)
        series = moment_monitor(prob, sch, k=3, ensemble=4, seed=0, xi=[1.0])
        rho = 1.0 / (1.0 + 0.25)
        expected = np.array([rho ** (2 * j) for j in range(len(series.times))])
        assert series.second_moment == pytest.approx(expected, rel=1e-10)
        assert not series.growth_flag
        assert all(a >= b for a, b in zip(series.second_moment, series.second_moment[1:]))

    def test_additive_from_zero_bounded(self):
        prob = build_additive_model()
        sch = ThetaScheme(theta=1.0, dt=0.05)
        series = moment_monitor(prob, sch, k=5, ensemble=100, seed=1, xi=[0.0])
        assert not series.growth_flag
        # stationary scale sigma^2/(2 lambda) plus the deterministic periodic part
        assert series.second_moment.max() < 1e-2

    def test_cubic_bounded(self):
        prob = build_cubic_model(**BENCH)
        sch = ThetaScheme(theta=1.0, dt=0.1)
        series = moment_monitor(prob, sch, k=5, ensemble=500, seed=2)
        assert not series.growth_flag

    def test_ensemble_minimum(self):
        prob = build_additive_model()
        sch = ThetaScheme(theta=1.0, dt=0.1)
        with pytest.raises(ValueError):
            moment_monitor(prob, sch, k=1, ensemble=1, seed=0)


class TestNumericalContraction:
    def test_equal_initial_values_rejected(self):
        prob = build_cubic_model(**BENCH)
        sch = ThetaScheme(theta=1.0, dt=0.1)
        with pytest.raises(ValueError):
            numerical_contraction_test(prob, sch, [0.6], [0.6], 2, 10, seed=0)

    def test_deterministic_linear_series(self):
        lam, dt = 1.0, 0.25
        prob = build_linear_model(lam, 0.0)
        # tight Newton tolerance so the exact geometric decay is not frozen
        sch = ThetaScheme(theta=1.0, dt=dt, newton_tol=1e-12)
        test = numerical_contraction_test(
            prob, sch, [1.0], [-1.0], 13, 4, seed=0, floor=1e-9
        )
        rho = 1.0 / (1.0 + lam * dt)
        expected = 4.0 * rho ** (2 * test.steps.astype(float))
        assert test.gap_series == pytest.approx(expected, rel=1e-9)
        # rho^2 <= first c_delta branch, so the envelope dominates
        assert test.passed

    def test_cubic_benchmark_setup(self):
        prob = build_cubic_model(**BENCH)
        sch = ThetaScheme(theta=1.0, dt=0.1)
        test = numerical_contraction_test(prob, sch, [0.6], [-0.6], 15, 200, seed=5)
        assert test.passed
        assert test.gap_series[0] == pytest.approx(1.44)
        assert (test.gap_series.min() <= 1e-12)
