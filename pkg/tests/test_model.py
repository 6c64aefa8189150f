import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_aqm import (
    CriterionParams,
    FlowParams,
    NetworkSpec,
    ThresholdPolicy,
    apply_impulse,
    grow,
    reward_rate,
    segment_reward,
    time_to_reach,
)
from impulse_aqm.errors import AlphaOneError, DomainError, ParameterError, ValidationError
from impulse_aqm.model import reward_rate_max, segment_integrals, sup_abs_reward

gammas = st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0])
flows = st.builds(FlowParams, st.floats(0.05, 3.0), st.floats(0.1, 0.9), gammas)


def rk4(x0, dt, fp, steps=2000):
    f = lambda x: fp.a * x**fp.gamma
    h, x = dt / steps, x0
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + h * k1 / 2)
        k3 = f(x + h * k2 / 2)
        k4 = f(x + h * k3)
        x += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return x


class TestGrow:
    def test_linear(self):
        assert grow(1.0, 2.0, FlowParams(0.2, 0.5, 0.0)) == pytest.approx(1.4, rel=1e-15)

    def test_exponential(self):
        assert grow(1.0, 2.0, FlowParams(0.2, 0.5, 1.0)) == pytest.approx(math.exp(0.4), rel=1e-15)

    def test_intermediate_matches_rk4(self):
        fp = FlowParams(0.2, 0.5, 0.5)
        assert grow(1.0, 2.0, fp) == pytest.approx(1.44, rel=1e-14)
        assert rk4(1.0, 2.0, fp) == pytest.approx(1.44, rel=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 0.3, 0.75, 1.0])
    def test_against_rk4(self, gamma):
        fp = FlowParams(0.7, 0.5, gamma)
        assert grow(0.3, 1.7, fp) == pytest.approx(rk4(0.3, 1.7, fp), rel=1e-11)

    def test_errors(self):
        fp = FlowParams(0.2, 0.5)
        with pytest.raises(DomainError):
            grow(0.0, 1.0, fp)
        with pytest.raises(DomainError):
            grow(1.0, -1.0, fp)

    @settings(max_examples=60, deadline=None)
    @given(flows, st.floats(0.01, 5.0), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    def test_semigroup(self, fp, x0, s, t):
        assert grow(grow(x0, s, fp), t, fp) == pytest.approx(grow(x0, s + t, fp), rel=1e-10)


class TestTimeToReach:
    def test_examples(self):
        assert time_to_reach(0.5, 1.4, FlowParams(0.2, 0.5, 0.0)) == pytest.approx(4.5)
        assert time_to_reach(1.0, 1.0, FlowParams(0.3, 0.5, 0.5)) == 0.0
        assert time_to_reach(1.0, math.exp(0.4), FlowParams(0.2, 0.5, 1.0)) == pytest.approx(2.0, rel=1e-14)

    def test_backwards_rejected(self):
        with pytest.raises(DomainError):
            time_to_reach(2.0, 1.0, FlowParams(0.2, 0.5))

    @settings(max_examples=60, deadline=None)
    @given(flows, st.floats(0.01, 5.0), st.floats(0.0, 5.0))
    def test_round_trip(self, fp, x0, dt):
        assert time_to_reach(x0, grow(x0, dt, fp), fp) == pytest.approx(dt, rel=1e-9, abs=1e-12)


class TestImpulse:
    def test_examples(self):
        assert apply_impulse(1.0, 1, 0.5) == 0.5
        assert apply_impulse(1.0, 2, 0.5) == 0.25
        assert apply_impulse(0.7901, 1, 0.5) == pytest.approx(0.39505)

    def test_zero_count(self):
        with pytest.raises(DomainError):
            apply_impulse(1.0, 0, 0.5)

    @given(st.floats(0.01, 10), st.integers(1, 5), st.integers(1, 5), st.floats(0.1, 0.9))
    def test_composition(self, x, j, k, b):
        assert apply_impulse(apply_impulse(x, j, b), k, b) == pytest.approx(apply_impulse(x, j + k, b))


class TestThresholdPolicy:
    def test_counts(self):
        p = ThresholdPolicy(1.0, 0.5)
        assert p.count(0.999) == 0
        assert p.count(1.0) == 1
        assert p.count(1.999) == 1
        assert p.count(2.0) == 2
        assert p.count(4.0) == 3

    @given(st.floats(0.1, 3), st.floats(0.1, 0.9), st.floats(1e-3, 1e3))
    def test_lands_below_threshold(self, x_bar, b, x):
        p = ThresholdPolicy(x_bar, b)
        y = p.apply(x)
        if x < x_bar:
            assert y == x
        else:
            assert b * x_bar * (1 - 1e-12) <= y < x_bar


class TestReward:
    def test_examples(self):
        assert reward_rate(0.25, CriterionParams(0.5, 2.0)) == pytest.approx(0.5)
        assert reward_rate(1.0, CriterionParams(1.3, 2.0)) == pytest.approx(-16 / 3)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 1.5, 1.9])
    def test_stationary_point(self, alpha):
        cp = CriterionParams(alpha, 2.0)
        xs = 2.0 ** (-1 / alpha)
        assert reward_rate(xs, cp) == pytest.approx(alpha / (1 - alpha) * 2.0 ** ((alpha - 1) / alpha))
        assert reward_rate_max(cp) == pytest.approx(reward_rate(xs, cp))
        grid = np.geomspace(1e-3, 1e3, 500)
        assert max(reward_rate(float(x), cp) for x in grid) <= reward_rate_max(cp) + 1e-12

    def test_errors(self):
        with pytest.raises(DomainError):
            reward_rate(0.0, CriterionParams(0.5, 1.0))
        with pytest.raises(AlphaOneError):
            CriterionParams(1.0, 1.0)

    def test_sup_abs(self):
        grid = np.linspace(0.2, 3.0, 2001)
        brute = max(abs(reward_rate(float(x), CriterionParams(1.3, 2.0))) for x in grid)
        assert sup_abs_reward(0.2, 3.0, 1.3, 2.0) >= brute - 1e-12
        assert sup_abs_reward(0.0, 1.0, 1.3, 2.0) == math.inf


class TestSegmentReward:
    def test_empty(self):
        fp, cp = FlowParams(0.2, 0.5), CriterionParams(0.5, 2.0)
        assert segment_reward(0.3, 0.3, fp, cp) == 0.0

    def test_cycle_identity(self):
        fp, cp = FlowParams(0.2, 0.5, 0.0), CriterionParams(0.5, 2.0)
        x_bar, g = 0.33018723461803656, 0.49528085192705484
        tau = x_bar * (1 - fp.b) / fp.a
        F = lambda x: (x**1.5 / (0.5 * 1.5) - 2.0 * x**2 / 2) / fp.a
        assert segment_reward(fp.b * x_bar, x_bar, fp, cp) == pytest.approx(F(x_bar) - F(fp.b * x_bar), rel=1e-13)
        assert segment_reward(fp.b * x_bar, x_bar, fp, cp) == pytest.approx(tau * g, rel=1e-13)

    def test_discounted_matches_riemann(self):
        fp, cp = FlowParams(0.2, 0.5, 0.0), CriterionParams(1.3, 2.0, 1.0)
        val = segment_reward(0.39505, 0.7901, fp, cp, "discounted")
        tau = (0.7901 - 0.39505) / 0.2
        n = 200_000
        s = (np.arange(n) + 0.5) * tau / n
        x = 0.39505 + 0.2 * s
        riemann = np.sum(np.exp(-s) * (x**-0.3 / -0.3 - 2 * x)) * tau / n
        assert val < 0
        assert val == pytest.approx(riemann, rel=1e-9)

    def test_discounted_start_time_scales(self):
        fp, cp = FlowParams(0.2, 0.5, 0.0), CriterionParams(1.3, 2.0, 1.0)
        a = segment_reward(0.4, 0.8, fp, cp, "discounted", 0.0)
        b = segment_reward(0.4, 0.8, fp, cp, "discounted", 1.5)
        assert b == pytest.approx(math.exp(-1.5) * a, rel=1e-14)

    def test_discounted_needs_rho(self):
        with pytest.raises(ParameterError):
            segment_reward(0.4, 0.8, FlowParams(0.2, 0.5), CriterionParams(1.3, 2.0), "discounted")

    @settings(max_examples=50, deadline=None)
    @given(flows, st.floats(0.3, 1.5), st.floats(0.01, 1.0), st.floats(0.01, 1.0),
           st.sampled_from([0.3, 0.5, 1.5]))
    def test_additive(self, fp, x0, d1, d2, alpha):
        cp = CriterionParams(alpha, 1.0)
        x1, x2 = x0 + d1, x0 + d1 + d2
        whole = segment_reward(x0, x2, fp, cp)
        parts = segment_reward(x0, x1, fp, cp) + segment_reward(x1, x2, fp, cp)
        assert parts == pytest.approx(whole, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0])
    def test_closed_form_matches_time_quadrature(self, gamma):
        fp = FlowParams(0.6, 0.5, gamma)
        u, r = segment_integrals(0.3, 0.9, fp, 0.5)
        # rho -> 0 limit of the weighted quadrature path
        ud, rd = segment_integrals(0.3, 0.9, fp, 0.5, rho=1e-12)
        assert u == pytest.approx(ud, rel=1e-9)
        assert r == pytest.approx(rd, rel=1e-9)


class TestParams:
    def test_flow_validation(self):
        for args in [(0.0, 0.5, 0.0), (1.0, 1.0, 0.0), (1.0, 0.5, 1.5)]:
            with pytest.raises(ParameterError):
                FlowParams(*args)

    def test_network_validation(self):
        f = FlowParams(1.0, 0.5)
        with pytest.raises(ValidationError):
            NetworkSpec([[1, 0], [0, 0]], [1.0, 1.0], [f, f], 0.5)  # idle link
        with pytest.raises(ValidationError):
            NetworkSpec([[2]], [1.0], [f], 0.5)
        with pytest.raises(ValidationError):
            NetworkSpec([[1]], [-1.0], [f], 0.5)
        net = NetworkSpec([[1, 0, 1], [1, 1, 0]], [1.0, 2.0], [f, f, f], 0.5)
        assert (net.L, net.n) == (2, 3)
