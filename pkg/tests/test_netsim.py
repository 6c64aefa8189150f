import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impulse_aqm import (
    PAPER_PARAMS,
    CriterionParams,
    FixedPeriod,
    FlowParams,
    NetworkSpec,
    NoImpulse,
    Red,
    SimConfig,
    SimReport,
    Threshold,
    W_star,
    compare_policies,
    decouple_prices,
    simulate,
    threshold_avg,
    time_to_reach,
)
from impulse_aqm.errors import ValidationError
from impulse_aqm.netsim import policy_from_dict, policy_to_dict

FP = FlowParams(0.2, 0.5, 0.0)
CP = CriterionParams(0.5, 2.0)
X_BAR = threshold_avg(FP, CP).x_bar
G = threshold_avg(FP, CP).g


def single(fp=FP, alpha=0.5, lam=2.0):
    return NetworkSpec.single(fp, alpha, lam)


class TestPrices:
    def test_examples(self):
        f = FP
        net = NetworkSpec([[1, 0, 1], [1, 1, 0]], [1.0, 2.0], [f, f, f], 0.5)
        np.testing.assert_array_equal(decouple_prices(net), [3.0, 2.0, 1.0])
        net0 = NetworkSpec([[1, 0, 1], [1, 1, 0]], [0.0, 0.0], [f, f, f], 0.5)
        np.testing.assert_array_equal(decouple_prices(net0), [0.0, 0.0, 0.0])
        net1 = NetworkSpec([[1], [1], [1]], [0.5, 1.5, 2.0], [f], 0.5)
        assert decouple_prices(net1)[0] == pytest.approx(4.0)

    def test_malformed(self):
        with pytest.raises(ValidationError):
            NetworkSpec([[1, 0], [1]], [1.0, 1.0], [FP, FP], 0.5)
        with pytest.raises(ValidationError):
            NetworkSpec([[0.5]], [1.0], [FP], 0.5)


class TestThresholdRuns:
    def test_hundred_cycles(self):
        x0 = FP.b * X_BAR
        T = 100 * time_to_reach(x0, X_BAR, FP)
        rep = simulate(SimConfig(single(), Threshold(X_BAR), x0, T))
        assert rep.avg_reward == pytest.approx(G, rel=1e-9)
        assert rep.N_T == (100,)

    def test_confinement_and_counts(self):
        rep = simulate(SimConfig(single(), Threshold(X_BAR), 5.0, 30.0))
        first = rep.events[0]
        assert first.time == 0.0 and first.count >= 2
        assert FP.b * X_BAR * (1 - 1e-12) <= first.rate_after < X_BAR
        for e in rep.events[1:]:
            assert e.count == 1
            assert e.rate_before == pytest.approx(X_BAR)

    def test_impulse_count_bound(self):
        T = 50.0
        rep = simulate(SimConfig(single(), Threshold(X_BAR), 0.1, T))
        cycle = time_to_reach(FP.b * X_BAR, X_BAR, FP)
        assert rep.N_T[0] <= T / cycle + 1

    def test_events_sorted_across_flows(self):
        flows = [FlowParams(0.2, 0.5), FlowParams(0.5, 0.3), FlowParams(0.1, 0.8)]
        net = NetworkSpec([[1, 1, 1]], [1.0], flows, 0.5)
        rep = simulate(SimConfig(net, Threshold(0.4), (0.1, 0.2, 0.3), 20.0))
        keys = [(e.time, e.flow) for e in rep.events]
        assert keys == sorted(keys)

    def test_flow_permutation_invariance(self):
        flows = [FlowParams(0.2, 0.5), FlowParams(0.5, 0.3, 0.5), FlowParams(0.1, 0.8, 1.0)]
        R = np.array([[1, 0, 1], [1, 1, 0]])
        x0 = (0.1, 0.2, 0.3)
        pols = (Threshold(0.3), Threshold(0.4), Threshold(0.5))
        base = simulate(SimConfig(NetworkSpec(R, [1.0, 2.0], flows, 0.5), pols, x0, 15.0))
        perm = [2, 0, 1]
        net_p = NetworkSpec(R[:, perm], [1.0, 2.0], [flows[i] for i in perm], 0.5)
        rep = simulate(SimConfig(net_p, tuple(pols[i] for i in perm), tuple(x0[i] for i in perm), 15.0))
        assert rep.avg_reward == pytest.approx(base.avg_reward, rel=1e-13)


class TestDiscounted:
    def test_no_impulse_matches_closed_form(self):
        p = PAPER_PARAMS
        rep = simulate(SimConfig(single(p.flow, p.alpha, p.lam), NoImpulse(), 1.0, 200.0, "discounted", p.rho))
        assert rep.disc_reward == pytest.approx(W_star(1.0, p), abs=1e-4)

    def test_truncation_bound_covers_tail(self):
        p = PAPER_PARAMS
        net = single(p.flow, p.alpha, p.lam)
        for pol in (Threshold(0.79), FixedPeriod(3.0), NoImpulse()):
            short = simulate(SimConfig(net, pol, 0.5, 6.0, "discounted", p.rho))
            long = simulate(SimConfig(net, pol, 0.5, 60.0, "discounted", p.rho))
            assert abs(long.disc_reward - short.disc_reward) <= short.truncation_bound * (1 + 1e-9)

    def test_fixed_period_infinite_equals_none(self):
        p = PAPER_PARAMS
        net = single(p.flow, p.alpha, p.lam)
        a = simulate(SimConfig(net, FixedPeriod(math.inf), 0.7, 20.0, "discounted", p.rho))
        b = simulate(SimConfig(net, NoImpulse(), 0.7, 20.0, "discounted", p.rho))
        assert a.disc_reward == b.disc_reward and a.avg_reward == b.avg_reward
        assert a.N_T == b.N_T == (0,)


class TestRed:
    def test_deterministic_given_seed(self):
        cfg = SimConfig(single(), Red(0.8 * X_BAR, 1.2 * X_BAR, 0.5, 0.01), 0.2, 20.0, seed=7)
        assert simulate(cfg).to_dict() == simulate(cfg).to_dict()
        other = simulate(SimConfig(single(), cfg.policies, 0.2, 20.0, seed=8))
        assert other.to_dict() != simulate(cfg).to_dict()

    def test_probability_ramp(self):
        r = Red(1.0, 2.0, 0.4, 0.01)
        assert r.prob(0.5) == 0.0
        assert r.prob(1.5) == pytest.approx(0.2)
        assert r.prob(3.0) == 0.4

    def test_invalid(self):
        with pytest.raises(ValidationError):
            Red(2.0, 1.0, 0.5, 0.01)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValidationError):
            SimConfig(single(), Threshold(0.3), 0.0, 10.0)
        with pytest.raises(ValidationError):
            SimConfig(single(), Threshold(0.3), 0.1, 0.0)
        with pytest.raises(ValidationError):
            SimConfig(single(), Threshold(0.3), 0.1, 10.0, "discounted")
        with pytest.raises(ValidationError):
            SimConfig(single(), Threshold(0.3), 0.1, 10.0, warmup=10.0)

    def test_policy_round_trip(self):
        for pol in (Threshold(0.3), Red(0.1, 0.2, 0.3, 0.01), FixedPeriod(2.0), NoImpulse()):
            assert policy_from_dict(policy_to_dict(pol)) == pol

    def test_report_round_trip(self):
        rep = simulate(SimConfig(single(), Threshold(X_BAR), 0.1, 10.0, "discounted", 1.0))
        assert SimReport.from_dict(rep.to_dict()) == rep

    def test_warmup_excludes_transient(self):
        cycle = time_to_reach(FP.b * X_BAR, X_BAR, FP)
        first = time_to_reach(0.01, X_BAR, FP)
        rep = simulate(SimConfig(single(), Threshold(X_BAR), 0.01, first + 40 * cycle, warmup=first))
        assert rep.avg_reward == pytest.approx(G, rel=1e-9)


class TestCompare:
    def test_optimal_beats_double(self):
        x0 = FP.b * X_BAR
        rows = compare_policies({
            "opt": SimConfig(single(), Threshold(X_BAR), x0, 100.0),
            "double": SimConfig(single(), Threshold(2 * X_BAR), x0, 100.0),
        })
        assert rows[0].reward >= rows[1].reward

    def test_mismatched_horizon(self):
        with pytest.raises(ValidationError):
            compare_policies({
                "a": SimConfig(single(), Threshold(X_BAR), 0.1, 10.0),
                "b": SimConfig(single(), Threshold(X_BAR), 0.1, 11.0),
            })


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.1, 0.9), st.sampled_from([0.0, 0.5, 1.0]),
       st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.5, 30.0))
def test_threshold_keeps_rate_below_level(a, b, gamma, y, x0, T):
    fp = FlowParams(a, b, gamma)
    rep = simulate(SimConfig(single(fp), Threshold(y), x0, T))
    if rep.N_T[0] > 0 or x0 < y:
        assert rep.per_flow[0].final_rate < y
    for e in rep.events:
        assert e.rate_after < y
