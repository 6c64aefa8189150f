"""Event-driven fluid simulation of AQM policies on a routed network.

Flows interact only through their aggregated prices, so each flow is
simulated on its own and the events are merged.  Threshold, fixed-period and
no-impulse policies are exact: the next event time comes from the closed-form
trajectory and rewards are integrated per segment.  RED is stepped every
``dt`` seconds because its notifications are random.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import integrate

from .errors import ValidationError
from .model import (
    FlowParams,
    NetworkSpec,
    ThresholdPolicy,
    grow,
    segment_integrals,
    sup_abs_reward,
    time_to_reach,
)

_T_SLACK = 1e-12  # events this close (relative) to the horizon still count


# -- policies ---------------------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    x_bar: float
    kind = "threshold"

    def __post_init__(self):
        if not self.x_bar > 0:
            raise ValidationError(f"threshold x_bar must be > 0, got {self.x_bar}")


@dataclass(frozen=True)
class Red:
    """Rate-based RED: drop probability ramps from 0 at ``min_th`` to ``p_max`` at ``max_th``."""

    min_th: float
    max_th: float
    p_max: float
    dt: float
    kind = "red"

    def __post_init__(self):
        if not 0 < self.min_th < self.max_th:
            raise ValidationError("RED needs 0 < min_th < max_th")
        if not 0 < self.p_max <= 1:
            raise ValidationError("RED needs 0 < p_max <= 1")
        if not self.dt > 0:
            raise ValidationError("RED needs dt > 0")

    def prob(self, x: float) -> float:
        if x < self.min_th:
            return 0.0
        if x >= self.max_th:
            return self.p_max
        return self.p_max * (x - self.min_th) / (self.max_th - self.min_th)


@dataclass(frozen=True)
class FixedPeriod:
    tau: float
    kind = "fixed_period"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError(f"fixed_period tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class NoImpulse:
    kind = "none"


PolicySpec = Union[Threshold, Red, FixedPeriod, NoImpulse]
_POLICY_KINDS = {"threshold": Threshold, "red": Red, "fixed_period": FixedPeriod, "none": NoImpulse}


def policy_to_dict(pol: PolicySpec) -> dict:
    return {"kind": pol.kind, **asdict(pol)}


def policy_from_dict(d: Mapping) -> PolicySpec:
    d = dict(d)
    cls = _POLICY_KINDS[d.pop("kind")]
    return cls(**d)


# -- config and report ------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    network: NetworkSpec
    policies: tuple
    x0: tuple
    horizon: float
    criterion: str = "average"
    rho: float | None = None
    seed: int = 0
    warmup: float = 0.0

    def __post_init__(self):
        n = self.network.n
        pols = self.policies
        if isinstance(pols, (Threshold, Red, FixedPeriod, NoImpulse)):
            pols = (pols,) * n
        x0 = np.broadcast_to(np.asarray(self.x0, dtype=float), (n,))
        object.__setattr__(self, "policies", tuple(pols))
        object.__setattr__(self, "x0", tuple(float(v) for v in x0))
        if len(self.policies) != n:
            raise ValidationError(f"need {n} policies, got {len(self.policies)}")
        if not all(v > 0 for v in self.x0):
            raise ValidationError("initial rates must be > 0")
        if not self.horizon > 0 or math.isinf(self.horizon):
            raise ValidationError(f"horizon must be finite and > 0, got {self.horizon}")
        if self.criterion not in ("average", "discounted"):
            raise ValidationError(f"criterion must be 'average' or 'discounted', got {self.criterion!r}")
        if self.criterion == "discounted" and not (self.rho is not None and self.rho > 0):
            raise ValidationError("discounted criterion needs rho > 0")
        if self.rho is not None and not self.rho > 0:
            raise ValidationError("rho must be > 0")
        if not 0 <= self.warmup < self.horizon:
            raise ValidationError("warmup must lie in [0, horizon)")


@dataclass(frozen=True)
class ImpulseEvent:
    time: float
    flow: int
    count: int
    rate_before: float
    rate_after: float
    cumulative_reward: float


@dataclass(frozen=True)
class FlowReport:
    """Per-flow integrals; ``*_avg`` are horizon means, ``*_disc`` discounted sums."""

    flow: int
    price: float
    utility_avg: float
    rate_avg: float
    reward_avg: float
    utility_disc: float | None
    rate_disc: float | None
    reward_disc: float | None
    n_impulses: int
    final_rate: float
    truncation_bound: float | None


@dataclass(frozen=True)
class SimReport:
    horizon: float
    criterion: str
    avg_reward: float
    disc_reward: float | None
    per_flow: tuple
    events: tuple
    truncation_bound: float | None = None

    @property
    def impulse_times(self) -> list[tuple[float, int, int]]:
        return [(e.time, e.flow, e.count) for e in self.events]

    @property
    def N_T(self) -> tuple[int, ...]:
        return tuple(f.n_impulses for f in self.per_flow)

    @property
    def reward(self) -> float:
        return self.disc_reward if self.criterion == "discounted" else self.avg_reward

    def flow_events(self, k: int) -> list[ImpulseEvent]:
        return [e for e in self.events if e.flow == k]

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "criterion": self.criterion,
            "avg_reward": self.avg_reward,
            "disc_reward": self.disc_reward,
            "truncation_bound": self.truncation_bound,
            "N_T": list(self.N_T),
            "per_flow": [asdict(f) for f in self.per_flow],
            "events": [asdict(e) for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimReport":
        return cls(
            horizon=d["horizon"],
            criterion=d["criterion"],
            avg_reward=d["avg_reward"],
            disc_reward=d["disc_reward"],
            per_flow=tuple(FlowReport(**f) for f in d["per_flow"]),
            events=tuple(ImpulseEvent(**e) for e in d["events"]),
            truncation_bound=d["truncation_bound"],
        )


# -- prices -----------------------------------------------------------------

def decouple_prices(net: NetworkSpec) -> np.ndarray:
    """Per-flow price: sum of link weights along each flow's path."""
    return net.routing.T @ net.link_weights


# -- per-flow integration ---------------------------------------------------

class _Accumulator:
    """Integrates utility and rate along growth arcs of one flow."""

    def __init__(self, fp: FlowParams, alpha: float, price: float, cfg: SimConfig):
        self.fp, self.alpha, self.price = fp, alpha, price
        self.rho, self.warmup, self.horizon = cfg.rho, cfg.warmup, cfg.horizon
        self.discounted_mode = cfg.criterion == "discounted"
        self.u_avg = self.r_avg = 0.0
        self.u_tot = self.r_tot = 0.0
        self.u_disc = self.r_disc = 0.0
        self._disc_cache: dict[tuple[float, float], tuple[float, float]] = {}

    def arc(self, x0: float, x1: float, t0: float, t1: float):
        """Arc from rate ``x0`` at ``t0`` to ``x1`` at ``t1`` (``x1`` is the grown rate)."""
        if t1 <= t0:
            return
        fp, al = self.fp, self.alpha
        u, r = segment_integrals(x0, x1, fp, al)
        self.u_tot += u
        self.r_tot += r
        if t1 <= self.warmup:
            pass
        elif t0 >= self.warmup:
            self.u_avg += u
            self.r_avg += r
        else:
            xw = grow(x0, self.warmup - t0, fp)
            u2, r2 = segment_integrals(xw, x1, fp, al)
            self.u_avg += u2
            self.r_avg += r2
        if self.rho is not None:
            key = (x0, x1)
            if key not in self._disc_cache:
                self._disc_cache[key] = segment_integrals(x0, x1, fp, al, self.rho, 0.0)
            ud, rd = self._disc_cache[key]
            w = math.exp(-self.rho * t0)
            self.u_disc += w * ud
            self.r_disc += w * rd

    def cumulative(self) -> float:
        if self.discounted_mode:
            return self.u_disc - self.price * self.r_disc
        return self.u_tot - self.price * self.r_tot


def _tail_bound(fp: FlowParams, alpha: float, lam: float, rho: float, T: float,
                x_T: float, lo: float, cap: float | None) -> float:
    """Upper bound on ``|int_T^inf exp(-rho t) c(x(t)) dt|``.

    After ``T`` the rate lies in ``[lo, min(grow(x_T, s), cap)]``; ``cap`` is
    ``None`` when the policy does not bound the rate from above.
    """
    if cap is not None:
        hi = max(cap, x_T)
        return math.exp(-rho * T) * sup_abs_reward(lo, hi, alpha, lam) / rho
    if fp.gamma == 1:
        rate = fp.a * (1.0 if lam > 0 else max(1.0 - alpha, 0.0))
        if rate >= rho:
            return math.inf
    if lo <= 0 and alpha > 1:
        return math.inf
    f = lambda s: math.exp(-rho * s) * sup_abs_reward(lo, grow(x_T, s, fp), alpha, lam)
    val = integrate.quad(f, 0.0, math.inf, limit=200)[0]
    return math.exp(-rho * T) * val


def _simulate_flow(k: int, fp: FlowParams, pol: PolicySpec, x0: float, price: float,
                   cfg: SimConfig, rng: np.random.Generator | None):
    acc = _Accumulator(fp, cfg.network.alpha, price, cfg)
    T = cfg.horizon
    T_ev = T * (1.0 + _T_SLACK)
    events: list[ImpulseEvent] = []
    x, t = x0, 0.0
    lo = x0  # running lower envelope for the tail bound
    cap = None

    def fire(time, count, before, after):
        events.append(ImpulseEvent(time, k, count, before, after, acc.cumulative()))

    if isinstance(pol, Threshold):
        tp = ThresholdPolicy(pol.x_bar, fp.b)
        if x >= tp.x_bar:
            v = tp.count(x)
            xn = fp.b**v * x
            fire(0.0, v, x, xn)
            x = xn
        lo = min(x, fp.b * tp.x_bar)
        cap = tp.x_bar
        while True:
            t_next = t + time_to_reach(x, tp.x_bar, fp)
            if t_next > T_ev:
                break
            acc.arc(x, tp.x_bar, t, min(t_next, T))
            t = t_next
            fire(t, 1, tp.x_bar, fp.b * tp.x_bar)
            x = fp.b * tp.x_bar
        if t < T:
            xe = grow(x, T - t, fp)
            acc.arc(x, xe, t, T)
            x = xe
        t = T
    elif isinstance(pol, FixedPeriod):
        j = 1
        while j * pol.tau <= T_ev:
            t_next = j * pol.tau
            xe = grow(x, t_next - t, fp)
            acc.arc(x, xe, t, min(t_next, T))
            t = t_next
            fire(t, 1, xe, fp.b * xe)
            x = fp.b * xe
            lo = min(lo, x)
            j += 1
        if t < T:
            xe = grow(x, T - t, fp)
            acc.arc(x, xe, t, T)
            x = xe
    elif isinstance(pol, NoImpulse):
        xe = grow(x, T, fp)
        acc.arc(x, xe, 0.0, T)
        x = xe
    elif isinstance(pol, Red):
        n_steps = int(math.ceil(T / pol.dt - _T_SLACK))
        draws = rng.random(n_steps)
        for j in range(n_steps):
            t1 = min((j + 1) * pol.dt, T)
            xe = grow(x, t1 - t, fp)
            acc.arc(x, xe, t, t1)
            t, x = t1, xe
            if draws[j] < pol.prob(x):
                fire(t, 1, x, fp.b * x)
                x = fp.b * x
        lo = min(lo, x, fp.b * pol.min_th)
    else:
        raise ValidationError(f"unknown policy {pol!r}")

    if isinstance(pol, FixedPeriod):
        lo = min(lo, x)
        if math.isfinite(pol.tau):
            # troughs approach the fixed point of y -> b * grow(y, tau)
            y = x
            for _ in range(10_000):
                y_next = fp.b * grow(y, pol.tau, fp)
                if abs(y_next - y) <= 1e-14 * y or y_next < 1e-300 or y_next > 1e300:
                    break
                y = y_next
            lo = min(lo, y)

    span = T - cfg.warmup
    alpha = cfg.network.alpha
    bound = None
    disc = (None, None, None)
    if cfg.rho is not None:
        disc = (acc.u_disc, acc.r_disc, acc.u_disc - price * acc.r_disc)
        bound = _tail_bound(fp, alpha, price, cfg.rho, T, x, lo, cap)
    report = FlowReport(
        flow=k,
        price=float(price),
        utility_avg=acc.u_avg / span,
        rate_avg=acc.r_avg / span,
        reward_avg=(acc.u_avg - price * acc.r_avg) / span,
        utility_disc=disc[0],
        rate_disc=disc[1],
        reward_disc=disc[2],
        n_impulses=len(events),
        final_rate=x,
        truncation_bound=bound,
    )
    return report, events


def simulate(cfg: SimConfig) -> SimReport:
    """Run every flow to the horizon and aggregate rewards."""
    net = cfg.network
    prices = decouple_prices(net)
    streams = np.random.SeedSequence(cfg.seed).spawn(net.n)
    reports, events = [], []
    for k in range(net.n):
        pol = cfg.policies[k]
        rng = np.random.Generator(np.random.Philox(streams[k])) if isinstance(pol, Red) else None
        rep, ev = _simulate_flow(k, net.flows[k], pol, cfg.x0[k], prices[k], cfg, rng)
        reports.append(rep)
        events.extend(ev)
    events.sort(key=lambda e: (e.time, e.flow))
    # network objective assembled link by link, not from the per-flow prices
    util_avg = sum(r.utility_avg for r in reports)
    link_rate_avg = net.routing @ np.array([r.rate_avg for r in reports])
    avg = util_avg - float(net.link_weights @ link_rate_avg)
    disc = bound = None
    if cfg.rho is not None:
        util_d = sum(r.utility_disc for r in reports)
        link_rate_d = net.routing @ np.array([r.rate_disc for r in reports])
        disc = util_d - float(net.link_weights @ link_rate_d)
        bound = sum(r.truncation_bound for r in reports)
    return SimReport(cfg.horizon, cfg.criterion, avg, disc, tuple(reports), tuple(events), bound)


# -- comparison -------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    name: str
    reward: float
    reward_std: float
    per_flow: tuple
    impulses: tuple
    runs: int


def compare_policies(variants: Mapping[str, SimConfig], seeds: Sequence[int] | None = None):
    """Simulate each named configuration and tabulate its reward.

    Variants containing a RED policy are averaged over ``seeds``;
    deterministic variants run once.
    """
    cfgs = list(variants.values())
    if not cfgs:
        return []
    ref = cfgs[0]
    for c in cfgs[1:]:
        if c.horizon != ref.horizon:
            raise ValidationError("all variants must share the horizon")
        if c.criterion != ref.criterion or c.rho != ref.rho:
            raise ValidationError("all variants must share the criterion")
        if c.network is not ref.network and not (
            np.array_equal(c.network.routing, ref.network.routing)
            and np.array_equal(c.network.link_weights, ref.network.link_weights)
            and c.network.flows == ref.network.flows
            and c.network.alpha == ref.network.alpha
        ):
            raise ValidationError("all variants must share the network")
    rows = []
    for name, cfg in variants.items():
        random = any(isinstance(p, Red) for p in cfg.policies)
        run_seeds = list(seeds) if (random and seeds) else [cfg.seed]
        reps = [simulate(_with_seed(cfg, s)) for s in run_seeds]
        rewards = np.array([r.reward for r in reps])
        per_flow = np.mean(
            [[f.reward_disc if cfg.criterion == "discounted" else f.reward_avg for f in r.per_flow] for r in reps],
            axis=0,
        )
        imp = np.mean([r.N_T for r in reps], axis=0)
        rows.append(ComparisonRow(name, float(rewards.mean()), float(rewards.std()),
                                  tuple(per_flow.tolist()), tuple(imp.tolist()), len(reps)))
    return rows


def _with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)
