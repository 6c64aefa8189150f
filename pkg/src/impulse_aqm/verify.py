"""Independent checks of the closed-form solutions.

``grid_search_threshold`` only simulates threshold policies; it never calls
the threshold formulas.  The scanners evaluate Bellman residuals, breakpoint
continuity and smooth pasting on grids and report the worst violations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .average import AverageSolution, RelativeValueProfile, bellman_residuals_avg
from .discounted import (
    DiscountedSolution,
    ValueFunctionW,
    bellman_residuals_disc,
)
from .model import CriterionParams, FlowParams, NetworkSpec, reward_rate_max, sup_abs_reward, time_to_reach
from .netsim import SimConfig, Threshold, simulate

BREAKPOINT_SHIFT = 1e-9


@dataclass(frozen=True)
class ScanReport:
    kind: str
    lo: float
    hi: float
    n: int
    tol: float
    max_residual: float
    worst_x: float
    flow_equality: float  # max |flow residual| below the threshold
    impulse_equality: float  # max |impulse residual| at or above the threshold
    continuity: float  # max value jump across breakpoints
    smoothness: float  # max slope jump across breakpoints
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ScanReport":
        return cls(**d)


def scan_grid(x_bar: float, b: float, lo=None, hi=None, n=10_000) -> np.ndarray:
    """Log grid over ``[x_bar/100, x_bar/b**5]`` nudged off every breakpoint."""
    lo = x_bar / 100 if lo is None else lo
    hi = x_bar / b**5 if hi is None else hi
    xs = np.geomspace(lo, hi, n)
    j = np.round(np.log(xs / x_bar) / -math.log(b))
    bp = x_bar / b**j
    near = np.abs(xs / bp - 1.0) < BREAKPOINT_SHIFT
    xs[near] = bp[near] * (1.0 + BREAKPOINT_SHIFT)
    return xs


def _breakpoint_jumps(profile, hi: float) -> tuple[float, float]:
    """Largest value and slope jumps between adjacent branches at each breakpoint."""
    b, x_bar = profile.policy.b, profile.x_bar
    value = slope = 0.0
    j = 0
    while x_bar / b**j <= hi:
        B = x_bar / b**j
        value = max(value, abs(float(profile.piece(B, j)) - float(profile.piece(B, j + 1))))
        slope = max(slope, abs(float(profile.dpiece(B, j)) - float(profile.dpiece(B, j + 1))))
        j += 1
    return value, slope


def bellman_scan(profile, xs=None, tol=1e-6, n=10_000) -> ScanReport:
    """Scan a relative-value profile or discounted value function.

    Passes iff on every grid point ``max(flow, impulse) <= tol``, the flow
    residual is within ``tol`` of 0 below the threshold, the impulse residual
    is within ``tol`` of 0 at or above it, and neither the value nor the slope
    jumps by more than ``tol`` across a breakpoint.  The slope jump is what
    catches a shifted threshold: value matching is stationary in ``x_bar``,
    so its error is only quadratic in the shift.
    """
    x_bar, b = profile.x_bar, profile.policy.b
    xs = scan_grid(x_bar, b, n=n) if xs is None else np.asarray(xs, dtype=float)
    if isinstance(profile, RelativeValueProfile):
        kind = "average"
        flow, imp = bellman_residuals_avg(xs, profile)
    elif isinstance(profile, ValueFunctionW):
        kind = "discounted"
        flow, imp = bellman_residuals_disc(xs, profile)
    else:
        raise TypeError(f"cannot scan {type(profile).__name__}")
    worst = np.maximum(flow, imp)
    i = int(np.argmax(worst))
    below = xs < x_bar
    flow_eq = float(np.max(np.abs(flow[below]), initial=0.0))
    imp_eq = float(np.max(np.abs(imp[~below]), initial=0.0))
    cont, smooth = _breakpoint_jumps(profile, float(xs.max()))
    passed = bool(max(worst[i], flow_eq, imp_eq, cont, smooth) <= tol)
    return ScanReport(kind, float(xs.min()), float(xs.max()), len(xs), tol,
                      float(worst[i]), float(xs[i]), flow_eq, imp_eq, cont, smooth, passed)


def pasting_check(sol: DiscountedSolution) -> tuple[float, float]:
    """Value and slope mismatch between ``W_tilde(x)`` and ``W_tilde(b x)`` at the threshold."""
    b, x = sol.params.b, sol.x_bar
    value = abs(sol.W_tilde(x) - sol.W_tilde(b * x))
    slope = abs(sol.dW_tilde(x) - b * sol.dW_tilde(b * x))
    return float(value), float(slope)


def fd_check(f, df, xs, order: int = 1) -> float:
    """Worst ``|analytic - central difference| / (1 + |analytic|)`` over ``xs``.

    ``order=1`` compares ``df`` with a first difference of ``f`` (step
    ``1e-6 (1+|x|)``); ``order=2`` compares it with a second difference (step
    ``1e-4 (1+|x|)``).
    """
    worst = 0.0
    for x in np.asarray(xs, dtype=float):
        if order == 1:
            h = 1e-6 * (1.0 + abs(x))
            num = (f(x + h) - f(x - h)) / (2 * h)
        elif order == 2:
            h = 1e-4 * (1.0 + abs(x))
            num = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
        else:
            raise ValueError("order must be 1 or 2")
        ana = df(x)
        worst = max(worst, abs(ana - num) / (1.0 + abs(ana)))
    return float(worst)


# -- brute-force optimality oracle ------------------------------------------

@dataclass(frozen=True)
class GridSearchResult:
    best: float
    best_reward: float
    thresholds: np.ndarray
    rewards: np.ndarray
    unimodal: bool

    @property
    def log_step(self) -> float:
        return float(np.log(self.thresholds[1] / self.thresholds[0]))

    def within_one_step(self, x: float) -> bool:
        return abs(math.log(self.best / x)) <= self.log_step * (1 + 1e-9)


def threshold_reward(y: float, fp: FlowParams, cp: CriterionParams, criterion: str = "average",
                     x0: float | None = None, tail_tol: float = 1e-12) -> float:
    """Simulated reward of the threshold policy at level ``y``.

    Average: one exact cycle started at ``b*y``.  Discounted: from ``x0``,
    truncated where the tail bound drops below ``tail_tol``.
    """
    net = NetworkSpec.single(fp, cp.alpha, cp.lam)
    if criterion == "average":
        start = fp.b * y
        T = time_to_reach(start, y, fp)
        return simulate(SimConfig(net, Threshold(y), start, T)).avg_reward
    x0 = fp.b * y if x0 is None else x0
    lo = min(x0, fp.b * y)
    cmax = sup_abs_reward(lo, max(x0, y), cp.alpha, cp.lam)
    T = max(math.log(max(cmax, 1e-300) / (cp.rho * tail_tol)) / cp.rho, 1.0 / cp.rho)
    return simulate(SimConfig(net, Threshold(y), x0, T, "discounted", cp.rho)).disc_reward


def grid_search_threshold(fp: FlowParams, cp: CriterionParams, criterion: str = "average",
                          grid=None, center: float | None = None, span: float = 0.5,
                          n: int = 200, x0: float | None = None) -> GridSearchResult:
    """Argmax of simulated reward over candidate thresholds.

    The default grid is ``n`` log-spaced points over
    ``[center (1-span), center (1+span)]``; without ``center`` the pointwise
    reward maximiser ``lam**(-1/alpha)`` is used.
    """
    if grid is None:
        if center is None:
            center = cp.lam ** (-1.0 / cp.alpha)
        grid = np.geomspace(center * (1 - span), center * (1 + span), n)
    grid = np.asarray(grid, dtype=float)
    if criterion == "discounted" and x0 is None:
        x0 = fp.b * grid.min()
    rewards = np.array([threshold_reward(float(y), fp, cp, criterion, x0) for y in grid])
    i = int(np.argmax(rewards))
    d = np.diff(rewards)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(rewards))))
    # unimodal: nondecreasing up to the argmax, nonincreasing after it
    unimodal = bool((d[:i] >= -tol).all() and (d[i:] <= tol).all())
    return GridSearchResult(float(grid[i]), float(rewards[i]), grid, rewards, unimodal)


def perturb(solution, field: str, factor: float):
    """Copy of a solution with one of ``x_bar``, ``g`` or ``w1`` scaled.

    Scaling ``w1`` drops the threshold pin so the curve follows the new
    ``w1``; scaling ``x_bar`` keeps the curve and moves only the threshold.
    """
    if field not in ("x_bar", "g", "w1") or not hasattr(solution, field):
        raise ValueError(f"{type(solution).__name__} has no perturbable field {field!r}")
    extra = {"pin": None} if field == "w1" else {}
    return replace(solution, **{field: getattr(solution, field) * factor}, **extra)


def profile_for(solution):
    if isinstance(solution, AverageSolution):
        return RelativeValueProfile(solution)
    if isinstance(solution, DiscountedSolution):
        return ValueFunctionW(solution)
    raise TypeError(f"no profile for {type(solution).__name__}")


def gain_bound_ok(solution: AverageSolution) -> bool:
    return solution.g <= reward_rate_max(solution.crit) * (1 + 1e-12)


@dataclass(frozen=True)
class CrossingReport:
    slope_points: tuple  # x where W_tilde meets z
    slope_residuals: tuple  # |W_tilde'| there, by central differences
    inflection_points: tuple  # x where W_tilde meets the inflection curve
    curvature_residuals: tuple  # |W_tilde''| there, by second differences


def _crossings(f, xs):
    from scipy.optimize import brentq

    v = f(xs)
    out = []
    for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
        out.append(brentq(f, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-14))
    return out


def curve_crossings(sol: DiscountedSolution, lo=None, n=2000) -> CrossingReport:
    """Locate where ``W_tilde`` meets the zero-slope and inflection curves below the threshold."""
    from .discounted import inflection_curve, z_curve

    p = sol.params
    xs = np.geomspace(lo or sol.x_bar / 100, sol.x_bar, n)
    W = sol.W_tilde
    zs = _crossings(lambda x: W(x) - z_curve(x, p), xs)
    vs = _crossings(lambda x: W(x) - inflection_curve(x, p), xs)
    h1 = lambda x: 1e-6 * (1 + x)
    h2 = lambda x: 1e-4 * (1 + x)
    slope = tuple(abs(W(x + h1(x)) - W(x - h1(x))) / (2 * h1(x)) for x in zs)
    curv = tuple(abs(W(x + h2(x)) - 2 * W(x) + W(x - h2(x))) / h2(x) ** 2 for x in vs)
    return CrossingReport(tuple(zs), slope, tuple(vs), curv)


def monotone_parts(values) -> list[int]:
    """Run-length sign pattern of successive differences, e.g. ``[1, -1, 1]``."""
    s = np.sign(np.diff(np.asarray(values, dtype=float)))
    s = s[s != 0]
    if s.size == 0:
        return []
    keep = np.concatenate([[True], s[1:] != s[:-1]])
    return [int(v) for v in s[keep]]
