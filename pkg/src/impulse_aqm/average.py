"""Closed-form optimal threshold for the long-run average alpha-fair reward.

For ``gamma < 1`` the relative value on ``(0, x_bar)`` is

    h0(x) = (1/a) [ -x**(2-alpha-gamma) / ((1-alpha)(2-alpha-gamma))
                    + lam x**(2-gamma) / (2-gamma) + g x**(1-gamma) / (1-gamma) ]

and for ``gamma == 1``

    h0(x) = (1/a) [ g ln x + lam x - x**(1-alpha) / (1-alpha)**2 ],

obtained by integrating ``h0'(x) = (g - c(x)) / (a x**gamma)``.  Above the
threshold ``h(x) = h0(b**k x)`` with ``k = v(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlphaOneError, DegenerateExponentError, DomainError, ZeroPriceError
from .model import CriterionParams, FlowParams, ThresholdPolicy


@dataclass(frozen=True)
class AverageSolution:
    x_bar: float
    g: float
    flow: FlowParams
    crit: CriterionParams

    @property
    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.x_bar, self.flow.b)


def _check(fp: FlowParams, cp: CriterionParams):
    if cp.alpha == 1:
        raise AlphaOneError("alpha = 1 is not supported")
    if not cp.lam > 0:
        raise ZeroPriceError(f"lam must be > 0 for a finite threshold, got {cp.lam}")
    if 2.0 - cp.alpha - fp.gamma == 0:
        raise DegenerateExponentError("2 - alpha - gamma = 0")


def threshold_avg(fp: FlowParams, cp: CriterionParams) -> AverageSolution:
    """Optimal threshold ``x_bar`` and gain ``g`` for the average criterion."""
    _check(fp, cp)
    al, gm, b, lam = cp.alpha, fp.gamma, fp.b, cp.lam
    e = 2.0 - al - gm
    x_bar = ((2.0 - gm) * (1.0 - b**e) / (e * (1.0 - b ** (2.0 - gm)) * lam)) ** (1.0 / al)
    if gm < 1:
        g = x_bar * lam * al / (1.0 - al) * (1.0 - gm) * (1.0 - b ** (2.0 - gm)) / (
            (2.0 - gm) * (1.0 - b ** (1.0 - gm))
        )
    else:
        g = x_bar * lam * al / (1.0 - al) * (b - 1.0) / math.log(b)
    return AverageSolution(x_bar, g, fp, cp)


class RelativeValueProfile:
    """Piecewise relative value function ``h`` built from a solution.

    The profile trusts whatever ``x_bar`` and ``g`` it is handed, so a
    deliberately perturbed solution yields a perturbed (and detectably
    wrong) profile.
    """

    def __init__(self, solution: AverageSolution):
        self.solution = solution
        self.policy = solution.policy
        fp, cp = solution.flow, solution.crit
        self._a, self._b, self._gm = fp.a, fp.b, fp.gamma
        self._al, self._lam, self._g = cp.alpha, cp.lam, solution.g

    @property
    def x_bar(self) -> float:
        return self.solution.x_bar

    def h0(self, x):
        a, al, gm, lam, g = self._a, self._al, self._gm, self._lam, self._g
        x = np.asarray(x, dtype=float)
        if gm == 1:
            return (g * np.log(x) + lam * x - x ** (1.0 - al) / (1.0 - al) ** 2) / a
        e = 2.0 - al - gm
        return (
            -(x**e) / ((1.0 - al) * e)
            + lam * x ** (2.0 - gm) / (2.0 - gm)
            + g * x ** (1.0 - gm) / (1.0 - gm)
        ) / a

    def dh0(self, x):
        a, al, gm, lam, g = self._a, self._al, self._gm, self._lam, self._g
        x = np.asarray(x, dtype=float)
        return (g - x ** (1.0 - al) / (1.0 - al) + lam * x) / (a * x**gm)

    def piece(self, x, k):
        """Branch ``h0(b**k x)`` regardless of which interval ``x`` lies in."""
        return self.h0(self._b**k * x)

    def dpiece(self, x, k):
        return self._b**k * self.dh0(self._b**k * x)

    def h(self, x: float) -> float:
        if not x > 0:
            raise DomainError(f"x must be > 0, got {x}")
        return float(self.piece(x, self.policy.count(x)))

    def dh(self, x: float) -> float:
        if not x > 0:
            raise DomainError(f"x must be > 0, got {x}")
        k = self.policy.count(x)
        return float(self._b**k * self.dh0(self._b**k * x))

    def flow_term(self, x: float) -> float:
        """``c(x) - g + h'(x) a x**gamma``."""
        c = x ** (1.0 - self._al) / (1.0 - self._al) - self._lam * x
        return c - self._g + self.dh(x) * self._a * x**self._gm

    def counts(self, xs) -> np.ndarray:
        return np.array([self.policy.count(float(v)) for v in np.ravel(xs)]).reshape(np.shape(xs))

    def h_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        return self.h0(self._b ** self.counts(xs) * xs)

    def flow_terms(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        s = self._b ** self.counts(xs)
        c = xs ** (1.0 - self._al) / (1.0 - self._al) - self._lam * xs
        return c - self._g + s * self.dh0(s * xs) * self._a * xs**self._gm


def relative_value(x: float, profile: RelativeValueProfile) -> float:
    """h(x), right-continuous at breakpoints."""
    return profile.h(x)


def impulse_depth(x: float, x_bar: float, b: float) -> int:
    """Number of impulse depths to examine in the sup: the first ``m`` with
    ``b**m x < b x_bar``, plus one."""
    m = 1
    while b**m * x >= b * x_bar:
        m += 1
    return m + 1


def bellman_residual_avg(x: float, profile: RelativeValueProfile) -> tuple[float, float]:
    """Return ``(flow_residual, impulse_residual)`` of the average Bellman equation.

    For the optimal profile the flow residual vanishes on ``(0, x_bar)``, the
    impulse residual vanishes on ``[x_bar, inf)`` and neither is positive.
    """
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x}")
    b = profile.policy.b
    hx = profile.h(x)
    M = impulse_depth(x, profile.x_bar, b)
    imp = max(profile.h(b**m * x) - hx for m in range(1, M + 1))
    return profile.flow_term(x), imp


def bellman_residuals_avg(xs, profile: RelativeValueProfile):
    """Vectorised :func:`bellman_residual_avg` over a grid."""
    xs = np.asarray(xs, dtype=float)
    if (xs <= 0).any():
        raise DomainError("x must be > 0")
    b = profile.policy.b
    depth = np.array([impulse_depth(float(x), profile.x_bar, b) for x in xs])
    h = profile.h_many(xs)
    imp = np.full(xs.shape, -np.inf)
    for m in range(1, int(depth.max()) + 1):
        use = depth >= m
        imp[use] = np.maximum(imp[use], profile.h_many(b**m * xs[use]) - h[use])
    return profile.flow_terms(xs), imp
