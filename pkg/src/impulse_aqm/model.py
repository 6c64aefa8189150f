"""Saw-tooth rate dynamics, multiplicative impulses and the alpha-fair reward.

Between congestion notifications a source's sending rate obeys
``dx/dt = a * x**gamma``; a notification carrying ``k`` simultaneous signals
multiplies the rate by ``b**k``.  The per-source reward rate is
``x**(1-alpha)/(1-alpha) - lam*x``.

All trajectories here are closed form.  Numerical ODE integration is only
used by the test-suite as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import (
    AlphaOneError,
    DomainError,
    NumericError,
    ParameterError,
    ValidationError,
)

QUAD_EPSREL = 1e-11
QUAD_EPSABS = 1e-14


@dataclass(frozen=True)
class FlowParams:
    """Dynamics of one source: growth coefficient, decrease factor, exponent."""

    a: float
    b: float
    gamma: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ParameterError(f"a must be > 0, got {self.a}")
        if not 0 < self.b < 1:
            raise ParameterError(f"b must lie in (0, 1), got {self.b}")
        if not 0 <= self.gamma <= 1:
            raise ParameterError(f"gamma must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class CriterionParams:
    """Fairness exponent, aggregated price and (optional) discount rate."""

    alpha: float
    lam: float
    rho: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.alpha == 1:
            raise AlphaOneError("alpha = 1 (proportional fairness) is not supported")
        if not self.lam >= 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.rho is not None and not self.rho > 0:
            raise ParameterError(f"rho must be > 0, got {self.rho}")


@dataclass(frozen=True)
class ThresholdPolicy:
    """Send ``v(x)`` notifications whenever the rate reaches ``x_bar``.

    ``v(x) = k`` on ``[x_bar/b**(k-1), x_bar/b**k)``; below ``x_bar`` nothing
    is sent.  The post-impulse rate always lands in ``[b*x_bar, x_bar)``.
    """

    x_bar: float
    b: float

    def __post_init__(self):
        if not self.x_bar > 0:
            raise ParameterError(f"x_bar must be > 0, got {self.x_bar}")
        if not 0 < self.b < 1:
            raise ParameterError(f"b must lie in (0, 1), got {self.b}")

    def breakpoint(self, j: int) -> float:
        """``x_bar / b**j``, the left end of the interval with count ``j + 1``."""
        return self.x_bar / self.b**j

    def count(self, x: float) -> int:
        """Impulse count v(x); 0 below the threshold."""
        if x < self.x_bar:
            return 0
        k = int(math.floor(math.log(x / self.x_bar) / -math.log(self.b))) + 1
        # log rounding can be off by one next to a breakpoint
        while k > 1 and x < self.breakpoint(k - 1):
            k -= 1
        while x >= self.breakpoint(k):
            k += 1
        return k

    def apply(self, x: float) -> float:
        k = self.count(x)
        return apply_impulse(x, k, self.b) if k else x


@dataclass(frozen=True)
class NetworkSpec:
    """Routing matrix (links x flows), link weights and per-flow dynamics."""

    routing: np.ndarray
    link_weights: np.ndarray
    flows: tuple[FlowParams, ...]
    alpha: float

    def __init__(self, routing, link_weights, flows: Sequence[FlowParams], alpha: float):
        try:
            r = np.array(routing, dtype=float)
            w = np.array(link_weights, dtype=float)
        except ValueError as e:
            raise ValidationError(f"malformed routing or link weights: {e}") from None
        if r.ndim != 2:
            raise ValidationError("routing must be a 2-D links x flows matrix")
        if not np.isin(r, (0, 1)).all():
            raise ValidationError("routing entries must be 0 or 1")
        r = r.astype(int)
        if (r.sum(axis=1) == 0).any():
            raise ValidationError("every link must carry at least one flow")
        if (r.sum(axis=0) == 0).any():
            raise ValidationError("every flow must be routed through at least one link")
        if w.shape != (r.shape[0],):
            raise ValidationError(f"link_weights must have length {r.shape[0]}, got shape {w.shape}")
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValidationError("link_weights must be finite and >= 0")
        flows = tuple(flows)
        if len(flows) != r.shape[1]:
            raise ValidationError(f"expected {r.shape[1]} FlowParams, got {len(flows)}")
        CriterionParams(alpha, 0.0)  # validates alpha
        r.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "routing", r)
        object.__setattr__(self, "link_weights", w)
        object.__setattr__(self, "flows", flows)
        object.__setattr__(self, "alpha", float(alpha))

    @property
    def n(self) -> int:
        return self.routing.shape[1]

    @property
    def L(self) -> int:
        return self.routing.shape[0]

    @classmethod
    def single(cls, flow: FlowParams, alpha: float, lam: float) -> "NetworkSpec":
        """One flow over one link priced at ``lam``."""
        return cls([[1]], [lam], [flow], alpha)


# -- dynamics ---------------------------------------------------------------

def grow(x0: float, dt: float, fp: FlowParams) -> float:
    """Rate after ``dt`` seconds of impulse-free growth from ``x0``."""
    if not x0 > 0:
        raise DomainError(f"x0 must be > 0, got {x0}")
    if not dt >= 0:
        raise DomainError(f"dt must be >= 0, got {dt}")
    g = fp.gamma
    if g == 1:
        return x0 * math.exp(fp.a * dt)
    if g == 0:
        return x0 + fp.a * dt
    p = 1.0 - g
    # the power round trip can land an ulp below x0
    return max((x0**p + fp.a * p * dt) ** (1.0 / p), x0)


def time_to_reach(x0: float, x1: float, fp: FlowParams) -> float:
    """Time for the impulse-free trajectory to climb from ``x0`` to ``x1``."""
    if not x0 > 0:
        raise DomainError(f"x0 must be > 0, got {x0}")
    if not x1 >= x0:
        raise DomainError(f"x1 must be >= x0, got x0={x0}, x1={x1}")
    g = fp.gamma
    if g == 0:
        return (x1 - x0) / fp.a
    if g == 1:
        return math.log(x1 / x0) / fp.a
    p = 1.0 - g
    return (x1**p - x0**p) / (fp.a * p)


def apply_impulse(x: float, k: int, b: float) -> float:
    """Composite impulse of ``k`` simultaneous notifications: ``b**k * x``."""
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x}")
    if k < 1:
        raise DomainError(f"impulse count must be >= 1, got {k}")
    return b**k * x


# -- reward -----------------------------------------------------------------

def utility(x, alpha: float):
    """alpha-fair utility ``x**(1-alpha)/(1-alpha)`` (array friendly)."""
    return np.power(x, 1.0 - alpha) / (1.0 - alpha)


def reward_rate(x: float, cp: CriterionParams) -> float:
    """Instantaneous reward ``x**(1-alpha)/(1-alpha) - lam*x``."""
    if cp.alpha == 1:
        raise AlphaOneError("alpha = 1 is not supported")
    if not x > 0:
        raise DomainError(f"x must be > 0, got {x}")
    return x ** (1.0 - cp.alpha) / (1.0 - cp.alpha) - cp.lam * x


def reward_rate_max(cp: CriterionParams) -> float:
    """Pointwise supremum of the reward rate, attained at ``lam**(-1/alpha)``."""
    if cp.lam <= 0:
        return math.inf if cp.alpha < 1 else 0.0
    al = cp.alpha
    return al / (1.0 - al) * cp.lam ** ((al - 1.0) / al)


def sup_abs_reward(lo: float, hi: float, alpha: float, lam: float) -> float:
    """``max |c(x)|`` over ``[lo, hi]``; c is concave so endpoints and the peak suffice."""
    if lo <= 0 and alpha > 1:
        return math.inf
    vals = [abs(_c(lo, alpha, lam)) if lo > 0 else 0.0, abs(_c(hi, alpha, lam))]
    if lam > 0:
        xs = lam ** (-1.0 / alpha)
        if lo < xs < hi:
            vals.append(abs(_c(xs, alpha, lam)))
    return max(vals)


def _c(x, alpha, lam):
    if math.isinf(x):
        return -math.inf if lam > 0 or alpha > 1 else math.inf
    return x ** (1.0 - alpha) / (1.0 - alpha) - lam * x


def _power_antiderivative(x: float, q: float) -> float:
    # antiderivative of x**q
    if q == -1:
        return math.log(x)
    return x ** (q + 1.0) / (q + 1.0)


def _quad(f, lo, hi, what):
    val, err, info = integrate.quad(
        f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200, full_output=1
    )[:3]
    if err > max(QUAD_EPSABS, 10 * QUAD_EPSREL * abs(val)) and info["neval"] >= 200 * 21:
        raise NumericError(
            f"quadrature of {what} did not converge",
            {"lo": lo, "hi": hi, "value": val, "abserr": err, "neval": info["neval"]},
        )
    return val


def segment_integrals(x0: float, x1: float, fp: FlowParams, alpha: float,
                      rho: float | None = None, t0: float = 0.0) -> tuple[float, float]:
    """Integrals of utility and of rate along the growth arc ``x0 -> x1``.

    With ``rho`` given the integrands carry the weight ``exp(-rho*t)`` and the
    arc starts at absolute time ``t0``.  Returns ``(utility_int, rate_int)``;
    the reward integral is ``utility_int - lam*rate_int``.
    """
    if not x0 > 0:
        raise DomainError(f"x0 must be > 0, got {x0}")
    if not x1 >= x0:
        raise DomainError(f"x1 must be >= x0, got x0={x0}, x1={x1}")
    if alpha == 1:
        raise AlphaOneError("alpha = 1 is not supported")
    if x1 == x0:
        return 0.0, 0.0
    g = fp.gamma
    if rho is None:
        # dt = dx / (a x**gamma)
        qu = 1.0 - alpha - g
        qr = 1.0 - g
        u = (_power_antiderivative(x1, qu) - _power_antiderivative(x0, qu)) / (fp.a * (1.0 - alpha))
        r = (_power_antiderivative(x1, qr) - _power_antiderivative(x0, qr)) / fp.a
        return u, r
    tau = time_to_reach(x0, x1, fp)
    if g == 0:
        path = lambda s: x0 + fp.a * s
    elif g == 1:
        path = lambda s: x0 * math.exp(fp.a * s)
    else:
        p = 1.0 - g
        path = lambda s: (x0**p + fp.a * p * s) ** (1.0 / p)
    u = _quad(lambda s: math.exp(-rho * s) * path(s) ** (1.0 - alpha), 0.0, tau, "utility")
    r = _quad(lambda s: math.exp(-rho * s) * path(s), 0.0, tau, "rate")
    scale = math.exp(-rho * t0)
    return scale * u / (1.0 - alpha), scale * r


def segment_reward(x0: float, x1: float, fp: FlowParams, cp: CriterionParams,
                   mode: str = "average", t0: float = 0.0) -> float:
    """Reward accumulated while the rate grows from ``x0`` to ``x1``.

    ``mode="average"`` integrates the plain reward rate in closed form;
    ``mode="discounted"`` weights by ``exp(-rho*t)`` with the arc starting at
    time ``t0`` and integrates adaptively.
    """
    if mode == "average":
        rho = None
    elif mode == "discounted":
        if cp.rho is None:
            raise ParameterError("discounted mode needs cp.rho")
        if not t0 >= 0:
            raise DomainError(f"t0 must be >= 0, got {t0}")
        rho = cp.rho
    else:
        raise ValueError(f"unknown mode {mode!r}")
    u, r = segment_integrals(x0, x1, fp, cp.alpha, rho, t0)
    return u - cp.lam * r
