"""Free-boundary solution of the discounted problem (additive increase, 1 < alpha < 2).

Below the threshold the value function solves the linear ODE

    c(x) - rho W(x) + a W'(x) = 0,

whose general solution ``W_tilde(x; w1)`` is pinned by its value ``w1`` at
``x = 1``.  Solutions also carry the value at the threshold, which pins the
same curve without the ``exp(k |x_bar - 1|)`` loss of precision.  The threshold is the unique positive root of ``H``; smooth pasting
of ``W_tilde(x)`` and ``W_tilde(b x)`` at that root fixes ``w1``.

Every formula needs ``int exp(-k u) u**(-alpha) du`` with ``k = rho/a``.  It
is evaluated by composite Gauss-Legendre on panels whose width ratio is at
most 2 and over which ``exp(-k u)`` varies by at most ``e**4``; the integrand
is always rescaled so the exponential factor is <= 1 on the panel set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import AmbiguousRootError, DomainError, NoRootError, UnsupportedParameterError
from .model import CriterionParams, FlowParams, ThresholdPolicy, utility

_GL_X, _GL_W = leggauss(20)
_CUTOFF = 50.0  # exp(-50) relative truncation of the decaying tail
_MAX_KW = 4.0  # max exponent drop across one panel


def _scaled_integral(lo, hi, k: float, alpha: float):
    """``int_lo^hi exp(-k (u - lo)) u**(-alpha) du`` for ``0 < lo <= hi`` (arrays)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    shape = lo.shape
    lo = lo.ravel()
    hi = hi.ravel()
    if k > 0:
        hi = np.minimum(hi, lo + _CUTOFF / k)
    out = np.zeros(lo.shape)
    live = hi > lo
    if not live.any():
        return out.reshape(shape)
    L, Hh = lo[live], hi[live]
    lr = np.log(Hh / L)
    n = np.maximum(np.ceil(lr / math.log(2.0)), 1.0)
    if k > 0:
        n = np.maximum(n, np.ceil(k * Hh * lr / _MAX_KW))
    n = n.astype(np.int64)
    owner = np.repeat(np.arange(L.size), n)
    starts = np.cumsum(n) - n
    j = np.arange(owner.size) - starts[owner]
    step = lr[owner] / n[owner]
    left = L[owner] * np.exp(j * step)
    right = L[owner] * np.exp((j + 1) * step)
    right = np.where(j + 1 == n[owner], Hh[owner], right)
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    f = np.exp(-k * (u - L[owner][:, None])) * u ** (-alpha)
    panel = half * (f @ _GL_W)
    out[live] = np.bincount(owner, weights=panel, minlength=L.size)
    return out.reshape(shape)


def shifted_integral(lo, hi, k: float, alpha: float, shift):
    """``int_lo^hi exp(-k (u - shift)) u**(-alpha) du``, signed, vectorised.

    Computed on the ascending interval with the exponential rescaled at its
    left end, then multiplied by ``exp(-k (min(lo,hi) - shift))``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if (lo <= 0).any() or (hi <= 0).any():
        raise DomainError("integration limits must be > 0")
    a_ = np.minimum(lo, hi)
    b_ = np.maximum(lo, hi)
    sign = np.where(hi >= lo, 1.0, -1.0)
    with np.errstate(over="ignore"):
        fac = np.exp(-k * (a_ - np.asarray(shift, dtype=float)))
    out = sign * fac * _scaled_integral(a_, b_, k, alpha)
    return out if out.ndim else float(out)


def exp_power_integral(lo, hi, rho: float, a: float, alpha: float):
    """``int_lo^hi exp(-rho u / a) u**(-alpha) du``; reversing the limits flips the sign."""
    return shifted_integral(lo, hi, rho / a, alpha, 0.0)


def _upper_gamma(s: float, z: float) -> float:
    if not z > 0:
        raise DomainError(f"z must be > 0, got {z}")
    if not s < 1:
        raise DomainError("quadrature form needs s < 1")
    # int_z^Z e^{-u} u^{s-1} du, Z = z + 50; the tail is below Z**(s-1) e**(-Z)
    return float(math.exp(-z) * _scaled_integral(z, z + _CUTOFF, 1.0, 1.0 - s))


def incomplete_gamma_upper(s: float, z: float) -> float:
    """Upper incomplete gamma ``Gamma(s, z)`` for ``-1 < s < 0``."""
    if not -1 < s < 0:
        raise UnsupportedParameterError(f"s must lie in (-1, 0), got {s}")
    return _upper_gamma(s, z)


# -- parameters -------------------------------------------------------------

@dataclass(frozen=True)
class DiscountedParams:
    a: float
    b: float
    alpha: float
    lam: float
    rho: float

    def __post_init__(self):
        FlowParams(self.a, self.b, 0.0)
        CriterionParams(self.alpha, self.lam, self.rho)
        if not 1 < self.alpha < 2:
            raise UnsupportedParameterError(f"discounted solver needs 1 < alpha < 2, got {self.alpha}")
        if self.rho is None or not self.rho > 0:
            raise UnsupportedParameterError("discounted solver needs rho > 0")

    @classmethod
    def from_params(cls, fp: FlowParams, cp: CriterionParams) -> "DiscountedParams":
        if fp.gamma != 0:
            raise UnsupportedParameterError("discounted solver needs gamma = 0 (additive increase)")
        if cp.rho is None:
            raise UnsupportedParameterError("discounted solver needs rho")
        return cls(fp.a, fp.b, cp.alpha, cp.lam, cp.rho)

    @property
    def flow(self) -> FlowParams:
        return FlowParams(self.a, self.b, 0.0)

    @property
    def crit(self) -> CriterionParams:
        return CriterionParams(self.alpha, self.lam, self.rho)

    @property
    def k(self) -> float:
        return self.rho / self.a

    @property
    def K(self) -> float:
        # constant multiplying the homogeneous solution together with w1
        rho, lam, a = self.rho, self.lam, self.a
        return lam / rho + lam * a / rho**2 + 1.0 / (rho * (self.alpha - 1.0))


PAPER_PARAMS = DiscountedParams(a=0.2, b=0.5, alpha=1.3, lam=2.0, rho=1.0)


# -- W_tilde ----------------------------------------------------------------

def _particular(x, p: DiscountedParams):
    """Non-homogeneous part of ``W_tilde`` that needs no quadrature."""
    return -(x ** (1.0 - p.alpha)) / (p.rho * (p.alpha - 1.0)) - p.lam * x / p.rho - p.a * p.lam / p.rho**2


def _head(x, w: float, anchor: float, p: DiscountedParams):
    """``W_tilde - _particular``: homogeneous term plus the quadrature term.

    For ``x >= anchor`` the two exponentially large pieces share the factor
    ``exp(k (x - anchor))`` and are combined before scaling; below the anchor
    both pieces decay and are summed directly.
    """
    k, al, rho = p.k, p.alpha, p.rho
    C = w - _particular(anchor, p)
    up = x >= anchor
    with np.errstate(over="ignore", invalid="ignore"):
        E = np.exp(k * (x - anchor))
        J_up = shifted_integral(anchor, np.maximum(x, anchor), k, al, anchor)
        J_dn = shifted_integral(np.minimum(x, anchor), anchor, k, al, np.minimum(x, anchor))
        return np.where(up, E * (C - J_up / rho), E * C + J_dn / rho)


def W_tilde(x, w1: float, p: DiscountedParams, anchor: float = 1.0):
    """General solution of ``c - rho W + a W' = 0`` with ``W(anchor) = w1`` (vectorised).

    The default anchor 1 matches the usual ``w1`` parametrisation; anchoring
    near the point of interest avoids amplifying the rounding of ``w1`` by
    ``exp(k |x - 1|)``.
    """
    x = np.asarray(x, dtype=float)
    if (x <= 0).any():
        raise DomainError("x must be > 0")
    out = _head(x, w1, anchor, p) + _particular(x, p)
    return out if out.ndim else float(out)


def dW_tilde(x, w1: float, p: DiscountedParams, anchor: float = 1.0):
    """Analytic derivative of :func:`W_tilde`; the ``x**-alpha`` terms cancel."""
    x = np.asarray(x, dtype=float)
    if (x <= 0).any():
        raise DomainError("x must be > 0")
    out = p.k * _head(x, w1, anchor, p) - p.lam / p.rho
    return out if out.ndim else float(out)


def d2W_tilde(x, w1: float, p: DiscountedParams, anchor: float = 1.0):
    """Second derivative from the ODE: ``a W'' = rho W' - c'(x)``."""
    x = np.asarray(x, dtype=float)
    cprime = x ** (-p.alpha) - p.lam
    out = (p.rho * dW_tilde(x, w1, p, anchor) - cprime) / p.a
    return out if np.ndim(out) else float(out)


def no_impulse_boundary(p: DiscountedParams) -> float:
    """``w1*`` selecting the transversal solution: the value of never signalling."""
    rho, a, al, lam, k = p.rho, p.a, p.alpha, p.lam, p.k
    return (
        math.exp(k) / rho * k ** (al - 1.0) * incomplete_gamma_upper(1.0 - al, k)
        - 1.0 / (rho * (al - 1.0))
        - lam * (rho + a) / rho**2
    )


def W_star(x, p: DiscountedParams):
    """Discounted reward of the no-impulse policy from ``x``.

    The transversal curve has ``W - particular = (1/rho) int_x^inf exp(-k (u-x)) u**-alpha du``,
    which is evaluated directly instead of through ``w1*`` so large ``x`` cannot overflow.
    """
    x = np.asarray(x, dtype=float)
    if (x <= 0).any():
        raise DomainError("x must be > 0")
    k = p.k
    tail = _scaled_integral(x, x + _CUTOFF / k, k, p.alpha)
    out = tail / p.rho + _particular(x, p)
    return out if out.ndim else float(out)


# -- free boundary ----------------------------------------------------------

def _bracket_term(x, p: DiscountedParams):
    b, al, lam = p.b, p.alpha, p.lam
    return x ** (1.0 - al) * (1.0 - b ** (1.0 - al)) / (al - 1.0) + lam * x * (1.0 - b)


def H_scaled(x, p: DiscountedParams):
    """``exp(-rho x (1-b)/a) * H(x)``: same sign and roots as ``H``, never overflows."""
    x = np.asarray(x, dtype=float)
    if (x <= 0).any():
        raise DomainError("x must be > 0")
    b, rho, a, lam, k = p.b, p.rho, p.a, p.lam, p.k
    s = k * x * (1.0 - b)
    J = shifted_integral(b * x, x, k, p.alpha, b * x)
    out = (
        -np.expm1(-s) * (1.0 - b) * lam * a / rho
        - (1.0 - b) * J
        - (1.0 - b * np.exp(-s)) * _bracket_term(x, p)
    )
    return out if out.ndim else float(out)


def H(x, p: DiscountedParams):
    """Free-boundary function whose unique positive root is the threshold."""
    x = np.asarray(x, dtype=float)
    s = p.k * x * (1.0 - p.b)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(s) * H_scaled(x, p)
    return out if out.ndim else float(out)


def limit_threshold(b: float, alpha: float, lam: float) -> float:
    """Threshold in the vanishing-discount limit."""
    if not 0 < b < 1:
        raise UnsupportedParameterError(f"b must lie in (0, 1), got {b}")
    if not lam > 0:
        from .errors import ZeroPriceError

        raise ZeroPriceError(f"lam must be > 0, got {lam}")
    if not 1 < alpha < 2:
        raise UnsupportedParameterError(f"alpha must lie in (1, 2), got {alpha}")
    return (2.0 * (1.0 - b ** (2.0 - alpha)) / (lam * (1.0 - b**2) * (2.0 - alpha))) ** (1.0 / alpha)


def threshold_value(x_bar: float, p: DiscountedParams) -> float:
    """``W_tilde(x_bar)`` from value matching, solved with the curve anchored at ``x_bar``."""
    b, k, rho = p.b, p.k, p.rho
    bx = b * x_bar
    s = k * x_bar * (1.0 - b)
    J = shifted_integral(bx, x_bar, k, p.alpha, bx)
    num = _particular(bx, p) - math.exp(-s) * _particular(x_bar, p) + J / rho
    return num / -math.expm1(-s)


def boundary_constant(x_bar: float, p: DiscountedParams) -> float:
    """``w1`` making ``W_tilde(x_bar) == W_tilde(b x_bar)``."""
    rho, a, al, lam, b, k = p.rho, p.a, p.alpha, p.lam, p.b, p.k
    bx = b * x_bar
    # e^{k} int_1^{x_bar} e^{-ku} u^-alpha du, anchored at the smaller limit
    lo1 = min(1.0, x_bar)
    first = math.exp(k * (1.0 - lo1)) * shifted_integral(1.0, x_bar, k, al, lo1) / rho
    inner = (
        x_bar ** (1.0 - al) * (1.0 - b ** (1.0 - al)) / (rho * (al - 1.0))
        + (1.0 - b) * lam * x_bar / rho
        + shifted_integral(bx, x_bar, k, al, bx) / rho
    )
    denom = math.exp(k * (bx - 1.0)) - math.exp(k * (x_bar - 1.0))
    return first - lam * (rho + a) / rho**2 - 1.0 / (rho * (al - 1.0)) - inner / denom


@dataclass(frozen=True)
class DiscountedSolution:
    """Threshold and boundary constant.

    ``pin`` is an optional ``(x, W_tilde(x))`` pair describing the same curve
    as ``w1`` but anchored where it is well conditioned; evaluation prefers it.
    """

    x_bar: float
    w1: float
    params: DiscountedParams
    scan: tuple = field(default=(), repr=False, compare=False)
    pin: tuple | None = None

    @property
    def anchor(self) -> tuple[float, float]:
        """``(value, location)`` used to evaluate ``W_tilde``."""
        if self.pin is None:
            return self.w1, 1.0
        return self.pin[1], self.pin[0]

    def W_tilde(self, x):
        w, at = self.anchor
        return W_tilde(x, w, self.params, at)

    def dW_tilde(self, x):
        w, at = self.anchor
        return dW_tilde(x, w, self.params, at)

    def d2W_tilde(self, x):
        w, at = self.anchor
        return d2W_tilde(x, w, self.params, at)

    @property
    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.x_bar, self.params.b)


def scan_H(p: DiscountedParams, lo=1e-4, hi=1e4, per_decade=64):
    """Log-grid table ``(x, H_scaled(x))``."""
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    xs = np.geomspace(lo, hi, n)
    return xs, H_scaled(xs, p)


def _sign_changes(xs, hs, floor=1e-12):
    """Indices ``i`` with a +/- crossing between ``xs[i]`` and ``xs[i+1]``.

    Values with ``|h| <= floor`` are treated as unsigned and skipped.
    """
    signs = np.where(hs > floor, 1, np.where(hs < -floor, -1, 0))
    idx = np.flatnonzero(signs)
    down, up = [], []
    for i, j in zip(idx[:-1], idx[1:]):
        if signs[i] > 0 > signs[j]:
            down.append((i, j))
        elif signs[i] < 0 < signs[j]:
            up.append((i, j))
    return down, up


def solve_threshold_disc(p: DiscountedParams, lo=1e-4, hi=1e4, per_decade=64,
                         rtol=1e-12, expansions=2) -> DiscountedSolution:
    """Locate the threshold root of ``H`` and the boundary constant ``w1``.

    Without a sign change the scan range is widened a hundredfold at each end,
    up to ``expansions`` times.
    """
    for _ in range(expansions + 1):
        xs, hs = scan_H(p, lo, hi, per_decade)
        down, up = _sign_changes(xs, hs)
        if down:
            break
        lo, hi = lo * 1e-2, hi * 1e2
    table = tuple(zip(xs.tolist(), hs.tolist()))
    if not down:
        raise NoRootError("H has no +/- sign change on the scanned range", {"scan": table})
    if len(down) > 1 or up:
        raise AmbiguousRootError(
            f"H has {len(down)} +/- and {len(up)} -/+ sign changes", {"scan": table}
        )
    i, j = down[0]
    x_bar = brentq(lambda x: H_scaled(x, p), xs[i], xs[j], xtol=1e-300, rtol=rtol, maxiter=200)
    w_bar = threshold_value(x_bar, p)
    w1 = float(W_tilde(1.0, w_bar, p, x_bar))
    return DiscountedSolution(x_bar, w1, p, table, (x_bar, w_bar))


# -- value function ---------------------------------------------------------

class ValueFunctionW:
    """Optimal discounted value: ``W_tilde`` below ``x_bar``, ``W(b**v x)`` above."""

    def __init__(self, solution: DiscountedSolution):
        self.solution = solution
        self.params = solution.params
        self.policy = solution.policy

    @property
    def x_bar(self) -> float:
        return self.solution.x_bar

    def piece(self, x, k):
        return self.solution.W_tilde(self.params.b**k * np.asarray(x, dtype=float))

    def dpiece(self, x, k):
        s = self.params.b**k
        return s * self.solution.dW_tilde(s * np.asarray(x, dtype=float))

    def counts(self, x) -> np.ndarray:
        return np.array([self.policy.count(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))

    def W(self, x):
        x = np.asarray(x, dtype=float)
        if (x <= 0).any():
            raise DomainError("x must be > 0")
        out = self.solution.W_tilde(self.params.b ** self.counts(x) * x)
        return out if np.ndim(out) else float(out)

    def dW(self, x):
        x = np.asarray(x, dtype=float)
        if (x <= 0).any():
            raise DomainError("x must be > 0")
        s = self.params.b ** self.counts(x)
        out = s * self.solution.dW_tilde(s * x)
        return out if np.ndim(out) else float(out)

    def flow_term(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        c = utility(x, p.alpha) - p.lam * x
        out = c - p.rho * self.W(x) + p.a * self.dW(x)
        return out if np.ndim(out) else float(out)


def value_W(x, vf: ValueFunctionW):
    return vf.W(x)


def bellman_residual_disc(x: float, vf: ValueFunctionW) -> tuple[float, float]:
    """``(flow_residual, impulse_residual)`` of the discounted Bellman equation."""
    from .average import impulse_depth

    if not x > 0:
        raise DomainError(f"x must be > 0, got {x}")
    b = vf.params.b
    M = impulse_depth(x, vf.x_bar, b)
    vals = vf.W(np.array([x] + [b**m * x for m in range(1, M + 1)]))
    return float(vf.flow_term(x)), float(np.max(vals[1:] - vals[0]))


def bellman_residuals_disc(xs, vf: ValueFunctionW):
    """Vectorised :func:`bellman_residual_disc` over a grid."""
    from .average import impulse_depth

    xs = np.asarray(xs, dtype=float)
    b = vf.params.b
    flow = vf.flow_term(xs)
    M = max(impulse_depth(float(x), vf.x_bar, b) for x in (xs.min(), xs.max()))
    depth = np.array([impulse_depth(float(x), vf.x_bar, b) for x in xs])
    W0 = vf.W(xs)
    imp = np.full(xs.shape, -np.inf)
    for m in range(1, M + 1):
        use = depth >= m
        if use.any():
            d = vf.W(b**m * xs[use]) - W0[use]
            imp[use] = np.maximum(imp[use], d)
    return flow, imp


# -- diagnostics ------------------------------------------------------------

def z_curve(x, p: DiscountedParams):
    """Where ``W_tilde`` meets this curve its slope vanishes."""
    x = np.asarray(x, dtype=float)
    return -(x ** (1.0 - p.alpha) / (p.alpha - 1.0) + p.lam * x) / p.rho


def inflection_curve(x, p: DiscountedParams):
    """Where ``W_tilde`` meets this curve its curvature vanishes."""
    x = np.asarray(x, dtype=float)
    return p.a * (x ** (-p.alpha) - p.lam) / p.rho**2 + z_curve(x, p)


def diagnostic_curves(x_grid, vf: ValueFunctionW) -> np.ndarray:
    """Columns ``x, W(x), z(x), v_infl(x)`` for plotting the value function."""
    x = np.asarray(x_grid, dtype=float)
    p = vf.params
    return np.column_stack([x, vf.W(x), z_curve(x, p), inflection_curve(x, p)])
