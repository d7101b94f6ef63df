"""LR, trapezoidal and Beta-type fuzzy numbers and their summary statistics.

A Beta fuzzy number with mode ``m``, precision ``s`` and support
``[lb, ub]`` has, on the unit scale ``x* = (x - lb) / (ub - lb)``, the
membership

    A(x) = (x* / m*)^(s m*) * ((1 - x*) / (1 - m*))^(s (1 - m*)),

which is the Beta(1 + s m*, 1 + s (1 - m*)) kernel rescaled to peak at 1.
The vectorised helpers at the bottom of the module work on arrays of
fuzzy numbers and are what the posterior predictive checks use.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import betainc, betaln

from .errors import ConversionError, IntegrationError, ParameterError

_CUT_TOL = 1e-10
_QUAD_RTOL = 1e-8


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ParameterError(f"interval needs lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass(frozen=True)
class TrapezoidalFuzzyNumber:
    """Trapezoidal LR fuzzy number with linear shape functions.

    ``a2 == a3`` gives a triangular fuzzy number.
    """

    a1: float
    a2: float
    a3: float
    a4: float

    def __post_init__(self):
        if not (self.a1 <= self.a2 <= self.a3 <= self.a4):
            raise ParameterError(
                f"trapezoid needs a1 <= a2 <= a3 <= a4, got {(self.a1, self.a2, self.a3, self.a4)}"
            )

    @property
    def support(self):
        return Interval(self.a1, self.a4)

    def membership(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        core = (x >= self.a2) & (x <= self.a3)
        out[core] = 1.0
        if self.a2 > self.a1:
            left = (x >= self.a1) & (x < self.a2)
            out[left] = (x[left] - self.a1) / (self.a2 - self.a1)
        if self.a4 > self.a3:
            right = (x > self.a3) & (x <= self.a4)
            out[right] = (self.a4 - x[right]) / (self.a4 - self.a3)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class BetaFuzzyNumber:
    """Beta-type fuzzy number in mode/precision form."""

    m: float
    s: float
    lb: float = 0.0
    ub: float = 1.0

    def __post_init__(self):
        if not self.lb < self.ub:
            raise ParameterError("Beta fuzzy number needs lb < ub")
        if not self.lb < self.m < self.ub:
            raise ParameterError(f"mode {self.m} outside ({self.lb}, {self.ub})")
        if not self.s > 0:
            raise ParameterError("precision s must be positive")

    @property
    def m_star(self):
        return (self.m - self.lb) / (self.ub - self.lb)

    @property
    def shapes(self):
        """Beta shapes ``(p, q) = (1 + s m*, 1 + s (1 - m*))`` of the kernel."""
        ms = self.m_star
        return 1.0 + self.s * ms, 1.0 + self.s * (1.0 - ms)

    @property
    def support(self):
        return Interval(self.lb, self.ub)

    def log_membership(self, x):
        return _log_membership(x, self.m, self.s, self.lb, self.ub)

    def membership(self, x):
        out = np.exp(self.log_membership(x))
        return out if np.ndim(out) else float(out)


def _log_membership(x, m, s, lb, ub):
    w = ub - lb
    xs = (np.asarray(x, dtype=float) - lb) / w
    ms = (m - lb) / w
    inside = (xs > 0) & (xs < 1)
    xc = np.where(inside, xs, 0.5)
    out = s * (ms * np.log(xc / ms) + (1 - ms) * np.log((1 - xc) / (1 - ms)))
    return np.where(inside, out, -np.inf)


def membership(fn: BetaFuzzyNumber, x):
    """Membership grade of ``x`` in ``fn``; zero outside the open support."""
    return fn.membership(x)


# --------------------------------------------------------------------------
# alpha-cuts


def _cut_bounds(m, s, lb, ub, alpha, tol=_CUT_TOL):
    """Vectorised bisection for the alpha-cut of Beta fuzzy numbers, 0 < alpha < 1."""
    m, s, lb, ub, alpha = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, s, lb, ub, alpha)))
    w = ub - lb
    ms = (m - lb) / w
    log_alpha = np.log(alpha)

    def logmem(xs):
        return s * (ms * np.log(xs / ms) + (1 - ms) * np.log((1 - xs) / (1 - ms)))

    n_iter = int(math.ceil(math.log2(1.0 / (tol / max(float(np.max(w)), 1e-300))))) + 2
    # left flank: membership increases on (0, m*)
    lo_a, lo_b = np.zeros_like(ms), ms.copy()
    hi_a, hi_b = ms.copy(), np.ones_like(ms)
    for _ in range(n_iter):
        mid = 0.5 * (lo_a + lo_b)
        above = np.where(mid > 0, logmem(np.where(mid > 0, mid, 0.5)) >= log_alpha, False)
        lo_b = np.where(above, mid, lo_b)
        lo_a = np.where(above, lo_a, mid)
        mid = 0.5 * (hi_a + hi_b)
        above = np.where(mid < 1, logmem(np.where(mid < 1, mid, 0.5)) >= log_alpha, False)
        hi_a = np.where(above, mid, hi_a)
        hi_b = np.where(above, hi_b, mid)
    return lb + w * lo_b, lb + w * hi_a


def alpha_cut(fn: BetaFuzzyNumber, alpha: float) -> Interval:
    """Closed level set ``{x : A(x) >= alpha}``; the support for ``alpha == 0``."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return Interval(fn.lb, fn.ub)
    if alpha == 1.0:
        return Interval(fn.m, fn.m)
    lo, hi = _cut_bounds(fn.m, fn.s, fn.lb, fn.ub, alpha)
    return Interval(float(lo), float(hi))


# --------------------------------------------------------------------------
# summary statistics by quadrature


def _quad(f, a, b, points=None):
    pts = [p for p in (points or ()) if a < p < b]
    # the error estimate is checked below, scipy's warning is redundant
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, points=pts or None, epsabs=0.0, epsrel=_QUAD_RTOL, limit=400)
    if not np.isfinite(val) or err > max(1e-6 * abs(val), 1e-13):
        raise IntegrationError(f"quadrature did not converge: value {val:g}, error {err:g}")
    return val


def centroid(fn: BetaFuzzyNumber) -> float:
    """Centre of gravity of the membership function."""
    # outside the 1e-30 cut the integrand is negligible at double precision
    eff = alpha_cut(fn, 1e-30)
    mem = lambda x: math.exp(float(fn.log_membership(x)))
    num = _quad(lambda x: x * mem(x), eff.lo, eff.hi, points=[fn.m])
    den = _quad(mem, eff.lo, eff.hi, points=[fn.m])
    return num / den


def fuzziness_index(mem, lb, ub, breakpoints=()):
    """Kaufman index of an arbitrary membership function on [lb, ub].

    Linear distance to the nearest crisp set, normalised so that the
    constant profile 0.5 scores 1.
    """
    dist = lambda x: abs(mem(x) - (1.0 if mem(x) >= 0.5 else 0.0))
    pts = sorted(set(p for p in breakpoints if lb < p < ub))
    edges = [lb, *pts, ub]
    total = sum(_quad(dist, a, b) if b > a else 0.0 for a, b in zip(edges[:-1], edges[1:]))
    return 2.0 * total / (ub - lb)


def kaufman_index(fn: BetaFuzzyNumber) -> float:
    """Kaufman's fuzziness index of a Beta fuzzy number, in [0, 1]."""
    half = alpha_cut(fn, 0.5)
    eff = alpha_cut(fn, 1e-30)
    return fuzziness_index(fn.membership, fn.lb, fn.ub, breakpoints=(eff.lo, half.lo, fn.m, half.hi, eff.hi))


# --------------------------------------------------------------------------
# trapezoid -> Beta conversion

_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)


def _gl_nodes(edges):
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            xs.append(0.5 * (b - a) * _GL_X + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * _GL_W)
    return np.concatenate(xs), np.concatenate(ws)


def _unit_trapezoid(tp):
    w = tp.a4 - tp.a1
    b2, b3 = (tp.a2 - tp.a1) / w, (tp.a3 - tp.a1) / w
    unit = TrapezoidalFuzzyNumber(0.0, b2, b3, 1.0)
    return unit, b2, b3


def _l2_residual(ms, s, unit_tp, b2, b3):
    xs, ws = _gl_nodes(sorted({0.0, b2, b3, ms, 1.0}))
    beta_mem = np.exp(_log_membership(xs, ms, s, 0.0, 1.0))
    diff = beta_mem - unit_tp.membership(xs)
    return float(np.sum(ws * diff * diff))


def trapezoid_to_beta(tp: TrapezoidalFuzzyNumber, maxiter=500) -> BetaFuzzyNumber:
    """Beta fuzzy number closest to ``tp`` in integrated squared membership.

    The support is pinned to ``[a1, a4]``; mode and precision are fitted by
    L-BFGS-B starting from the core midpoint and the precision whose
    0.5-cut is as wide as the trapezoid's.
    """
    if not tp.a1 < tp.a4:
        raise ParameterError("cannot convert a crisp trapezoid (a1 == a4)")
    unit, b2, b3 = _unit_trapezoid(tp)
    m0 = min(max(0.5 * (b2 + b3), 1e-4), 1 - 1e-4)
    target_width = 0.5 + 0.5 * (b3 - b2)

    def half_width(log_s):
        lo, hi = _cut_bounds(m0, math.exp(log_s), 0.0, 1.0, 0.5)
        return float(hi - lo) - target_width

    lo_ls, hi_ls = -8.0, 16.0
    if half_width(lo_ls) * half_width(hi_ls) < 0:
        log_s0 = optimize.brentq(half_width, lo_ls, hi_ls, xtol=1e-10)
    else:
        log_s0 = 0.0

    obj = lambda v: _l2_residual(v[0], math.exp(v[1]), unit, b2, b3)
    res = optimize.minimize(
        obj,
        x0=[m0, log_s0],
        method="L-BFGS-B",
        bounds=[(1e-6, 1 - 1e-6), (math.log(1e-3), math.log(1e7))],
        options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-10},
    )
    residual = res.fun * (tp.a4 - tp.a1)
    if not res.success and "ABNORMAL" not in str(res.message).upper():
        raise ConversionError(f"trapezoid conversion failed: {res.message}", residual=residual)
    ms, log_s = (float(v) for v in res.x)
    return BetaFuzzyNumber(tp.a1 + ms * (tp.a4 - tp.a1), math.exp(log_s), tp.a1, tp.a4)


def conversion_residual(tp: TrapezoidalFuzzyNumber, fn: BetaFuzzyNumber) -> float:
    """Integrated squared membership difference on the trapezoid's support."""
    unit, b2, b3 = _unit_trapezoid(tp)
    return _l2_residual(fn.m_star, fn.s, unit, b2, b3) * (tp.a4 - tp.a1)


# --------------------------------------------------------------------------
# vectorised statistics for arrays of Beta fuzzy numbers


def beta_centroid(m, s, lb=0.0, ub=1.0):
    """Closed-form centroid: the mean of the Beta(1 + s m*, 1 + s(1 - m*)) kernel."""
    ms = (np.asarray(m, float) - lb) / (ub - lb)
    return lb + (ub - lb) * (1.0 + s * ms) / (2.0 + s)


def beta_cut_width(m, s, lb=0.0, ub=1.0, alpha=0.01):
    """Width of the alpha-cut for arrays of Beta fuzzy numbers."""
    lo, hi = _cut_bounds(m, s, lb, ub, alpha)
    return hi - lo


def beta_kaufman(m, s, lb=0.0, ub=1.0):
    """Closed-form Kaufman index via the regularised incomplete Beta function."""
    m, s, lb, ub = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, s, lb, ub)))
    ms = (m - lb) / (ub - lb)
    p, q = 1.0 + s * ms, 1.0 + s * (1.0 - ms)
    log_c = s * (ms * np.log(ms) + (1 - ms) * np.log1p(-ms))
    area = np.exp(betaln(p, q) - log_c)
    lo, hi = _cut_bounds(ms, s, 0.0, 1.0, 0.5)
    core_area = area * (betainc(p, q, hi) - betainc(p, q, lo))
    return 2.0 * (area - 2.0 * core_area + (hi - lo))
