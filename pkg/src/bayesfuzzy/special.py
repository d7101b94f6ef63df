"""Digamma, trigamma and the upper incomplete gamma function.

The polygamma functions are evaluated in pure numpy (a fixed six-step
upward recurrence followed by the asymptotic Bernoulli series) so that results do not
depend on which special-function backend is installed.
"""
import math

import numpy as np

from .errors import ConvergenceError, DomainError

_SHIFT = 6.0

# Bernoulli-series coefficients B_2k / (2k) for digamma, k = 1..7
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_2k for trigamma, k = 1..7
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _as_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("polygamma functions require x > 0")
    return x


def _shift(x, order):
    """Recurrence from x to x + _SHIFT; returns (z, correction)."""
    z = x + _SHIFT
    inv = 1.0 / x
    acc = inv if order == 0 else inv * inv
    for k in range(1, int(_SHIFT)):
        inv = 1.0 / (x + k)
        acc = acc + (inv if order == 0 else inv * inv)
    return z, acc


def _digamma_raw(x):
    z, acc = _shift(x, 0)
    w = 1.0 / (z * z)
    series = 0.0
    for coef in reversed(_DIGAMMA_SERIES):
        series = (series + coef) * w
    return np.log(z) - 0.5 / z - series - acc


def _trigamma_raw(x):
    z, acc = _shift(x, 1)
    w = 1.0 / (z * z)
    series = 0.0
    for coef in reversed(_TRIGAMMA_SERIES):
        series = (series + coef) * w
    return 1.0 / z + 0.5 * w + series / z + acc


def _psi01(x):
    """Digamma and trigamma together, sharing the recurrence (no checks)."""
    if x.min() >= _SHIFT:
        z, acc0, acc1 = x, 0.0, 0.0
    else:
        inv = 1.0 / x
        acc0 = inv
        acc1 = inv * inv
        for k in range(1, int(_SHIFT)):
            inv = 1.0 / (x + k)
            acc0 = acc0 + inv
            acc1 = acc1 + inv * inv
        z = x + _SHIFT
    iz = 1.0 / z
    w = iz * iz
    s0 = 0.0
    s1 = 0.0
    for c0, c1 in zip(reversed(_DIGAMMA_SERIES), reversed(_TRIGAMMA_SERIES)):
        s0 = (s0 + c0) * w
        s1 = (s1 + c1) * w
    return np.log(z) - 0.5 * iz - s0 - acc0, iz + 0.5 * w + s1 * iz + acc1


def digamma(x):
    """Digamma function psi(x) for x > 0 (elementwise)."""
    out = _digamma_raw(_as_positive(x))
    return out if out.ndim else float(out)


def trigamma(x):
    """Trigamma function psi'(x) for x > 0 (elementwise)."""
    out = _trigamma_raw(_as_positive(x))
    return out if out.ndim else float(out)


def polygamma(order, x):
    """Polygamma function of order 0 (digamma) or 1 (trigamma)."""
    if order == 0:
        return digamma(x)
    if order == 1:
        return trigamma(x)
    raise DomainError(f"polygamma order {order} not supported (only 0 and 1)")


def upper_incomplete_gamma_scaled(a, x, rtol=1e-15, max_iter=10_000):
    """``exp(x) * Gamma(a, x)``, finite even where Gamma(a, x) underflows.

    Uses the Legendre continued fraction (modified Lentz) for ``x >= a + 1``
    and ``Gamma(a) - gamma(a, x)`` with the power series otherwise.

    Parameters
    ----------
    a : float
        Shape, strictly positive.
    x : float
        Lower integration limit, non-negative.
    """
    a = float(a)
    x = float(x)
    if a <= 0 or x < 0:
        raise DomainError("upper incomplete gamma needs a > 0 and x >= 0")
    if x == 0:
        return math.gamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(max_iter):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * rtol:
                break
        else:
            raise ConvergenceError("incomplete gamma series did not converge")
        return math.exp(x) * math.gamma(a) - total * math.exp(a * math.log(x))

    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rtol:
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge")
    return math.exp(a * math.log(x)) * h


def upper_incomplete_gamma(a, x):
    """Non-normalised upper incomplete gamma function Gamma(a, x), a > 0."""
    return math.exp(-float(x)) * upper_incomplete_gamma_scaled(a, x)
