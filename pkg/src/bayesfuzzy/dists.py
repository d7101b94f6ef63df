"""Densities, log-density derivatives and samplers used by the model.

Every bounded family lives on the unit interval; rescaling to a response
range ``(lb, ub)`` is done by the caller (see :mod:`bayesfuzzy.model`).
All functions broadcast over numpy arrays.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats
from scipy.special import betaln, expit, gammaln, log_ndtr, logit

from .errors import DomainError, IntegrationError, ParameterError
from .special import upper_incomplete_gamma_scaled

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * _LOG_2PI


def _log1mexp(x):
    """log(1 - exp(x)) for x < 0, accurate on both sides of -log 2."""
    x = np.asarray(x, dtype=float)
    return np.where(x > -0.6931471805599453, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def _interior(y, lo, hi, name):
    y = np.asarray(y, dtype=float)
    if np.any(~((y > lo) & (y < hi))):
        raise DomainError(f"{name}: derivative requested outside the open support")
    return y


def _log_normal_mass(lo_z, hi_z):
    """log(Phi(hi_z) - Phi(lo_z)), stable in both tails."""
    lo_z, hi_z = np.broadcast_arrays(np.asarray(lo_z, float), np.asarray(hi_z, float))
    # work in the upper tail when the interval sits right of zero
    flip = lo_z > 0
    a = np.where(flip, -hi_z, lo_z)
    b = np.where(flip, -lo_z, hi_z)
    lb_ = log_ndtr(b)
    la_ = log_ndtr(a)
    return lb_ + _log1mexp(np.minimum(la_ - lb_, -1e-300))


# --------------------------------------------------------------------------
# families on the unit interval


class Beta:
    """Beta(a, b) on (0, 1)."""

    name = "beta"
    support = (0.0, 1.0)

    @staticmethod
    def logpdf(y, a, b):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < 1)
        yc = np.where(inside, y, 0.5)
        out = (a - 1) * np.log(yc) + (b - 1) * np.log1p(-yc) - betaln(a, b)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, a, b):
        y = _interior(y, 0, 1, "beta")
        return (a - 1) / y - (b - 1) / (1 - y)

    @staticmethod
    def d2logpdf(y, a, b):
        y = _interior(y, 0, 1, "beta")
        return -(a - 1) / y**2 - (b - 1) / (1 - y) ** 2

    @staticmethod
    def sample(rng, a, b, size=None):
        return rng.beta(a, b, size=size)

    @staticmethod
    def mean(a, b):
        return a / (a + b)

    @staticmethod
    def var(a, b):
        t = a + b
        return a * b / (t * t * (t + 1))


class LogitNormal:
    """Logistic transform of N(mu, sigma^2)."""

    name = "logitnormal"
    support = (0.0, 1.0)

    @staticmethod
    def logpdf(y, mu, sigma):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < 1)
        yc = np.where(inside, y, 0.5)
        z = (logit(yc) - mu) / sigma
        out = -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI - np.log(yc) - np.log1p(-yc)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, mu, sigma):
        y = _interior(y, 0, 1, "logitnormal")
        w = y * (1 - y)
        return -(logit(y) - mu) / (sigma**2 * w) - 1 / y + 1 / (1 - y)

    @staticmethod
    def d2logpdf(y, mu, sigma):
        y = _interior(y, 0, 1, "logitnormal")
        w2 = (y * (1 - y)) ** 2
        r = logit(y) - mu
        return (-1 + r * (1 - 2 * y)) / (sigma**2 * w2) + 1 / y**2 + 1 / (1 - y) ** 2

    @staticmethod
    def sample(rng, mu, sigma, size=None):
        return expit(rng.normal(mu, sigma, size=size))

    @staticmethod
    def _moment(mu, sigma, k):
        def one(m, s):
            f = lambda z: expit(m + s * z) ** k * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            val, err = integrate.quad(f, -40, 40, epsabs=1e-13, epsrel=1e-11, limit=200)
            return val

        return np.vectorize(one, otypes=[float])(mu, sigma)

    @classmethod
    def mean(cls, mu, sigma):
        return cls._moment(mu, sigma, 1)

    @classmethod
    def var(cls, mu, sigma):
        m1 = cls._moment(mu, sigma, 1)
        return cls._moment(mu, sigma, 2) - m1 * m1


class Kumaraswamy:
    """Kumaraswamy(a, b): density a b y^(a-1) (1 - y^a)^(b-1)."""

    name = "kumaraswamy"
    support = (0.0, 1.0)

    @staticmethod
    def logpdf(y, a, b):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < 1)
        ly = np.log(np.where(inside, y, 0.5))
        out = np.log(a) + np.log(b) + (a - 1) * ly + (b - 1) * _log1mexp(a * ly)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, a, b):
        y = _interior(y, 0, 1, "kumaraswamy")
        ya = y**a
        return (a - 1) / y - (b - 1) * a * ya / (y * (1 - ya))

    @staticmethod
    def d2logpdf(y, a, b):
        y = _interior(y, 0, 1, "kumaraswamy")
        ya = y**a
        return -(a - 1) / y**2 - (b - 1) * a * ya * (a - 1 + ya) / (y * (1 - ya)) ** 2

    @staticmethod
    def sample(rng, a, b, size=None):
        u = rng.random(size=size if size is not None else np.broadcast(a, b).shape)
        # 1 - (1-u)^(1/b), computed without cancellation
        v = -np.expm1(np.log1p(-u) / b)
        return np.exp(np.log(v) / a)

    @staticmethod
    def raw_moment(a, b, k):
        return np.exp(np.log(b) + betaln(1 + k / a, b))

    @classmethod
    def mean(cls, a, b):
        return cls.raw_moment(a, b, 1)

    @classmethod
    def var(cls, a, b):
        m1 = cls.raw_moment(a, b, 1)
        return cls.raw_moment(a, b, 2) - m1 * m1


class LogBilal:
    """Log-Bilal(theta): density (6/theta) y^(2/theta - 1) (1 - y^(1/theta)).

    Obtained as ``Y = exp(-X)`` with X Bilal-distributed; equivalently
    ``Y = U**theta`` with ``U ~ Beta(2, 2)``.
    """

    name = "logbilal"
    support = (0.0, 1.0)

    @staticmethod
    def logpdf(y, theta):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < 1)
        ly = np.log(np.where(inside, y, 0.5))
        a = 1.0 / theta
        out = math.log(6.0) + np.log(a) + (2 * a - 1) * ly + _log1mexp(a * ly)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, theta):
        y = _interior(y, 0, 1, "logbilal")
        a = 1.0 / theta
        ya = y**a
        return (2 * a - 1) / y - a * ya / (y * (1 - ya))

    @staticmethod
    def d2logpdf(y, theta):
        y = _interior(y, 0, 1, "logbilal")
        a = 1.0 / theta
        ya = y**a
        return -(2 * a - 1) / y**2 - a * ya * (a - 1 + ya) / (y * (1 - ya)) ** 2

    @staticmethod
    def sample(rng, theta, size=None):
        u = rng.beta(2.0, 2.0, size=size if size is not None else np.shape(theta))
        return u**theta

    @staticmethod
    def raw_moment(theta, k):
        return 6.0 / ((2 + k * theta) * (3 + k * theta))

    @classmethod
    def mean(cls, theta):
        return cls.raw_moment(theta, 1)

    @classmethod
    def var(cls, theta):
        m1 = cls.raw_moment(theta, 1)
        return cls.raw_moment(theta, 2) - m1 * m1


class TruncatedNormal:
    """N(mu, sigma^2) truncated to (lo, hi); unit interval by default."""

    name = "truncnormal"
    support = (0.0, 1.0)

    @staticmethod
    def _log_mass(mu, sigma, lo, hi):
        return _log_normal_mass((lo - mu) / sigma, (hi - mu) / sigma)

    @classmethod
    def logpdf(cls, y, mu, sigma, lo=0.0, hi=1.0):
        y = np.asarray(y, dtype=float)
        inside = (y > lo) & (y < hi)
        z = (y - mu) / sigma
        out = -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI - cls._log_mass(mu, sigma, lo, hi)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, mu, sigma, lo=0.0, hi=1.0):
        y = _interior(y, lo, hi, "truncnormal")
        return -(y - mu) / sigma**2

    @staticmethod
    def d2logpdf(y, mu, sigma, lo=0.0, hi=1.0):
        y = _interior(y, lo, hi, "truncnormal")
        return np.broadcast_to(-1.0 / np.asarray(sigma, float) ** 2, np.broadcast(y, sigma).shape).copy()

    @staticmethod
    def sample(rng, mu, sigma, lo=0.0, hi=1.0, size=None):
        shape = size if size is not None else np.broadcast(mu, sigma).shape
        u = rng.random(size=shape)
        return stats.truncnorm.ppf(u, (lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma)

    @staticmethod
    def mean(mu, sigma, lo=0.0, hi=1.0):
        return stats.truncnorm.mean((lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma)

    @staticmethod
    def var(mu, sigma, lo=0.0, hi=1.0):
        return stats.truncnorm.var((lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma)


class Lognormal:
    """Lognormal with log-scale location mu and log-scale sd sigma."""

    name = "lognormal"
    support = (0.0, np.inf)

    @staticmethod
    def logpdf(y, mu, sigma):
        y = np.asarray(y, dtype=float)
        inside = y > 0
        ly = np.log(np.where(inside, y, 1.0))
        z = (ly - mu) / sigma
        out = -0.5 * z * z - np.log(sigma) - _LOG_SQRT_2PI - ly
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, mu, sigma):
        y = _interior(y, 0, np.inf, "lognormal")
        return -(1 + (np.log(y) - mu) / sigma**2) / y

    @staticmethod
    def d2logpdf(y, mu, sigma):
        y = _interior(y, 0, np.inf, "lognormal")
        return (1 - (1 - (np.log(y) - mu)) / sigma**2) / y**2

    @staticmethod
    def sample(rng, mu, sigma, size=None):
        return rng.lognormal(mu, sigma, size=size)

    @staticmethod
    def mean(mu, sigma):
        return np.exp(mu + 0.5 * sigma**2)

    @staticmethod
    def var(mu, sigma):
        return np.expm1(sigma**2) * np.exp(2 * mu + sigma**2)


class Gamma:
    """Gamma in shape-scale form."""

    name = "gamma"
    support = (0.0, np.inf)

    @staticmethod
    def logpdf(y, alpha, beta):
        y = np.asarray(y, dtype=float)
        inside = y > 0
        yc = np.where(inside, y, 1.0)
        out = (alpha - 1) * np.log(yc) - yc / beta - gammaln(alpha) - alpha * np.log(beta)
        return np.where(inside, out, -np.inf)

    @staticmethod
    def dlogpdf(y, alpha, beta):
        y = _interior(y, 0, np.inf, "gamma")
        return (alpha - 1) / y - 1 / beta

    @staticmethod
    def d2logpdf(y, alpha, beta):
        y = _interior(y, 0, np.inf, "gamma")
        return -(alpha - 1) / y**2

    @staticmethod
    def sample(rng, alpha, beta, size=None):
        return rng.gamma(alpha, beta, size=size)

    @staticmethod
    def mean(alpha, beta):
        return alpha * beta

    @staticmethod
    def var(alpha, beta):
        return alpha * beta * beta


class Beta4P:
    """Four-parameter Beta with shapes (a, b) on (lb, ub)."""

    name = "beta4p"

    @staticmethod
    def logpdf(y, a, b, lb, ub):
        w = ub - lb
        return Beta.logpdf((np.asarray(y, float) - lb) / w, a, b) - np.log(w)

    @staticmethod
    def dlogpdf(y, a, b, lb, ub):
        w = ub - lb
        return Beta.dlogpdf((np.asarray(y, float) - lb) / w, a, b) / w

    @staticmethod
    def d2logpdf(y, a, b, lb, ub):
        w = ub - lb
        return Beta.d2logpdf((np.asarray(y, float) - lb) / w, a, b) / w**2

    @staticmethod
    def sample(rng, a, b, lb, ub, size=None):
        return lb + (ub - lb) * rng.beta(a, b, size=size)

    @staticmethod
    def mean(a, b, lb, ub):
        return lb + (ub - lb) * a / (a + b)

    @staticmethod
    def var(a, b, lb, ub):
        return (ub - lb) ** 2 * Beta.var(a, b)


FAMILIES = {
    cls.name: cls
    for cls in (Beta, Beta4P, LogitNormal, Kumaraswamy, LogBilal, TruncatedNormal, Lognormal, Gamma)
}


def get_family(family):
    try:
        return FAMILIES[family.lower()]
    except KeyError:
        raise ParameterError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def logpdf(family, params, y):
    """Log density of ``family`` with parameter tuple ``params`` at ``y``.

    Points outside the support give ``-inf``.
    """
    return get_family(family).logpdf(y, *params)


def dlogpdf_dy(family, params, y):
    """First derivative in ``y`` of the log density; interior points only."""
    return get_family(family).dlogpdf(y, *params)


def d2logpdf_dy2(family, params, y):
    """Second derivative in ``y`` of the log density; interior points only."""
    return get_family(family).d2logpdf(y, *params)


# --------------------------------------------------------------------------
# parameter containers and samplers


@dataclass(frozen=True)
class Beta4PParams:
    """Four-parameter Beta in location/precision form.

    ``lam`` is the location on the response scale (lb, ub) and ``sigma`` the
    precision; the induced shapes are ``sigma * lam*`` and
    ``sigma - sigma * lam*`` with ``lam* = (lam - lb) / (ub - lb)``.
    """

    lam: float
    sigma: float
    lb: float = 0.0
    ub: float = 1.0

    def __post_init__(self):
        if not self.lb < self.ub:
            raise ParameterError("Beta4P needs lb < ub")
        if not (self.lb < self.lam < self.ub) or not self.sigma > 0:
            raise ParameterError(f"invalid Beta4P parameters lam={self.lam}, sigma={self.sigma}")

    @property
    def shapes(self):
        lam_star = (self.lam - self.lb) / (self.ub - self.lb)
        return self.sigma * lam_star, self.sigma - self.sigma * lam_star


@dataclass(frozen=True)
class GammaParams:
    """Gamma law in shape (``alpha``) / scale (``beta``) form."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError("Gamma shape and scale must be positive")


@dataclass(frozen=True, eq=False)
class SkewNormalParams:
    """Multivariate skew-normal ``2 phi_d(x; mu, Sigma) Phi(delta' (x - mu))``."""

    mu: np.ndarray
    Sigma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        d = mu.shape[0]
        if Sigma.shape != (d, d) or delta.shape != (d,):
            raise ParameterError("skew-normal dimensions do not agree")
        if not np.allclose(Sigma, Sigma.T, rtol=1e-10, atol=1e-12):
            raise ParameterError("Sigma must be symmetric")
        if not np.all(np.isfinite(delta)):
            raise ParameterError("delta must be finite")
        try:
            np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            raise ParameterError("Sigma must be positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "delta", delta)

    @property
    def dim(self):
        return self.mu.shape[0]

    def hidden_direction(self):
        """Vector ``Sigma delta / sqrt(1 + delta' Sigma delta)``."""
        sd = self.Sigma @ self.delta
        return sd / math.sqrt(1.0 + float(self.delta @ sd))

    def mean(self):
        return self.mu + math.sqrt(2 / math.pi) * self.hidden_direction()

    def cov(self):
        v = self.hidden_direction()
        return self.Sigma - (2 / math.pi) * np.outer(v, v)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        diff = x - self.mu
        L = np.linalg.cholesky(self.Sigma)
        sol = np.linalg.solve(L, diff.reshape(-1, self.dim).T).T
        quad = np.sum(sol * sol, axis=1)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out = (
            math.log(2.0)
            - 0.5 * (self.dim * _LOG_2PI + logdet + quad)
            + log_ndtr(diff.reshape(-1, self.dim) @ self.delta)
        )
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])


def sample_beta4p(params: Beta4PParams, rng, size=None):
    a, b = params.shapes
    return Beta4P.sample(rng, a, b, params.lb, params.ub, size=size)


def sample_gamma(params: GammaParams, rng, size=None):
    return rng.gamma(params.alpha, params.beta, size=size)


def sample_skewnormal(params: SkewNormalParams, rng, size=None):
    """Draw via the hidden-truncation representation.

    ``X = mu + v |U0| + W`` with ``U0 ~ N(0, 1)`` and
    ``W ~ N(0, Sigma - v v')``, ``v`` the hidden direction.
    """
    v = params.hidden_direction()
    cov_w = params.Sigma - np.outer(v, v)
    cov_w = 0.5 * (cov_w + cov_w.T)
    try:
        L = np.linalg.cholesky(cov_w)
    except np.linalg.LinAlgError:
        # nearly degenerate direction: project onto the PSD cone
        vals, vecs = np.linalg.eigh(cov_w)
        L = vecs * np.sqrt(np.clip(vals, 0.0, None))
    n = 1 if size is None else int(np.prod(size))
    u0 = np.abs(rng.standard_normal(n))
    w = rng.standard_normal((n, params.dim)) @ L.T
    draws = params.mu + u0[:, None] * v + w
    if size is None:
        return draws[0]
    return draws.reshape(tuple(np.atleast_1d(size)) + (params.dim,))


# --------------------------------------------------------------------------
# scaling factor c = E[1 / (S + 1)], S ~ Gamma(shape alpha, scale beta)


def s_star_logpdf(x, alpha, beta):
    """Log density of ``S* = 1 / (S + 1)`` on (0, 1)."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xc = np.where(inside, x, 0.5)
    out = (
        -alpha * math.log(beta)
        + (xc - 1) / (xc * beta)
        + (alpha - 1) * np.log1p(-xc) - (alpha - 1) * np.log(xc)
        - 2 * np.log(xc)
        - gammaln(alpha)
    )
    return np.where(inside, out, -np.inf)


def c_factor_closed_form(alpha, beta):
    """beta^-alpha e^(1/beta) Gamma(1 - alpha, 1/beta); valid for alpha < 1."""
    if not (0 < alpha < 1) or not beta > 0:
        raise DomainError("closed form needs 0 < alpha < 1 and beta > 0")
    return math.exp(-alpha * math.log(beta)) * upper_incomplete_gamma_scaled(1.0 - alpha, 1.0 / beta)


def c_factor_quadrature(alpha, beta, rtol=1e-10):
    """E[S*] by adaptive quadrature of x f_{S*}(x) over (0, 1)."""
    if not (alpha > 0 and beta > 0):
        raise DomainError("c_factor needs alpha > 0 and beta > 0")
    g = stats.gamma(alpha, scale=beta)
    # S quantiles map to S* = 1/(1+S); the neglected tails carry < 1e-14 mass
    s_hi, s_med, s_lo = g.isf(1e-15), g.median(), g.ppf(1e-15)
    x_lo, x_med, x_hi = 1 / (1 + s_hi), 1 / (1 + s_med), 1 / (1 + s_lo)
    f = lambda x: x * math.exp(float(s_star_logpdf(x, alpha, beta)))
    total, err = 0.0, 0.0
    for a, b in ((x_lo, x_med), (x_med, x_hi)):
        if b <= a:
            continue
        # the error estimate is checked below, scipy's warning is redundant
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=500)
        total += val
        err += e
    if not np.isfinite(total) or err > 1e-7 * max(total, 1e-300):
        raise IntegrationError(f"c_factor quadrature did not converge (err={err:g})")
    return total


def c_factor(alpha_s, beta_s, method="auto"):
    """Scaling factor ``c = E[(S + 1)^-1]`` with S ~ Gamma(shape, scale).

    ``method`` is ``"auto"`` (closed form for alpha < 1, quadrature
    otherwise), ``"closed"`` or ``"quadrature"``.
    """
    if not (alpha_s > 0 and beta_s > 0):
        raise DomainError("c_factor needs alpha_s > 0 and beta_s > 0")
    if method == "closed" or (method == "auto" and alpha_s < 1):
        return c_factor_closed_form(alpha_s, beta_s)
    if method in ("auto", "quadrature"):
        return c_factor_quadrature(alpha_s, beta_s)
    raise ValueError(f"unknown method {method!r}")
