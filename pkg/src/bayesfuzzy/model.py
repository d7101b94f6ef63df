"""Generative model linking crisp latent outcomes to Beta fuzzy observations.

For each unit

    y_i ~ f_Y(y; theta_y)                 latent crisp outcome
    s_i ~ Gamma(alpha_s, scale=beta_s)    precision of the fuzzy datum
    m_i | s_i, y_i ~ Beta4P(s_i y*_i, s_i - s_i y*_i, lb, ub)

so the observed mode ``m_i`` is unbiased for ``y_i`` and its conditional
spread shrinks as ``s_i`` grows.  Starred quantities live on the unit scale
``(v - lb) / (ub - lb)``.

Bounded families are defined on the unit interval and rescaled to
``(lb, ub)``; the Lognormal family lives on the response scale and is
truncated to ``(lb, ub)`` so that the latent outcome shares the support of
the fuzzy data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import expit, gammaln, logit

from . import dists
from .dists import _log_normal_mass
from .errors import ParameterError
from .fuzznum import BetaFuzzyNumber, Interval, TrapezoidalFuzzyNumber

# canonical family tags and accepted spellings
_FAMILY_ALIASES = {
    "beta": "beta",
    "logitnormal": "logitnormal",
    "logit-normal": "logitnormal",
    "kumaraswamy": "kumaraswamy",
    "lognormal": "lognormal",
    "logbilal": "logbilal",
    "truncnormal": "truncnormal",
    "truncatednormal": "truncnormal",
    "truncated-normal": "truncnormal",
}
FAMILIES = ("beta", "logitnormal", "kumaraswamy", "lognormal", "logbilal", "truncnormal")
LINKS = ("logit", "log", "identity")

_LEGAL_LINKS = {
    "beta": ("logit", "identity"),
    "logitnormal": ("logit", "identity"),
    "kumaraswamy": ("logit", "identity"),
    "logbilal": ("logit", "identity"),
    "truncnormal": ("logit", "identity"),
    "lognormal": ("log",),
}

# smallest and largest unit-scale mode kept after simulation
_M_CLIP = 1e-10


def canonical_family(name: str) -> str:
    try:
        return _FAMILY_ALIASES[name.lower().replace("_", "")]
    except KeyError:
        raise ParameterError(f"unknown family {name!r}; choose from {FAMILIES}") from None


@dataclass(frozen=True)
class ModelSpec:
    """Response family, link, response bounds and design width.

    ``J`` counts the columns of the design matrix including the intercept.
    ``prior`` is an optional :class:`bayesfuzzy.gibbs.PriorSpec`.
    """

    family: str = "beta"
    link: str | None = None
    bounds: tuple = (0.0, 1.0)
    J: int = 1
    prior: object = None

    def __post_init__(self):
        fam = canonical_family(self.family)
        link = self.link or _LEGAL_LINKS[fam][0]
        if link not in _LEGAL_LINKS[fam]:
            raise ParameterError(f"link {link!r} not allowed for family {fam!r}")
        lb, ub = (float(b) for b in self.bounds)
        if not lb < ub:
            raise ParameterError("bounds need lb < ub")
        if fam == "lognormal" and lb < 0:
            raise ParameterError("Lognormal bounds must be non-negative")
        if int(self.J) < 1:
            raise ParameterError("J must be at least 1")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "link", link)
        object.__setattr__(self, "bounds", (lb, ub))
        object.__setattr__(self, "J", int(self.J))

    @property
    def width(self):
        return self.bounds[1] - self.bounds[0]


@dataclass(frozen=True, eq=False)
class ThetaY:
    """Regression coefficients and the unconstrained dispersion parameter."""

    beta: np.ndarray
    phi: float

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1 or not np.all(np.isfinite(beta)) or not np.isfinite(self.phi):
            raise ParameterError("theta_y must be a finite vector and scalar")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "phi", float(self.phi))

    def as_vector(self):
        return np.append(self.beta, self.phi)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:-1], v[-1])


@dataclass(frozen=True)
class ThetaS:
    """Gamma law of the precisions, shape ``alpha_s`` and scale ``beta_s``."""

    alpha_s: float
    beta_s: float

    def __post_init__(self):
        if not (self.alpha_s > 0 and self.beta_s > 0):
            raise ParameterError("theta_s needs positive shape and scale")

    def as_gamma(self):
        return dists.GammaParams(self.alpha_s, self.beta_s)


@dataclass(eq=False)
class FuzzyDataset:
    """Beta fuzzy observations with their covariates.

    Attributes
    ----------
    m, s : ndarray, shape (n,)
        Modes and precisions.
    X : ndarray, shape (n, J)
        Design matrix; the first column is the intercept.
    bounds : tuple
        Common response bounds used by the model.
    obs_lb, obs_ub : ndarray, shape (n,)
        Supports of the individual fuzzy numbers (default: ``bounds``).
    y_latent : ndarray or None
        Crisp outcomes, known only for simulated data.
    x_center, x_scale : ndarray, shape (J,)
        Standardisation applied to ``X`` (identity when not standardised).
    x_raw : ndarray or None, shape (n, J - 1)
        Covariates as read, before standardisation (kept for writing back).
    """

    m: np.ndarray
    s: np.ndarray
    X: np.ndarray
    bounds: tuple = (0.0, 1.0)
    obs_lb: np.ndarray | None = None
    obs_ub: np.ndarray | None = None
    y_latent: np.ndarray | None = None
    ids: list | None = None
    x_center: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    columns: list | None = field(default=None)
    x_raw: np.ndarray | None = None

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float).ravel()
        self.s = np.asarray(self.s, dtype=float).ravel()
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = self.m.shape[0]
        if n < 1:
            raise ParameterError("dataset needs at least one observation")
        if self.s.shape != (n,) or self.X.shape[0] != n:
            raise ParameterError("m, s and X must have the same number of rows")
        if not np.all(np.isfinite(self.X)):
            raise ParameterError("X contains non-finite entries")
        lb, ub = (float(b) for b in self.bounds)
        self.bounds = (lb, ub)
        if not np.all((self.m > lb) & (self.m < ub)):
            bad = int(np.argmax(~((self.m > lb) & (self.m < ub))))
            raise ParameterError(f"mode of observation {bad} lies outside ({lb}, {ub})")
        if not np.all(self.s > 0):
            raise ParameterError("precisions must be positive")
        self.obs_lb = np.full(n, lb) if self.obs_lb is None else np.asarray(self.obs_lb, float).ravel()
        self.obs_ub = np.full(n, ub) if self.obs_ub is None else np.asarray(self.obs_ub, float).ravel()
        if np.any(~((self.obs_lb < self.m) & (self.m < self.obs_ub))):
            raise ParameterError("every mode must lie inside its own support")
        J = self.X.shape[1]
        if self.x_center is None:
            self.x_center = np.zeros(J)
        if self.x_scale is None:
            self.x_scale = np.ones(J)
        if self.ids is None:
            self.ids = [str(i + 1) for i in range(n)]
        if self.columns is None:
            self.columns = ["intercept"] + [f"x{j}" for j in range(1, J)]

    @property
    def n(self):
        return self.m.shape[0]

    @property
    def J(self):
        return self.X.shape[1]

    @property
    def m_star(self):
        lb, ub = self.bounds
        return (self.m - lb) / (ub - lb)

    @property
    def observations(self):
        return [BetaFuzzyNumber(float(m), float(s), float(a), float(b))
                for m, s, a, b in zip(self.m, self.s, self.obs_lb, self.obs_ub)]

    def back_transform(self, beta):
        """Map coefficients fitted on standardised covariates to the raw scale.

        ``beta`` may be a vector or a (draws, J) array.
        """
        beta = np.asarray(beta, dtype=float)
        out = beta / self.x_scale
        shift = np.sum(beta[..., 1:] * (self.x_center[1:] / self.x_scale[1:]), axis=-1)
        out[..., 0] = beta[..., 0] - shift
        return out


def add_intercept(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def standardize(X):
    """z-score every non-intercept column; returns ``(Z, center, scale)``."""
    X = np.asarray(X, dtype=float)
    center = np.zeros(X.shape[1])
    scale = np.ones(X.shape[1])
    if X.shape[1] > 1:
        center[1:] = X[:, 1:].mean(axis=0)
        sd = X[:, 1:].std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1] - 1)
        scale[1:] = np.where(sd > 0, sd, 1.0)
    return (X - center) / scale, center, scale


# --------------------------------------------------------------------------
# links and parametrisations


def linear_predictor(X, beta):
    """``eta = X beta``; ``beta`` may carry leading batch dimensions."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != X.shape[1]:
        raise ParameterError(f"X has {X.shape[1]} columns but beta has length {beta.shape[-1]}")
    return beta @ X.T


def mean_from_eta(eta, link, bounds=None):
    """Inverse link; with ``bounds`` the unit-scale value is mapped into them."""
    eta = np.asarray(eta, dtype=float)
    if link == "logit":
        mu = expit(eta)
    elif link == "log":
        mu = np.exp(eta)
    elif link == "identity":
        mu = eta.copy()
    else:
        raise ParameterError(f"unknown link {link!r}")
    if bounds is not None:
        lb, ub = bounds
        mu = lb + (ub - lb) * mu
    return mu


def _kumaraswamy_shapes(mu, phi):
    nu = expit(phi)
    return np.log1p(-np.power(0.5, nu)) / np.log(mu), 1.0 / nu


def _logbilal_theta(mu):
    return 0.5 * (np.sqrt(1.0 + 24.0 / mu) - 5.0)


def _family_params_eta(spec: ModelSpec, eta, phi):
    """Natural parameters from linear predictor(s) and unconstrained phi.

    Unit-interval parameters for the bounded families; response-scale
    log-location and log-scale for the Lognormal.  Entries with an illegal
    mean (identity link outside (0, 1)) come back as NaN.
    """
    fam = spec.family
    mu = mean_from_eta(eta, spec.link)
    if fam == "lognormal":
        return np.asarray(eta, dtype=float), np.exp(phi) + 0 * mu
    mu = np.where((mu > 0) & (mu < 1), mu, np.nan)
    if fam == "beta":
        prec = np.exp(phi)
        return mu * prec, prec - mu * prec
    if fam == "logitnormal":
        return logit(mu), np.exp(phi) + 0 * mu
    if fam == "kumaraswamy":
        return _kumaraswamy_shapes(mu, phi)
    if fam == "logbilal":
        return (_logbilal_theta(mu) + 0 * phi,)
    if fam == "truncnormal":
        return mu, np.exp(phi) + 0 * mu
    raise ParameterError(f"unknown family {fam!r}")


def family_params(spec: ModelSpec, theta: ThetaY, X, i=None):
    """Distribution parameters per unit (or for unit ``i``).

    Returns the tuple expected by the corresponding :mod:`bayesfuzzy.dists`
    family: Beta ``(a, b)``, LogitNormal ``(mu, sigma)``, Kumaraswamy
    ``(a, b)``, LogBilal ``(theta,)``, TruncatedNormal ``(mu, sigma)`` on the
    unit scale, and Lognormal ``(mu, sigma)`` on the response scale.

    The LogBilal law has no dispersion parameter; its ``phi`` is ignored.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if i is not None:
        X = X[i : i + 1]
    eta = linear_predictor(X, theta.beta)
    params = _family_params_eta(spec, eta, theta.phi)
    positive = params if spec.family in ("beta", "kumaraswamy", "logbilal") else params[1:]
    if not all(np.all(np.isfinite(p)) for p in params) or not all(np.all(p > 0) for p in positive):
        raise ParameterError("theta_y gives parameters outside the family's domain")
    if i is not None:
        return tuple(float(np.asarray(p).ravel()[0]) for p in params)
    return params


# --------------------------------------------------------------------------
# latent density on the unit scale


def _lognormal_log_mass(mu, sigma, lb, ub):
    lo = np.log(lb) if lb > 0 else -np.inf
    return _log_normal_mass((lo - mu) / sigma, (math.log(ub) - mu) / sigma)


def unit_logpdf(spec: ModelSpec, params, u):
    """Log density of the latent outcome on the unit scale ``u = y*``.

    Includes every term that depends on the parameters, so it doubles as
    the complete-data log likelihood contribution of ``u``.
    """
    fam = spec.family
    if fam == "lognormal":
        lb, ub = spec.bounds
        w = ub - lb
        mu, sigma = params
        y = lb + w * np.asarray(u, dtype=float)
        out = dists.Lognormal.logpdf(y, mu, sigma) + math.log(w) - _lognormal_log_mass(mu, sigma, lb, ub)
        u = np.asarray(u, dtype=float)
        return np.where((u > 0) & (u < 1), out, -np.inf)
    return dists.FAMILIES[_DISTS_NAME[fam]].logpdf(u, *params)


def unit_dlogpdf(spec: ModelSpec, params, u):
    """First and second ``u``-derivatives of :func:`unit_logpdf`."""
    fam = spec.family
    if fam == "lognormal":
        lb, ub = spec.bounds
        w = ub - lb
        y = lb + w * np.asarray(u, dtype=float)
        return w * dists.Lognormal.dlogpdf(y, *params), w * w * dists.Lognormal.d2logpdf(y, *params)
    if fam == "beta":
        # both derivatives in one pass; this sits in the sampler's inner loop
        u = dists._interior(u, 0, 1, "beta")
        a1, b1 = params[0] - 1, params[1] - 1
        iu, iv = 1 / u, 1 / (1 - u)
        return a1 * iu - b1 * iv, -a1 * iu * iu - b1 * iv * iv
    cls = dists.FAMILIES[_DISTS_NAME[fam]]
    return cls.dlogpdf(u, *params), cls.d2logpdf(u, *params)


_DISTS_NAME = {
    "beta": "beta",
    "logitnormal": "logitnormal",
    "kumaraswamy": "kumaraswamy",
    "logbilal": "logbilal",
    "truncnormal": "truncnormal",
    "lognormal": "lognormal",
}


def latent_logpdf(spec: ModelSpec, theta: ThetaY, X, y):
    """Log density of response-scale latent outcomes ``y`` for every unit."""
    lb, ub = spec.bounds
    u = (np.asarray(y, dtype=float) - lb) / (ub - lb)
    return unit_logpdf(spec, family_params(spec, theta, X), u) - math.log(ub - lb)


def loglik_theta(spec: ModelSpec, X, u, beta, phi):
    """Complete-data log likelihood ``sum_i ln f_Y(u_i | theta)`` for a batch.

    Parameters
    ----------
    X : ndarray, shape (n, J)
    u : ndarray, shape (n,)
        Latent outcomes on the unit scale.
    beta : ndarray, shape (k, J)
    phi : ndarray, shape (k,)

    Returns
    -------
    ndarray, shape (k,)
        ``-inf`` where the parameters are outside the family's domain.
    """
    beta = np.atleast_2d(beta)
    phi = np.asarray(phi, dtype=float).reshape(-1, 1)
    eta = beta @ X.T
    if spec.family == "beta" and spec.link == "logit":
        return _beta_loglik(eta, phi[:, 0], u)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        params = _family_params_eta(spec, eta, phi)
        ll = unit_logpdf(spec, params, u[None, :]).sum(axis=1)
    return np.where(np.isfinite(ll), ll, -np.inf)


def _beta_loglik(eta, phi, u):
    # the normalising term lnG(a + b) = lnG(phi) is shared by all units
    lu, l1u = np.log(u), np.log1p(-u)
    prec = np.exp(phi)
    a = expit(eta) * prec[:, None]
    b = prec[:, None] - a
    ll = (a * (lu - l1u)).sum(axis=1) + prec * l1u.sum() - (lu + l1u).sum()
    with np.errstate(over="ignore", invalid="ignore"):
        ll = ll - (gammaln(a) + gammaln(b)).sum(axis=1) + u.shape[0] * gammaln(prec)
    return np.where(np.isfinite(ll), ll, -np.inf)


# --------------------------------------------------------------------------
# simulation and moments


def _sample_unit(spec: ModelSpec, params, rng, size):
    fam = spec.family
    if fam == "lognormal":
        lb, ub = spec.bounds
        mu, sigma = np.broadcast_arrays(*params)
        lo = np.log(lb) if lb > 0 else -np.inf
        z = dists.TruncatedNormal.sample(rng, mu, sigma, lo, math.log(ub), size=size)
        return (np.exp(z) - lb) / (ub - lb)
    return dists.FAMILIES[_DISTS_NAME[fam]].sample(rng, *params, size=size)


def simulate(spec: ModelSpec, theta_y: ThetaY, theta_s: ThetaS, X, rng, keep_latent=True) -> FuzzyDataset:
    """Draw a fuzzy dataset: latent y, then precisions s, then modes m.

    Unit-scale modes are kept inside ``[1e-10, 1 - 1e-10]`` so that the
    observations are strictly interior even for very flat Beta4P draws.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    lb, ub = spec.bounds
    params = family_params(spec, theta_y, X)
    params = tuple(np.broadcast_to(p, (n,)) for p in params)
    u = _sample_unit(spec, params, rng, n)
    u = np.clip(u, _M_CLIP, 1 - _M_CLIP)
    s = rng.gamma(theta_s.alpha_s, theta_s.beta_s, size=n)
    s = np.maximum(s, np.finfo(float).tiny)
    m_star = rng.beta(s * u, s - s * u)
    m_star = np.clip(m_star, _M_CLIP, 1 - _M_CLIP)
    w = ub - lb
    return FuzzyDataset(
        m=lb + w * m_star,
        s=s,
        X=X,
        bounds=(lb, ub),
        y_latent=(lb + w * u) if keep_latent else None,
    )


def unit_moments(spec: ModelSpec, theta_y: ThetaY, x=None):
    """Mean and variance of the latent outcome on the unit scale for one unit."""
    x = np.eye(1, spec.J, 0).ravel() if x is None else np.asarray(x, dtype=float)
    p = family_params(spec, theta_y, x[None, :], 0)
    fam = spec.family
    if fam == "beta":
        return dists.Beta.mean(*p), dists.Beta.var(*p)
    if fam == "kumaraswamy":
        return float(dists.Kumaraswamy.mean(*p)), float(dists.Kumaraswamy.var(*p))
    if fam == "logbilal":
        return dists.LogBilal.mean(*p), dists.LogBilal.var(*p)
    if fam == "truncnormal":
        return float(dists.TruncatedNormal.mean(*p)), float(dists.TruncatedNormal.var(*p))
    if fam == "logitnormal":
        return float(dists.LogitNormal.mean(*p)), float(dists.LogitNormal.var(*p))
    # truncated lognormal: quadrature on the unit scale
    dens = lambda u: math.exp(float(unit_logpdf(spec, p, u)))
    m1 = integrate.quad(lambda u: u * dens(u), 0, 1, epsabs=1e-13, epsrel=1e-10, limit=200)[0]
    m2 = integrate.quad(lambda u: u * u * dens(u), 0, 1, epsabs=1e-13, epsrel=1e-10, limit=200)[0]
    return m1, m2 - m1 * m1


def mode_moments(spec: ModelSpec, theta_y: ThetaY, theta_s: ThetaS, x=None):
    """Mean and variance of the observed mode M on the response scale.

    ``E[M] = E[Y]`` and ``V[M] = V[Y](1 - c) + E[Y](1 - E[Y]) c`` on the unit
    scale, with ``c = E[1/(S + 1)]``.  ``x`` is the covariate row (default:
    intercept only).
    """
    ey, vy = unit_moments(spec, theta_y, x)
    c = dists.c_factor(theta_s.alpha_s, theta_s.beta_s)
    vm = vy * (1 - c) + ey * (1 - ey) * c
    lb, ub = spec.bounds
    w = ub - lb
    return lb + w * ey, w * w * vm


def derive_bounds(observations):
    """Smallest interval containing the supports of all observations."""
    obs = list(observations)
    if not obs:
        raise ParameterError("derive_bounds needs at least one observation")
    lo, hi = [], []
    for o in obs:
        if isinstance(o, TrapezoidalFuzzyNumber):
            lo.append(o.a1)
            hi.append(o.a4)
        elif isinstance(o, (BetaFuzzyNumber, Interval)):
            sup = o.support if isinstance(o, BetaFuzzyNumber) else o
            lo.append(sup.lo)
            hi.append(sup.hi)
        else:
            a, b = o
            lo.append(a)
            hi.append(b)
    return float(min(lo)), float(max(hi))


def widen_bounds(bounds, margin=0.01, floor=None):
    """Widen ``(lb, ub)`` by ``margin`` times its width on each side.

    ``floor`` caps the lower bound from below (0 for positive families).
    """
    lb, ub = bounds
    pad = margin * (ub - lb)
    lo = lb - pad
    if floor is not None:
        lo = max(lo, floor)
    return lo, ub + pad
