"""Posterior approximations used inside the Gibbs sampler.

Two engines live here:

* a four-parameter Beta proposal for the latent conditional
  ``pi(y_i | theta_y, m_i, s_i)``, fitted by matching the first two
  log-density derivatives through a fixed-point recursion;
* a multivariate skew-normal approximation of ``pi(theta_y | y, D)``
  matching the mode, the negative Hessian at the mode and the unmixed
  third derivatives there.

Everything in the Beta4P part works on the unit scale ``y* in (0, 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit, gammaln, log_ndtr, logit

from . import dists
from .errors import ConvergenceError, DomainError, ParameterError
from .model import FuzzyDataset, ModelSpec, ThetaY, _family_params_eta, unit_dlogpdf, unit_logpdf
from .special import _psi01

_MAX_HALVINGS = 10
_POLISH_ITERS = 1
_POLISH_TOL = 1e-13


# --------------------------------------------------------------------------
# Beta4P proposal for the latent outcome


@dataclass(frozen=True)
class B4PProposal:
    """Fitted Beta4P proposal on the response scale.

    ``lambda_hat`` is the location (mean) and ``sigma_hat`` the precision;
    shapes are ``sigma_hat * lambda*`` and ``sigma_hat * (1 - lambda*)``.
    ``fallback`` marks fits that came from the Laplace rescue path.
    """

    lambda_hat: float
    sigma_hat: float
    lb: float = 0.0
    ub: float = 1.0
    iterations: int = 0
    converged: bool = True
    fallback: bool = False

    def __post_init__(self):
        if not (self.lb < self.lambda_hat < self.ub) or not self.sigma_hat > 0:
            raise ParameterError(f"invalid proposal lambda={self.lambda_hat}, sigma={self.sigma_hat}")

    @property
    def lambda_star(self):
        return (self.lambda_hat - self.lb) / (self.ub - self.lb)

    @property
    def params(self):
        return dists.Beta4PParams(self.lambda_hat, self.sigma_hat, self.lb, self.ub)

    @property
    def shapes(self):
        return self.params.shapes

    def logpdf(self, y):
        a, b = self.shapes
        return dists.Beta4P.logpdf(y, a, b, self.lb, self.ub)


@dataclass(eq=False)
class B4PBatch:
    """Vectorised fit for many units; ``lam`` is on the unit scale."""

    lam: np.ndarray
    sigma: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    fallback: np.ndarray

    @property
    def shapes(self):
        return self.lam * self.sigma, self.sigma - self.lam * self.sigma


def _h_derivatives(y, s, lm):
    """First two derivatives of h(y) = -lnG(sy) - lnG(s - sy) + s y logit(m*)."""
    n = y.shape[0]
    p0, p1 = _psi01(np.concatenate([s * y, s - s * y]))
    d1 = s * (lm - p0[:n] + p0[n:])
    d2 = -s * s * (p1[:n] + p1[n:])
    return d1, d2


def conditional_logpdf_unit(u, m_star, s, logf):
    """Unnormalised log conditional of the unit-scale latent outcome.

    ``logf(u)`` returns the latent log density; ``u`` broadcasts against
    ``m_star`` and ``s``.
    """
    u = np.asarray(u, dtype=float)
    inside = (u > 0) & (u < 1)
    uc = np.where(inside, u, 0.5)
    h = -gammaln(s * uc) - gammaln(s - s * uc) + s * uc * logit(m_star)
    return np.where(inside, h + logf(uc), -np.inf)


def _sigma_at(y, k2):
    w = y * (1 - y)
    return (1 - 2 * y + 2 * y * y - k2 * w * w) / w


def _laplace_fit(m_star, s, dlogf, idx):
    """Beta4P whose mode and curvature match the conditional's mode.

    The mode is bracketed by bisection on the derivative in logit space.
    """
    lm = logit(m_star)
    lo = np.full(idx.shape, -40.0)
    hi = np.full(idx.shape, 40.0)

    def slope(t):
        y = expit(t)
        d1, d2 = _h_derivatives(y, s, lm)
        f1, f2 = dlogf(y, idx)
        return d1 + f1, d2 + f2

    for _ in range(80):
        mid = 0.5 * (lo + hi)
        g, _ = slope(mid)
        up = g > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    mode = expit(0.5 * (lo + hi))
    mode = np.clip(mode, 1e-12, 1 - 1e-12)
    _, curv = slope(0.5 * (lo + hi))
    K = np.maximum(-curv * mode * (1 - mode), 1e-8)
    sigma = K + 2.0
    lam = (1.0 + mode * K) / sigma
    return lam, sigma


def fit_b4p_core(m_star, s, dlogf, eps=1e-6, max_iter=200, init=None):
    """Derivative-matching Beta4P fit for a batch of units on the unit scale.

    Parameters
    ----------
    m_star, s : ndarray, shape (n,)
        Unit-scale modes and precisions of the fuzzy observations.
    dlogf : callable
        ``dlogf(y, idx)`` returns the first and second derivatives of the
        unit-scale latent log density at ``y`` for the units ``idx``.
    eps : float
        Stopping threshold on ``|y / lambda - 1|``.
    max_iter : int
    init : tuple of ndarray, optional
        Starting ``(lambda, sigma)``; defaults to ``(m*, s)``.  The fixed
        point does not depend on it, only the number of iterations does.

    Returns
    -------
    B4PBatch
    """
    m_star = np.atleast_1d(np.asarray(m_star, dtype=float))
    s = np.broadcast_to(np.asarray(s, dtype=float), m_star.shape).copy()
    if np.any(~((m_star > 0) & (m_star < 1))) or np.any(~(s > 0)):
        raise DomainError("fit_b4p needs 0 < m* < 1 and s > 0")
    n = m_star.shape[0]
    lm = logit(m_star)
    if init is None:
        lam, sig = m_star.copy(), s.copy()
    else:
        lam, sig = (np.array(v, dtype=float) for v in init)
    iters = np.zeros(n, dtype=int)
    done = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    polish = np.zeros(n, dtype=int)
    last_change = np.full(n, np.inf)
    active = np.arange(n)

    for _ in range(max_iter + _POLISH_ITERS):
        if active.size == 0:
            break
        y = lam[active]
        sp = sig[active]
        ss = s[active]
        d1, d2 = _h_derivatives(y, ss, lm[active])
        f1, f2 = dlogf(y, active)
        k1, k2 = d1 + f1, d2 + f2
        lam_new = (1 + y * (-2 + k1 + sp - k1 * y)) / sp
        sig_new = _sigma_at(y, k2)
        bad = ~((lam_new > 0) & (lam_new < 1) & (sig_new > 0) & np.isfinite(lam_new) & np.isfinite(sig_new))
        for _ in range(_MAX_HALVINGS):
            if not bad.any():
                break
            lam_new = np.where(bad, 0.5 * (y + lam_new), lam_new)
            sig_new = np.where(bad, 0.5 * (sp + sig_new), sig_new)
            bad = ~((lam_new > 0) & (lam_new < 1) & (sig_new > 0) & np.isfinite(lam_new) & np.isfinite(sig_new))
        iters[active] += 1
        failed[active[bad]] = True
        lam[active] = np.where(bad, lam[active], lam_new)
        sig[active] = np.where(bad, sig[active], sig_new)

        change = np.abs(y / lam_new - 1)
        last_change[active] = change
        stop = (change < eps) & ~bad
        # after the stopping rule a few extra steps tighten the fixed point
        polish[active[stop]] += 1
        done[active[stop]] = True
        finished = bad | (stop & ((change < _POLISH_TOL) | (polish[active] > _POLISH_ITERS)))
        finished |= (iters[active] >= max_iter) & ~done[active]
        active = active[~finished]

    converged = done & ~failed
    # recompute the precision at the final location so both derivatives
    # match at the same point
    ok = np.flatnonzero(converged & (last_change > _POLISH_TOL))
    if ok.size:
        y = lam[ok]
        _, d2 = _h_derivatives(y, s[ok], lm[ok])
        _, f2 = dlogf(y, ok)
        sig_fin = _sigma_at(y, d2 + f2)
        good = sig_fin > 0
        sig[ok[good]] = sig_fin[good]
        converged[ok[~good]] = False

    fallback = ~converged
    if fallback.any():
        idx = np.flatnonzero(fallback)
        lam[idx], sig[idx] = _laplace_fit(m_star[idx], s[idx], dlogf, idx)
    return B4PBatch(lam, sig, iters, converged, fallback)


def _model_dlogf(spec: ModelSpec, params):
    def dlogf(y, idx):
        return unit_dlogpdf(spec, tuple(p[idx] for p in params), y)

    return dlogf


def _unit_params(spec, theta_y, X):
    eta = np.atleast_2d(X) @ theta_y.beta
    params = _family_params_eta(spec, eta, theta_y.phi)
    return tuple(np.broadcast_to(np.asarray(p, dtype=float), eta.shape) for p in params)


def fit_b4p_dataset(data: FuzzyDataset, spec: ModelSpec, theta_y: ThetaY, eps=1e-6, max_iter=200) -> B4PBatch:
    """Fit the latent-outcome proposal for every unit of ``data``."""
    params = _unit_params(spec, theta_y, data.X)
    return fit_b4p_core(data.m_star, data.s, _model_dlogf(spec, params), eps, max_iter)


def fit_b4p(m_i, s_i, spec: ModelSpec, theta_y: ThetaY, x_i=None, eps=1e-6, max_iter=200) -> B4PProposal:
    """Fit the Beta4P proposal of ``pi(y_i | theta_y, m_i, s_i)``.

    Parameters
    ----------
    m_i, s_i : float
        Mode (response scale) and precision of the fuzzy observation.
    spec : ModelSpec
    theta_y : ThetaY
    x_i : array_like, optional
        Covariate row of the unit; intercept-only by default.
    eps : float
        Threshold of the stopping rule ``|y / lambda - 1| < eps``.
    """
    lb, ub = spec.bounds
    if not lb < m_i < ub:
        raise DomainError(f"mode {m_i} outside ({lb}, {ub})")
    x = np.eye(1, spec.J, 0).ravel() if x_i is None else np.asarray(x_i, dtype=float)
    params = _unit_params(spec, theta_y, x[None, :])
    fit = fit_b4p_core([(m_i - lb) / (ub - lb)], [s_i], _model_dlogf(spec, params), eps, max_iter)
    return B4PProposal(
        lambda_hat=float(lb + (ub - lb) * fit.lam[0]),
        sigma_hat=float(fit.sigma[0]),
        lb=lb,
        ub=ub,
        iterations=int(fit.iterations[0]),
        converged=bool(fit.converged[0]),
        fallback=bool(fit.fallback[0]),
    )


def sample_y_conditional(proposal: B4PProposal, rng, size=None):
    """Draw latent outcomes from a fitted proposal (response scale)."""
    return dists.sample_beta4p(proposal.params, rng, size=size)


def sample_y_batch(batch: B4PBatch, rng):
    """One unit-scale draw per unit, kept strictly inside (0, 1)."""
    a, b = batch.shapes
    u = rng.beta(a, b)
    return np.clip(u, 1e-12, 1 - 1e-12)


def log_unnorm_posterior_y(y, m_i, s_i, spec: ModelSpec, theta_y: ThetaY, x_i=None):
    """``h(y*; m*, s) + ln f_Y(y | theta_y)`` up to a y-free constant.

    ``y`` is on the response scale; values outside ``(lb, ub)`` give -inf.
    """
    lb, ub = spec.bounds
    w = ub - lb
    x = np.eye(1, spec.J, 0).ravel() if x_i is None else np.asarray(x_i, dtype=float)
    params = _unit_params(spec, theta_y, x[None, :])
    params = tuple(p[0] for p in params)
    u = (np.asarray(y, dtype=float) - lb) / w
    out = conditional_logpdf_unit(u, (m_i - lb) / w, s_i, lambda v: unit_logpdf(spec, params, v)) - math.log(w)
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# skew-normal approximation of the parameter conditional


def _zeta(k):
    """Derivatives of ln Phi at ``k``: returns (zeta1, zeta2, zeta3)."""
    z1 = math.exp(-0.5 * k * k - 0.5 * math.log(2 * math.pi) - float(log_ndtr(k)))
    z2 = -z1 * (k + z1)
    z3 = -z2 * (k + z1) - z1 * (1 + z2)
    return z1, z2, z3


@dataclass(eq=False)
class SNApprox:
    """Skew-normal approximation ``SN(mu, Sigma, delta)``.

    ``mu`` is the location parameter and ``mode`` the matched posterior
    mode; they coincide when ``delta = 0``.  ``fallback`` is set when the
    skewness solve failed and a Gaussian (Laplace) fit was used instead.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    delta: np.ndarray
    mode: np.ndarray
    log_det: float = 0.0
    fallback: bool = False
    kappa: float = 0.0
    hessian: np.ndarray | None = field(default=None, repr=False)

    @property
    def params(self):
        return dists.SkewNormalParams(self.mu, self.Sigma, self.delta)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        d = self.mu.shape[0]
        diff = np.atleast_2d(x) - self.mu
        prec = np.linalg.inv(self.Sigma)
        quad = np.einsum("ij,jk,ik->i", diff, prec, diff)
        out = math.log(2.0) - 0.5 * (d * math.log(2 * math.pi) + self.log_det + quad) + log_ndtr(diff @ self.delta)
        return out if x.ndim > 1 else float(out[0])


def _wrap_batched(log_post, vectorized):
    if vectorized:
        return lambda pts: np.asarray(log_post(pts), dtype=float).reshape(len(pts))
    return lambda pts: np.array([float(log_post(p)) for p in pts])


def _stencil(x, h):
    """Evaluation points for the central-difference gradient and Hessian."""
    d = x.shape[0]
    pts = [x]
    for j in range(d):
        e = np.zeros(d)
        e[j] = h[j]
        pts += [x + e, x - e]
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h[i]
            ej[j] = h[j]
            pts += [x + ei + ej, x + ei - ej, x - ei + ej, x - ei - ej]
    return np.array(pts)


def _derivatives(f, x, h):
    d = x.shape[0]
    vals = f(_stencil(x, h))
    f0 = vals[0]
    grad = np.empty(d)
    H = np.empty((d, d))
    k = 1
    for j in range(d):
        fp, fm = vals[k], vals[k + 1]
        grad[j] = (fp - fm) / (2 * h[j])
        H[j, j] = (fp - 2 * f0 + fm) / h[j] ** 2
        k += 2
    for i in range(d):
        for j in range(i + 1, d):
            pp, pm, mp, mm = vals[k : k + 4]
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h[i] * h[j])
            k += 4
    return f0, grad, H


def _hess_step(x):
    return 1e-4 * (1 + np.abs(x))


def _newton_mode(f, x0, max_iter=50, tol=1e-3):
    """Damped Newton ascent with finite-difference derivatives.

    Returns the mode and the stencil quantities at the last expansion point,
    or ``None`` when the local Hessian is not negative definite.
    """
    x = np.asarray(x0, dtype=float).copy()
    f_prev = -np.inf
    for _ in range(max_iter):
        f0, grad, H = _derivatives(f, x, _hess_step(x))
        if not np.isfinite(f0) or not np.all(np.isfinite(H)):
            return None
        if f0 < f_prev - 1e-9 * (1 + abs(f_prev)):
            # overshoot: retreat half-way to the previous point
            x = 0.5 * (x + x_prev)
            continue
        try:
            np.linalg.cholesky(-H)
        except np.linalg.LinAlgError:
            return None
        step = np.linalg.solve(-H, grad)
        size = math.sqrt(float(step @ (-H) @ step))
        x_prev, f_prev = x, f0
        x = x + step
        if size < tol:
            return x
    return None


def _find_mode(f, x0, rng=None, restarts=3):
    """Mode by Newton, then quasi-Newton, restarting with jitter if needed."""
    x0 = np.asarray(x0, dtype=float)
    mode = _newton_mode(f, x0)
    if mode is not None:
        return mode
    rng = np.random.default_rng(0) if rng is None else rng
    start = x0
    for _ in range(restarts + 1):
        res = optimize.minimize(lambda v: -float(f(v[None, :])[0]), start, method="BFGS", options={"gtol": 1e-8})
        if np.all(np.isfinite(res.x)):
            mode = _newton_mode(f, res.x)
            if mode is not None:
                return mode
        start = x0 + 0.1 * rng.standard_normal(x0.shape)
    raise ConvergenceError("could not locate a mode with a negative-definite Hessian")


def _solve_kappa(J, t, max_iter=200, tol=1e-12):
    """Solve ``kappa = zeta1 q / (1 + zeta2 q)`` with ``q = d' J^-1 d``."""
    Jinv = np.linalg.inv(J)

    def parts(k):
        z1, z2, z3 = _zeta(k)
        # zeta3 underflows for large k; q is then infinite and the root lies below
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = np.cbrt(t / z3)
            q = float(d @ Jinv @ d)
        return z1, z2, d, q

    k = 0.0
    for _ in range(max_iter):
        z1, z2, d, q = parts(k)
        denom = 1 + z2 * q
        if not denom > 0:
            break
        target = z1 * q / denom
        k_new = 0.5 * k + 0.5 * target
        if abs(k_new - k) < tol * (1 + abs(k)):
            return k_new
        k = k_new

    def F(k):
        z1, z2, d, q = parts(k)
        return k * (1 + z2 * q) - z1 * q

    # F(0) < 0; expand the bracket until the sign changes while Sigma stays PD
    hi = 1.0
    for _ in range(60):
        z1, z2, d, q = parts(hi)
        if 1 + z2 * q > 0 and F(hi) > 0:
            return optimize.brentq(F, 0.0, hi, xtol=1e-14)
        hi *= 1.5
    raise ConvergenceError("skewness equation has no admissible root")


def _gaussian_approx(mode, J, H, fallback):
    Sigma = np.linalg.inv(J)
    Sigma = 0.5 * (Sigma + Sigma.T)
    sign, logdet = np.linalg.slogdet(Sigma)
    return SNApprox(mode.copy(), Sigma, np.zeros_like(mode), mode.copy(), logdet, fallback, 0.0, H)


def _gradient(f, x, h):
    d = x.shape[0]
    E = np.diag(h)
    vals = f(np.vstack([x + E, x - E]))
    return (vals[:d] - vals[d:]) / (2 * h)


def _refine_mode(f, x, J0, tol=2e-2, max_iter=8):
    """Gradient steps preconditioned by a fixed curvature ``J0``.

    Cheap way to follow a mode that moved a little since ``J0`` was
    computed; returns None if it fails to settle.
    """
    for _ in range(max_iter):
        g = _gradient(f, x, _hess_step(x))
        if not np.all(np.isfinite(g)):
            return None
        step = np.linalg.solve(J0, g)
        x = x + step
        if math.sqrt(float(step @ J0 @ step)) < tol:
            return x
    return None


def fit_skewnormal(log_post, theta_init, vectorized=False, third_step=0.05, rng=None, hessian=None) -> SNApprox:
    """Third-order skew-normal approximation around the mode of ``log_post``.

    Parameters
    ----------
    log_post : callable
        Log density up to a constant.  With ``vectorized=True`` it maps a
        (k, d) array to k values; otherwise it takes one vector.
    theta_init : array_like
        Starting point of the mode search.
    third_step : float
        Step for the unmixed third derivatives, as a fraction of the
        marginal standard deviation implied by the Hessian.
    hessian : ndarray, optional
        Hessian from a nearby earlier fit; enables a cheaper warm-started
        mode search.

    Returns
    -------
    SNApprox
    """
    f = _wrap_batched(log_post, vectorized)
    x0 = np.atleast_1d(np.asarray(theta_init, dtype=float))
    x = None
    if hessian is not None:
        x = _refine_mode(f, x0, -np.asarray(hessian, dtype=float))
    if x is None:
        x = _find_mode(f, x0, rng)
    # expand at x, polish the mode with one Newton step from that expansion
    for _ in range(5):
        f0, grad, H = _derivatives(f, x, _hess_step(x))
        J = -0.5 * (H + H.T)
        try:
            np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            raise ConvergenceError("Hessian at the mode is not negative definite") from None
        step = np.linalg.solve(J, grad)
        x = x + step
        # the step is Newton-accurate; what remains is O(step^2)
        if math.sqrt(float(step @ J @ step)) < 5e-3:
            break
    mode = x
    sd = np.sqrt(np.diag(np.linalg.inv(J)))
    t = _third_derivatives(f, mode, third_step * sd)
    return _match_skewnormal(mode, J, t, H)


def _third_derivatives(f, x, h3):
    d = x.shape[0]
    E = np.diag(h3)
    vals = f(np.vstack([x + 2 * E, x + E, x - E, x - 2 * E]))
    p2, p1, m1, m2 = vals[:d], vals[d : 2 * d], vals[2 * d : 3 * d], vals[3 * d :]
    return (p2 - 2 * p1 + 2 * m1 - m2) / (2 * h3**3)


def _match_skewnormal(mode, J, t, H=None):
    """Skew-normal parameters from the mode, ``J = -Hessian`` and third derivatives."""
    sd = np.sqrt(np.diag(np.linalg.inv(J)))
    # negligible third derivatives: the Gaussian fit is already exact
    if np.all(np.abs(t) * sd**3 < 1e-8):
        return _gaussian_approx(mode, J, H, False)
    try:
        kappa = _solve_kappa(J, t)
    except (ConvergenceError, ValueError, FloatingPointError):
        return _gaussian_approx(mode, J, H, True)
    z1, z2, z3 = _zeta(kappa)
    d = np.cbrt(t / z3)
    prec = J + z2 * np.outer(d, d)
    try:
        np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        return _gaussian_approx(mode, J, H, True)
    Sigma = np.linalg.inv(prec)
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = mode - z1 * Sigma @ d
    sign, logdet = np.linalg.slogdet(Sigma)
    return SNApprox(mu, Sigma, d, mode.copy(), logdet, False, kappa, H)


def sample_theta_conditional(approx: SNApprox, rng, size=None):
    """Draw from the fitted skew-normal."""
    return dists.sample_skewnormal(approx.params, rng, size=size)
