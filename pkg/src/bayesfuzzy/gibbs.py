"""Approximated Gibbs sampler for the fuzzy regression model.

The Gamma law of the precisions is estimated once by maximum likelihood;
it factorises away from the remaining terms.  Each iteration then

1. fits a Beta4P proposal to every latent conditional and draws ``y``;
2. fits a skew-normal to ``pi(theta_y | y, D)`` and draws ``theta_y``
   (directly, or as an independence Metropolis-Hastings proposal).

Because ``ln f(m | y, s)`` does not involve ``theta_y``, step 2 only
needs the complete-data likelihood of ``y`` plus the prior.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .approx import _model_dlogf, _unit_params, fit_b4p_core, fit_skewnormal, sample_theta_conditional, sample_y_batch
from .errors import ChainFailure, ConvergenceError, ParameterError
from .model import FuzzyDataset, ModelSpec, ThetaS, ThetaY, loglik_theta
from .special import digamma, trigamma


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gaussian priors on the coefficients and on unconstrained phi."""

    beta_mean: float = 0.0
    beta_sd: float = 10.0
    phi_mean: float = 0.0
    phi_sd: float = 5.0

    def __post_init__(self):
        if not (np.all(np.asarray(self.beta_sd) > 0) and self.phi_sd > 0):
            raise ParameterError("prior standard deviations must be positive")

    def logpdf(self, beta, phi):
        """Log prior density for a batch: ``beta`` (k, J), ``phi`` (k,)."""
        beta = np.atleast_2d(beta)
        zb = (beta - self.beta_mean) / self.beta_sd
        zp = (np.asarray(phi, dtype=float) - self.phi_mean) / self.phi_sd
        const = np.sum(np.log(np.broadcast_to(self.beta_sd, beta.shape[1:]))) + math.log(self.phi_sd)
        return -0.5 * (np.sum(zb * zb, axis=1) + zp * zp) - const - 0.5 * (beta.shape[1] + 1) * math.log(2 * math.pi)

    def mean(self, J):
        return np.append(np.broadcast_to(self.beta_mean, (J,)).astype(float), self.phi_mean)


@dataclass(frozen=True)
class SamplerConfig:
    """Run settings; defaults follow five chains of 4000 draws after 2000 burn-in."""

    chains: int = 5
    samples: int = 4000
    burnin: int = 2000
    seed: int = 0
    eps: float = 1e-6
    max_iter: int = 200
    mh_correct: bool = False
    sn_refresh: int = 1
    keep_latent: bool = False
    jitter: float = 0.1
    fail_window: int = 50
    fail_rate: float = 0.05

    def __post_init__(self):
        if self.chains < 1 or self.samples < 1 or self.burnin < 0:
            raise ParameterError("need chains >= 1, samples >= 1 and burnin >= 0")
        if self.sn_refresh < 1:
            raise ParameterError("sn_refresh must be at least 1")
        if not self.eps > 0:
            raise ParameterError("eps must be positive")


@dataclass(eq=False)
class ChainDraws:
    """Retained draws of one chain.

    ``theta`` has one row per retained iteration and columns
    ``beta_0 .. beta_{J-1}, phi``; ``y_latent`` (optional) holds the
    response-scale latent draws.
    """

    theta: np.ndarray
    chain_id: int
    seed: object
    theta_s: ThetaS
    y_latent: np.ndarray | None = None
    b4p_fallback_count: int = 0
    sn_fallback_count: int = 0
    acceptance_rate: float | None = None
    names: list = field(default_factory=list)

    @property
    def beta(self):
        return self.theta[:, :-1]

    @property
    def phi(self):
        return self.theta[:, -1]


def gamma_mle(s, tol=1e-13, max_iter=100) -> ThetaS:
    """Maximum-likelihood Gamma (shape, scale) fit to positive data.

    Newton's method in ``log alpha`` on ``ln a - psi(a) = ln mean(s) - mean(ln s)``,
    started from the method-of-moments shape.
    """
    s = np.asarray(s, dtype=float).ravel()
    if s.size < 2:
        raise ParameterError("gamma_mle needs at least two observations")
    if np.any(~(s > 0)) or not np.all(np.isfinite(s)):
        raise ParameterError("gamma_mle needs finite positive data")
    mean = s.mean()
    c = math.log(mean) - float(np.mean(np.log(s)))
    if not c > 0 or np.all(s == s[0]):
        raise ParameterError("gamma_mle needs data that are not all equal")
    var = s.var()
    alpha = mean * mean / var if var > 0 else 1.0
    x = math.log(alpha)
    for _ in range(max_iter):
        a = math.exp(x)
        g = x - digamma(a) - c
        dg = 1.0 - a * trigamma(a)
        step = g / dg
        # keep Newton from jumping more than a factor e^3 at once
        step = max(min(step, 3.0), -3.0)
        x -= step
        if abs(step) < tol * max(1.0, abs(x)) or abs(g) < 1e-15 * max(1.0, c):
            break
    else:
        raise ConvergenceError("gamma_mle Newton iteration did not converge", residual=g)
    alpha = math.exp(x)
    return ThetaS(alpha, mean / alpha)


def _chain_seed(seed, chain_id):
    return np.random.SeedSequence(seed, spawn_key=(chain_id,))


def run_chain(data: FuzzyDataset, spec: ModelSpec, prior: PriorSpec | None = None,
              cfg: SamplerConfig | None = None, chain_id: int = 0) -> ChainDraws:
    """Run one chain of the approximated Gibbs sampler.

    Raises
    ------
    ChainFailure
        If more than ``cfg.fail_rate`` of the unit-level latent updates in
        the last ``cfg.fail_window`` iterations had to use the fallback fit.
    """
    cfg = cfg or SamplerConfig()
    prior = prior or spec.prior or PriorSpec()
    if data.J != spec.J:
        raise ParameterError(f"spec expects J={spec.J} columns, data has {data.J}")
    if tuple(data.bounds) != tuple(spec.bounds):
        raise ParameterError("dataset bounds differ from the model bounds")
    seed_seq = _chain_seed(cfg.seed, chain_id)
    rng = np.random.default_rng(seed_seq)
    theta_s = gamma_mle(data.s)

    n, J = data.n, data.J
    lb, ub = spec.bounds
    m_star = data.m_star
    X = data.X

    theta = prior.mean(J) + cfg.jitter * rng.standard_normal(J + 1)
    u = m_star.copy()

    def log_post(pts):
        return loglik_theta(spec, X, u, pts[:, :J], pts[:, J]) + prior.logpdf(pts[:, :J], pts[:, J])

    total = cfg.burnin + cfg.samples
    kept = np.empty((cfg.samples, J + 1))
    latent = np.empty((cfg.samples, n)) if cfg.keep_latent else None
    window = deque(maxlen=cfg.fail_window)
    b4p_fallbacks = 0
    sn_fallbacks = 0
    accepted = 0
    sn = None
    fit = None
    for t in range(total):
        ty = ThetaY(theta[:J], theta[J])
        params = _unit_params(spec, ty, X)
        # warm start from the previous fixed point (same limit, fewer steps)
        init = None if fit is None else (fit.lam, fit.sigma)
        fit = fit_b4p_core(m_star, data.s, _model_dlogf(spec, params), cfg.eps, cfg.max_iter, init)
        nfb = int(fit.fallback.sum())
        b4p_fallbacks += nfb
        window.append(nfb)
        if len(window) == cfg.fail_window and sum(window) > cfg.fail_rate * n * cfg.fail_window:
            raise ChainFailure(
                f"chain {chain_id}: latent-step fallbacks exceeded {cfg.fail_rate:.0%} at iteration {t}",
                payload={"iteration": t, "theta": theta.copy(), "fallbacks": list(window), "chain_id": chain_id},
            )
        u = sample_y_batch(fit, rng)

        if sn is None or t % cfg.sn_refresh == 0:
            start, hint = (theta, None) if sn is None else (sn.mode, sn.hessian)
            try:
                sn = fit_skewnormal(log_post, start, vectorized=True, rng=rng, hessian=hint)
            except ConvergenceError as exc:
                raise ChainFailure(
                    f"chain {chain_id}: parameter approximation failed at iteration {t}: {exc}",
                    payload={"iteration": t, "theta": theta.copy(), "chain_id": chain_id},
                ) from exc
            sn_fallbacks += int(sn.fallback)
        proposal = sample_theta_conditional(sn, rng)
        # the first proposal is the starting value: an independence sampler
        # cannot leave a point far in the proposal's tail
        if cfg.mh_correct and t > 0:
            pair = np.vstack([proposal, theta])
            lp = log_post(pair)
            lq = sn.logpdf(pair)
            log_ratio = (lp[0] - lp[1]) - (lq[0] - lq[1])
            if np.isfinite(lp[0]) and math.log(rng.random()) < log_ratio:
                theta = proposal
                accepted += t >= cfg.burnin
        else:
            theta = proposal
        if t >= cfg.burnin:
            kept[t - cfg.burnin] = theta
            if latent is not None:
                latent[t - cfg.burnin] = lb + (ub - lb) * u

    return ChainDraws(
        theta=kept,
        chain_id=chain_id,
        seed=seed_seq.entropy,
        theta_s=theta_s,
        y_latent=latent,
        b4p_fallback_count=b4p_fallbacks,
        sn_fallback_count=sn_fallbacks,
        acceptance_rate=(accepted / cfg.samples) if cfg.mh_correct else None,
        names=list(data.columns[:J]) + ["phi"],
    )


def run_chains(data: FuzzyDataset, spec: ModelSpec, prior: PriorSpec | None = None,
               cfg: SamplerConfig | None = None, parallel: bool = False) -> list:
    """Run ``cfg.chains`` independent chains with per-chain seed substreams.

    With ``parallel=True`` chains run in separate processes; results come
    back in chain order either way.
    """
    cfg = cfg or SamplerConfig()
    ids = range(cfg.chains)
    if parallel and cfg.chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor() as pool:
            futures = [pool.submit(run_chain, data, spec, prior, cfg, k) for k in ids]
            return [f.result() for f in futures]
    return [run_chain(data, spec, prior, cfg, k) for k in ids]
