"""Convergence diagnostics, WAIC, density distances and posterior predictive checks.

Chains are passed as a list (or 2-d array) of equal-length draw vectors
of one scalar parameter.  R-hat and the effective sample sizes work on
rank-normalised draws, so they are invariant to monotone transformations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtri
from scipy.stats import rankdata

from . import dists
from .errors import DomainError, IntegrationError, ParameterError
from .fuzznum import Interval, beta_centroid, beta_cut_width, beta_kaufman
from .model import FuzzyDataset, ModelSpec, ThetaS, ThetaY, latent_logpdf, simulate

_QUAD_RTOL = 1e-7


# --------------------------------------------------------------------------
# chain diagnostics


def _as_chains(chains, min_chains=2):
    try:
        arr = np.asarray([np.asarray(c, dtype=float).ravel() for c in chains])
    except ValueError as exc:
        raise ParameterError("chains must have equal lengths") from exc
    if arr.ndim != 2 or arr.shape[0] < min_chains:
        raise ParameterError(f"need at least {min_chains} chains")
    if arr.shape[1] < 4:
        raise ParameterError("each chain needs at least 4 draws")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("chains contain non-finite draws")
    return arr


def _split(arr):
    half = arr.shape[1] // 2
    return np.vstack([arr[:, :half], arr[:, arr.shape[1] - half:]])


def _rank_normalize(arr):
    """Normal scores of the pooled ranks (Blom offset), ties averaged."""
    r = rankdata(arr, method="average").reshape(arr.shape)
    return ndtri((r - 0.375) / (arr.size + 0.25))


def _rhat_basic(arr):
    # pooled over mean within-chain variance; exactly 1 when the chains agree
    within = arr.var(axis=1).mean()
    if within == 0:
        return 1.0 if arr.var() == 0 else np.inf
    return math.sqrt(arr.var() / within)


def rhat(chains, split=False) -> float:
    """Rank-normalised potential scale reduction factor.

    Computed as ``sqrt(pooled variance / mean within-chain variance)`` on
    normal scores of the pooled ranks, for both the draws and their
    distances from the pooled median; the larger value is returned.
    This equals ``sqrt(1 + B / W)`` with both variances on the same
    footing, so identical chains give exactly 1.

    Parameters
    ----------
    chains : sequence of array_like
        At least two chains of equal length (>= 4).
    split : bool
        Halve every chain first, which also flags within-chain drift.
    """
    arr = _as_chains(chains)
    if split:
        arr = _split(arr)
    bulk = _rhat_basic(_rank_normalize(arr))
    folded = _rhat_basic(_rank_normalize(np.abs(arr - np.median(arr))))
    return max(bulk, folded)


def _autocov(arr):
    """Biased autocovariance of every chain via FFT."""
    n = arr.shape[1]
    x = arr - arr.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def _ess_raw(arr):
    """Multi-chain ESS with Geyer's initial monotone sequence estimator."""
    m, n = arr.shape
    acov = _autocov(arr)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += arr.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        raise DomainError("ESS is undefined for constant draws")
    rho = 1.0 - (mean_var - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    npair = (n - 1) // 2
    pairs = rho[: 2 * npair].reshape(npair, 2).sum(axis=1)
    # truncate at the first non-positive pair, then force monotone decrease
    neg = np.flatnonzero(pairs <= 0)
    k = neg[0] if neg.size else npair
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * pairs.sum()
    total = m * n
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


def ess(chains, mode="bulk") -> float:
    """Effective sample size of split, rank-normalised chains.

    ``mode="bulk"`` uses normal scores of the ranks; ``mode="tail"`` is the
    smaller ESS of the indicators for the 5% and 95% quantiles.

    Raises
    ------
    DomainError
        If the draws (or a tail indicator) are constant.
    """
    arr = _as_chains(chains, min_chains=1)
    if np.ptp(arr) == 0:
        raise DomainError("ESS is undefined for constant draws")
    arr = _split(arr)
    if mode == "bulk":
        return _ess_raw(_rank_normalize(arr))
    if mode == "tail":
        lo, hi = np.quantile(arr, [0.05, 0.95])
        return min(_ess_raw((arr <= lo).astype(float)), _ess_raw((arr <= hi).astype(float)))
    raise ParameterError(f"unknown ESS mode {mode!r}")


def hpdi(draws, mass=0.95) -> Interval:
    """Shortest interval holding ``ceil(mass * N)`` of the sorted draws."""
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    n = x.size
    if n < 100:
        raise ParameterError("hpdi needs at least 100 draws")
    if not 0 < mass < 1:
        raise ParameterError("mass must lie in (0, 1)")
    # round first so that e.g. 0.95 * 1e5 does not become 95001
    k = int(math.ceil(round(mass * n, 9)))
    widths = x[k - 1:] - x[: n - k + 1]
    i = int(np.argmin(widths))
    return Interval(float(x[i]), float(x[i + k - 1]))


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-parameter posterior summaries across pooled chains."""

    names: list
    mean: np.ndarray
    sd: np.ndarray
    hpdi_lb: np.ndarray
    hpdi_ub: np.ndarray
    rhat: np.ndarray
    ess_bulk: np.ndarray
    ess_tail: np.ndarray

    def rows(self):
        keys = ("mean", "sd", "hpdi_lb", "hpdi_ub", "rhat", "ess_bulk", "ess_tail")
        for j, name in enumerate(self.names):
            yield name, {k: float(getattr(self, k)[j]) for k in keys}


def summarize(chains, names=None, mass=0.95) -> PosteriorSummary:
    """Summarise a list of :class:`~bayesfuzzy.gibbs.ChainDraws` (or draw arrays).

    Each chain is either an object with a ``theta`` array or an array of
    shape (draws, parameters).
    """
    draws = [np.asarray(getattr(c, "theta", c), dtype=float) for c in chains]
    if names is None:
        names = list(getattr(chains[0], "names", None) or [f"p{j}" for j in range(draws[0].shape[1])])
    stack = np.stack(draws)  # (chains, draws, params)
    P = stack.shape[2]
    pooled = stack.reshape(-1, P)
    mean, sd = pooled.mean(axis=0), pooled.std(axis=0, ddof=1)
    lb, ub, rh, eb, et = (np.empty(P) for _ in range(5))
    for j in range(P):
        iv = hpdi(pooled[:, j], mass)
        lb[j], ub[j] = iv.lo, iv.hi
        per_chain = stack[:, :, j]
        rh[j] = rhat(per_chain) if stack.shape[0] > 1 else np.nan
        eb[j] = ess(per_chain, "bulk")
        et[j] = ess(per_chain, "tail")
    return PosteriorSummary(list(names), mean, sd, lb, ub, rh, eb, et)


# --------------------------------------------------------------------------
# WAIC


@dataclass(frozen=True)
class WAICResult:
    waic: float
    lppd: float
    p_waic: float
    pointwise: np.ndarray


def waic_details(loglik) -> WAICResult:
    """WAIC with its components from a (draws, units) log-likelihood matrix."""
    ll = np.atleast_2d(np.asarray(loglik, dtype=float))
    if not np.all(np.isfinite(ll)):
        raise ParameterError("log-likelihood matrix must be finite")
    D = ll.shape[0]
    lppd_i = logsumexp(ll, axis=0) - math.log(D)
    p_i = ll.var(axis=0, ddof=1) if D > 1 else np.zeros(ll.shape[1])
    point = -2.0 * (lppd_i - p_i)
    return WAICResult(float(point.sum()), float(lppd_i.sum()), float(p_i.sum()), point)


def waic(loglik) -> float:
    """``-2 (lppd - p_waic)``; lower is better."""
    return waic_details(loglik).waic


def _pooled(chains, attr="theta"):
    return np.concatenate([np.asarray(getattr(c, attr)) for c in chains])


def _mode_logpdf(data: FuzzyDataset, spec: ModelSpec, u):
    """``ln f(m_i | y_i, s_i)`` for unit-scale latent values ``u`` (broadcast over rows)."""
    lb, ub = spec.bounds
    a = data.s * u
    return dists.Beta4P.logpdf(data.m, a, data.s - a, lb, ub)


def pointwise_loglik(chains, data: FuzzyDataset, spec: ModelSpec, mode="conditional",
                     rng=None, inner=200, max_draws=None):
    """Pointwise log-likelihood matrix for WAIC.

    ``mode="conditional"`` (default) scores every retained draw with its own
    latent outcomes, ``ln f_Y(y_i | theta) + ln f(m_i | y_i, s_i)``; the
    chains must have been run with ``keep_latent=True``.
    ``mode="marginal"`` integrates the latent outcome out of
    ``f(m_i | theta)`` by Monte Carlo with ``inner`` fresh draws per unit.

    Returns
    -------
    ndarray, shape (draws, n)
    """
    theta = _pooled(chains)
    J = data.J
    sel = np.arange(theta.shape[0])
    if max_draws is not None and sel.size > max_draws:
        sel = np.linspace(0, sel.size - 1, max_draws).round().astype(int)
    lb, ub = spec.bounds
    out = np.empty((sel.size, data.n))
    if mode == "conditional":
        if any(c.y_latent is None for c in chains):
            raise ParameterError("conditional WAIC needs chains run with keep_latent=True")
        ys = _pooled(chains, "y_latent")
        for r, d in enumerate(sel):
            ty = ThetaY(theta[d, :J], theta[d, J])
            u = (ys[d] - lb) / (ub - lb)
            out[r] = latent_logpdf(spec, ty, data.X, ys[d]) + _mode_logpdf(data, spec, u)
        return out
    if mode == "marginal":
        from .model import _sample_unit, family_params

        rng = np.random.default_rng(rng)
        for r, d in enumerate(sel):
            ty = ThetaY(theta[d, :J], theta[d, J])
            params = tuple(np.broadcast_to(p, (data.n,)) for p in family_params(spec, ty, data.X))
            u = _sample_unit(spec, params, rng, (inner, data.n))
            u = np.clip(u, 1e-10, 1 - 1e-10)
            out[r] = logsumexp(_mode_logpdf(data, spec, u), axis=0) - math.log(inner)
        return out
    raise ParameterError(f"unknown WAIC mode {mode!r}")


# --------------------------------------------------------------------------
# distances between densities


def _integrate(fun, support: Interval, points=None):
    pts = [p for p in (points or ()) if support.lo < p < support.hi] or None
    val, err, info = integrate.quad(fun, support.lo, support.hi, points=pts, epsabs=1e-12,
                                    epsrel=_QUAD_RTOL, limit=500, full_output=True)[:3]
    if not np.isfinite(val) or err > max(1e-6 * abs(val), 1e-9):
        raise IntegrationError(f"distance quadrature failed: value {val:g}, error {err:g}")
    return val


def tv_distance(f, g, support: Interval, points=None) -> float:
    """Total variation ``0.5 * int |f - g|`` over ``support``."""
    val = 0.5 * _integrate(lambda x: abs(f(x) - g(x)), support, points)
    return float(min(max(val, 0.0), 1.0))


def hellinger(f, g, support: Interval, points=None) -> float:
    """Hellinger distance ``sqrt(0.5 * int (sqrt f - sqrt g)^2)`` over ``support``."""
    val = 0.5 * _integrate(lambda x: (math.sqrt(max(f(x), 0.0)) - math.sqrt(max(g(x), 0.0))) ** 2,
                           support, points)
    return float(math.sqrt(min(max(val, 0.0), 1.0)))


def grid_distances(logf, logg, grid):
    """TV and Hellinger distances from log densities tabulated on a grid.

    Both densities are normalised on the grid (trapezoid rule), so
    unnormalised log densities are fine.  Arrays of shape (k, len(grid))
    give k distances at once.
    """
    logf, logg = np.atleast_2d(logf), np.atleast_2d(logg)
    w = np.empty_like(grid)
    dx = np.diff(grid)
    w[0], w[-1] = dx[0] / 2, dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2

    def normalise(lp):
        lp = lp - lp.max(axis=1, keepdims=True)
        p = np.exp(lp)
        return p / (p @ w)[:, None]

    f, g = normalise(logf), normalise(logg)
    tv = 0.5 * (np.abs(f - g) @ w)
    hd2 = 0.5 * ((np.sqrt(f) - np.sqrt(g)) ** 2 @ w)
    return np.clip(tv, 0, 1), np.sqrt(np.clip(hd2, 0, 1))


# --------------------------------------------------------------------------
# posterior predictive checks

STATISTICS = ("centroid", "support_width", "kaufman")


def fuzzy_statistics(m, s, lb, ub):
    """Centroid, 0.01-cut width and Kaufman index of Beta fuzzy numbers."""
    return {
        "centroid": beta_centroid(m, s, lb, ub),
        "support_width": beta_cut_width(m, s, lb, ub, alpha=0.01),
        "kaufman": beta_kaufman(m, s, lb, ub),
    }


@dataclass(frozen=True)
class StatisticCheck:
    """Predictive check of one statistic; per-unit arrays have shape (n,)."""

    observed: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    min: np.ndarray
    max: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    cp: float
    bp: float


@dataclass(frozen=True)
class PPCReport:
    B: int
    checks: dict = field(default_factory=dict)

    @property
    def cp(self):
        return {k: v.cp for k, v in self.checks.items()}

    @property
    def bp(self):
        return {k: v.bp for k, v in self.checks.items()}


def check_statistic(observed, replicates) -> StatisticCheck:
    """Coverage and tail-probability summary for one statistic.

    ``replicates`` has shape (B, n).  CP is the fraction of units whose
    observed value lies in the central 95% predictive interval; with
    ``p_i = Pr(rep_i >= obs_i)``, ``bP = |2 mean(p) - 1|``.
    """
    rep = np.asarray(replicates, dtype=float)
    obs = np.asarray(observed, dtype=float)
    q = np.quantile(rep, [0.025, 0.25, 0.75, 0.975], axis=0)
    inside = (obs >= q[0]) & (obs <= q[3])
    p = (rep >= obs).mean(axis=0)
    return StatisticCheck(
        observed=obs, q1=q[1], q3=q[2], min=rep.min(axis=0), max=rep.max(axis=0),
        lo95=q[0], hi95=q[3], cp=float(inside.mean()), bp=float(abs(2 * p.mean() - 1)),
    )


def ppc(chains, data: FuzzyDataset, spec: ModelSpec, theta_s: ThetaS | None = None, B=500, rng=None) -> PPCReport:
    """Posterior predictive check on the centroid, support width and Kaufman index.

    ``B`` parameter vectors are drawn from the pooled chains; for each a
    replicate fuzzy dataset is simulated with the observed covariates and
    the statistics are computed per unit.  Replicates use the model bounds
    as the support of every fuzzy number, the observations their own.
    """
    if B < 100:
        raise ParameterError("ppc needs B >= 100 replicates")
    if theta_s is None:
        theta_s = chains[0].theta_s
    rng = np.random.default_rng(rng)
    theta = _pooled(chains)
    J = data.J
    picks = rng.integers(0, theta.shape[0], size=B)
    seeds = rng.spawn(B)
    lb, ub = spec.bounds
    reps = {k: np.empty((B, data.n)) for k in STATISTICS}
    for b, (d, sub) in enumerate(zip(picks, seeds)):
        ty = ThetaY(theta[d, :J], theta[d, J])
        sim = simulate(spec, ty, theta_s, data.X, sub, keep_latent=False)
        for k, v in fuzzy_statistics(sim.m, sim.s, lb, ub).items():
            reps[k][b] = v
    observed = fuzzy_statistics(data.m, data.s, data.obs_lb, data.obs_ub)
    return PPCReport(B, {k: check_statistic(observed[k], reps[k]) for k in STATISTICS})
