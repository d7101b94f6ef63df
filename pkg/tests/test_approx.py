import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from bayesfuzzy import dists
from bayesfuzzy.approx import (_h_derivatives, conditional_logpdf_unit, fit_b4p, fit_b4p_core, fit_skewnormal,
                               log_unnorm_posterior_y, sample_theta_conditional, sample_y_conditional)
from bayesfuzzy.errors import DomainError
from bayesfuzzy.model import ModelSpec, ThetaY, unit_dlogpdf, unit_logpdf
from conftest import ridders


def matching_residuals(m_star, s, logf, dlogf, lam, sig):
    """Derivative mismatch at lambda in units of the proposal's sd, plus FD certificate of the target side."""
    y = lam
    h1, h2 = _h_derivatives(y, s, np.log(m_star / (1 - m_star)))
    f1, f2 = dlogf(y)
    k1, k2 = h1 + f1, h2 + f2
    a, b = sig * lam, sig * (1 - lam)
    b1 = (a - 1) / y - (b - 1) / (1 - y)
    b2 = -(a - 1) / y**2 - (b - 1) / (1 - y) ** 2
    sd = np.sqrt(lam * (1 - lam) / (sig + 1))
    step = 0.05 * np.minimum(sd, np.minimum(y, 1 - y))
    fd1, _ = ridders(lambda v: conditional_logpdf_unit(v, m_star, s, logf), y, step)
    fd2, _ = ridders(lambda v: _h_derivatives(v, s, np.log(m_star / (1 - m_star)))[0] + dlogf(v)[0], y, step)
    return {
        "d1": np.abs(b1 - k1) * sd,
        "d2": np.abs(b2 - k2) * sd**2,
        "fd1": np.abs(fd1 - k1) * sd,
        "fd2": np.abs(fd2 - k2) * sd**2,
    }


def _random_problem(rng, n):
    fam = rng.choice(["beta", "logitnormal", "kumaraswamy", "logbilal", "truncnormal"])
    spec = ModelSpec(fam)
    th = ThetaY(np.array([rng.normal(0, 1)]), rng.normal(0.5, 0.7))
    from bayesfuzzy.model import family_params

    p = tuple(np.full(n, v) for v in family_params(spec, th, np.ones((1, 1)), 0))
    m_star = rng.uniform(0.02, 0.98, n)
    s = rng.gamma(15, 5, n)
    logf = lambda u: unit_logpdf(spec, tuple(np.broadcast_to(q[0], np.shape(u)) for q in p), u)
    dlogf = lambda u: unit_dlogpdf(spec, tuple(q[: np.size(u)] for q in p), u)
    return spec, p, m_star, s, logf, dlogf


def test_fixed_point_matches_derivatives(rng):
    for _ in range(10):
        spec, p, m_star, s, logf, dlogf = _random_problem(rng, 40)
        fit = fit_b4p_core(m_star, s, lambda y, idx: unit_dlogpdf(spec, tuple(q[idx] for q in p), y))
        ok = fit.converged
        assert ok.mean() > 0.9
        r = matching_residuals(m_star[ok], s[ok], logf, dlogf, fit.lam[ok], fit.sigma[ok])
        for k in ("d1", "d2"):
            assert np.max(r[k]) < 1e-6, (spec.family, k, np.max(r[k]))
        # finite differences certify the analytic target derivatives used above
        assert np.max(r["fd1"]) < 1e-6 and np.max(r["fd2"]) < 1e-6


def test_symmetric_problem_gives_centred_proposal():
    spec = ModelSpec("beta")
    th = ThetaY(np.array([0.0]), math.log(4.0))  # Beta(2, 2)
    for s in (0.5, 5.0, 80.0, 2000.0):
        prop = fit_b4p(0.5, s, spec, th)
        assert prop.converged
        assert prop.lambda_hat == pytest.approx(0.5, abs=1e-12)


def test_rescaling_invariance():
    th = ThetaY(np.array([0.4]), 1.2)
    unit = fit_b4p(0.3, 40.0, ModelSpec("beta"), th)
    wide = fit_b4p(-2 + 6 * 0.3, 40.0, ModelSpec("beta", bounds=(-2.0, 4.0)), th)
    assert (wide.lambda_hat + 2) / 6 == pytest.approx(unit.lambda_hat, abs=1e-8)
    assert wide.sigma_hat == pytest.approx(unit.sigma_hat, rel=1e-8)


def test_fit_b4p_domain():
    with pytest.raises(DomainError):
        fit_b4p(1.2, 4.0, ModelSpec("beta"), ThetaY(np.array([0.0]), 1.0))
    with pytest.raises(DomainError):
        fit_b4p_core([0.5], [-1.0], lambda y, i: (0 * y, 0 * y))


def test_fallback_when_iterations_run_out():
    spec = ModelSpec("beta")
    p = (np.array([2.0]), np.array([3.0]))
    fit = fit_b4p_core([0.9], [50.0], lambda y, idx: unit_dlogpdf(spec, tuple(q[idx] for q in p), y), max_iter=1)
    assert fit.fallback[0] and not fit.converged[0]
    assert 0 < fit.lam[0] < 1 and fit.sigma[0] > 0


def test_proposal_sampling(rng):
    spec = ModelSpec("beta", bounds=(1.0, 5.0))
    th = ThetaY(np.array([0.3]), 2.0)
    prop = fit_b4p(3.2, 60.0, spec, th)
    x = sample_y_conditional(prop, rng, size=100_000)
    assert np.all((x > 1) & (x < 5))
    assert abs(x.mean() - prop.lambda_hat) < 3 * x.std() / math.sqrt(x.size)
    a, b = prop.shapes
    ks = stats.kstest((x - 1) / 4, stats.beta(a, b).cdf).statistic
    assert ks < 0.01
    from bayesfuzzy.approx import B4PProposal

    tight = B4PProposal(2.5, 1e9, 1.0, 5.0)
    assert sample_y_conditional(tight, rng, size=1000).std() < 1e-3


def test_unnormalised_posterior_is_proportional():
    spec = ModelSpec("kumaraswamy", bounds=(0.0, 2.0))
    th = ThetaY(np.array([-0.2]), 0.4)
    m, s = 0.7, 30.0
    y = np.linspace(0.05, 1.95, 200)
    lp = log_unnorm_posterior_y(y, m, s, spec, th)
    u = y / 2
    from bayesfuzzy.model import latent_logpdf

    direct = dists.Beta4P.logpdf(m, s * u, s - s * u, 0.0, 2.0) + latent_logpdf(spec, th, np.ones((1, 1)), y)
    assert np.std(lp - direct) < 1e-10
    assert log_unnorm_posterior_y(2.5, m, s, spec, th) == -np.inf


def test_grid_mode_inside_proposal_bulk():
    spec = ModelSpec("logitnormal")
    th = ThetaY(np.array([0.8]), 0.3)
    m, s = 0.35, 25.0
    prop = fit_b4p(m, s, spec, th)
    y = np.linspace(1e-4, 1 - 1e-4, 10_000)
    lp = log_unnorm_posterior_y(y, m, s, spec, th)
    w = np.exp(lp - lp.max())
    assert w.sum() * (y[1] - y[0]) > 0
    a, b = prop.shapes
    lo, hi = stats.beta(a, b).ppf([0.025, 0.975])
    assert lo < y[np.argmax(lp)] < hi


# --------------------------------------------------------------------------
# skew-normal


def test_quadratic_target_is_recovered_exactly():
    mu = np.array([1.0, -2.0, 0.5])
    A = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]])
    P = np.linalg.inv(A)
    f = lambda x: -0.5 * (x - mu) @ P @ (x - mu)
    sn = fit_skewnormal(f, np.zeros(3))
    assert np.max(np.abs(sn.delta)) < 1e-4
    np.testing.assert_allclose(sn.mu, mu, atol=1e-4)
    np.testing.assert_allclose(sn.Sigma, A, atol=1e-4)
    assert not sn.fallback


def test_log_gamma_target_has_positive_skew():
    f = lambda x: 4 * math.log(x[0]) - x[0] if x[0] > 0 else -np.inf
    sn = fit_skewnormal(f, np.array([2.0]))
    assert sn.mode[0] == pytest.approx(4.0, abs=1e-4)
    # the analytic third derivative 8 / x^3 is positive at the mode
    assert sn.delta[0] > 0


def _grid_tv(logp, approx, lo, hi, n=200_001):
    x = np.linspace(lo, hi, n)
    p = np.exp(logp(x))
    p /= np.trapezoid(p, x)
    q = np.exp(approx.logpdf(x[:, None]))
    q /= np.trapezoid(q, x)
    return 0.5 * np.trapezoid(np.abs(p - q), x)


def test_beta_target_skew_normal_beats_laplace():
    logp = lambda x: np.where((x > 0) & (x < 1), 4 * np.log(np.clip(x, 1e-300, 1)) + np.log1p(-np.clip(x, 0, 1 - 1e-16)), -np.inf)
    sn = fit_skewnormal(lambda v: float(logp(v[0])), np.array([0.5]))
    from bayesfuzzy.approx import SNApprox

    laplace = SNApprox(sn.mode, np.linalg.inv(sn.hessian * -1), np.zeros(1), sn.mode)
    laplace.log_det = float(np.linalg.slogdet(laplace.Sigma)[1])
    tv_sn = _grid_tv(logp, sn, -1.0, 2.0)
    tv_lap = _grid_tv(logp, laplace, -1.0, 2.0)
    assert tv_sn < tv_lap


def test_theta_sampling_reproducible_and_gaussian_without_skew(rng):
    mu = np.array([0.3, -0.1])
    A = np.array([[0.5, 0.1], [0.1, 0.2]])
    P = np.linalg.inv(A)
    sn = fit_skewnormal(lambda x: -0.5 * (x - mu) @ P @ (x - mu), np.zeros(2))
    a = sample_theta_conditional(sn, np.random.default_rng(9), size=50_000)
    b = sample_theta_conditional(sn, np.random.default_rng(9), size=50_000)
    assert np.array_equal(a, b)
    np.testing.assert_allclose(a.mean(axis=0), mu, atol=0.01)
    np.testing.assert_allclose(np.cov(a.T), A, rtol=0.05)


def test_skew_normal_sample_mode_near_fitted_mode(rng):
    f = lambda x: 4 * math.log(x[0]) - x[0] if x[0] > 0 else -np.inf
    sn = fit_skewnormal(f, np.array([2.0]))
    x = sample_theta_conditional(sn, rng, size=100_000).ravel()
    kde = stats.gaussian_kde(x[:20_000])
    grid = np.linspace(np.quantile(x, 0.05), np.quantile(x, 0.95), 400)
    assert abs(grid[np.argmax(kde(grid))] - sn.mode[0]) < 0.25


def test_batched_and_scalar_targets_agree():
    mu = np.array([0.2, 0.1])
    f1 = lambda x: -np.sum((x - mu) ** 2) - 0.1 * np.sum((x - mu) ** 3)
    fb = lambda X: -np.sum((X - mu) ** 2, axis=1) - 0.1 * np.sum((X - mu) ** 3, axis=1)
    a = fit_skewnormal(f1, np.zeros(2))
    b = fit_skewnormal(fb, np.zeros(2), vectorized=True)
    np.testing.assert_allclose(a.mu, b.mu, atol=1e-8)
    np.testing.assert_allclose(a.delta, b.delta, atol=1e-6)
