import math

import numpy as np
import pytest
from scipy import integrate, optimize
from scipy.special import expit

from bayesfuzzy import dists
from bayesfuzzy.errors import ParameterError
from bayesfuzzy.fuzznum import BetaFuzzyNumber, Interval, TrapezoidalFuzzyNumber
from bayesfuzzy.model import (FuzzyDataset, ModelSpec, ThetaS, ThetaY, add_intercept, canonical_family,
                              derive_bounds, family_params, latent_logpdf, linear_predictor, loglik_theta,
                              mean_from_eta, mode_moments, simulate, standardize, unit_logpdf, unit_moments,
                              widen_bounds)


def test_spec_validation():
    assert ModelSpec("Beta").link == "logit"
    assert ModelSpec("lognormal", bounds=(0.5, 9.0)).link == "log"
    assert canonical_family("Truncated-Normal") == "truncnormal"
    with pytest.raises(ParameterError):
        ModelSpec("beta", link="log")
    with pytest.raises(ParameterError):
        ModelSpec("beta", bounds=(1.0, 1.0))
    with pytest.raises(ParameterError):
        ModelSpec("weibull")
    with pytest.raises(ParameterError):
        ThetaS(0.0, 1.0)


def test_linear_predictor_and_links():
    X = np.array([[1.0, 2.0], [1.0, -1.0], [1.0, 0.5]])
    np.testing.assert_allclose(linear_predictor(X, np.array([1.0, -1.0])), [-1.0, 2.0, 0.5])
    assert np.all(mean_from_eta(linear_predictor(X, np.zeros(2)), "logit") == 0.5)
    assert mean_from_eta(np.inf, "logit") == 1.0
    assert mean_from_eta(0.0, "logit", bounds=(1.0, 5.0)) == 3.0
    with pytest.raises(ParameterError):
        linear_predictor(X, np.zeros(3))


def test_family_params_examples():
    th = ThetaY(np.array([0.0]), math.log(10.0))
    a, b = family_params(ModelSpec("beta"), th, np.ones((1, 1)), 0)
    assert (a, b) == pytest.approx((5.0, 5.0))
    a, b = family_params(ModelSpec("kumaraswamy"), ThetaY(np.array([0.0]), 0.0), np.ones((1, 1)), 0)
    assert a == pytest.approx(-math.log(1 - 0.5**0.5) / math.log(2.0), rel=1e-14)
    assert b == pytest.approx(2.0)  # b = 1 / nu with nu = logistic(0)
    with pytest.raises(ParameterError):
        family_params(ModelSpec("beta", link="identity"), ThetaY(np.array([1.5]), 0.0), np.ones((1, 1)), 0)


@pytest.mark.parametrize("eta", [-1.3, 0.0, 0.8])
def test_family_params_location_roundtrip(eta):
    X = np.ones((1, 1))
    mu = float(expit(eta))
    th = ThetaY(np.array([eta]), 0.7)
    # mean-parametrised families
    for fam in ("beta", "logbilal"):
        spec = ModelSpec(fam)
        p = family_params(spec, th, X, 0)
        f = lambda u: u * math.exp(float(unit_logpdf(spec, p, u)))
        assert integrate.quad(f, 0, 1, epsrel=1e-12)[0] == pytest.approx(mu, abs=1e-6)
    # median-parametrised families
    for fam in ("kumaraswamy", "logitnormal"):
        spec = ModelSpec(fam)
        p = family_params(spec, th, X, 0)
        cdf = lambda q: integrate.quad(lambda u: math.exp(float(unit_logpdf(spec, p, u))), 0, q, epsrel=1e-12)[0]
        assert cdf(mu) == pytest.approx(0.5, abs=1e-6)
    # lognormal: location on the log scale
    spec = ModelSpec("lognormal", bounds=(0.0, 50.0))
    p = family_params(spec, th, X, 0)
    assert p[0] == pytest.approx(eta)


def test_dataset_validation_and_helpers():
    X = add_intercept(np.array([1.0, 2.0, 3.0]))
    d = FuzzyDataset([0.2, 0.5, 0.7], [3.0, 4.0, 5.0], X)
    assert d.n == 3 and d.J == 2
    assert d.observations[1] == BetaFuzzyNumber(0.5, 4.0)
    with pytest.raises(ParameterError):
        FuzzyDataset([0.2, 1.5, 0.7], [3.0, 4.0, 5.0], X)
    with pytest.raises(ParameterError):
        FuzzyDataset([0.2, 0.5, 0.7], [3.0, -4.0, 5.0], X)
    with pytest.raises(ParameterError):
        FuzzyDataset([0.2, 0.5, 0.7], [3.0, 4.0, 5.0], np.array([[1, np.nan]] * 3))


def test_standardize_back_transform(rng):
    raw = add_intercept(rng.normal(3.0, 2.0, (50, 2)))
    Z, c, s = standardize(raw)
    np.testing.assert_allclose(Z[:, 1:].mean(axis=0), 0, atol=1e-12)
    d = FuzzyDataset(np.full(50, 0.5), np.ones(50), Z, x_center=c, x_scale=s)
    beta_z = np.array([0.3, -0.5, 1.2])
    beta_raw = d.back_transform(beta_z)
    np.testing.assert_allclose(raw @ beta_raw, Z @ beta_z, atol=1e-12)


def test_derive_bounds():
    assert derive_bounds([Interval(2.0, 7.0)]) == (2.0, 7.0)
    assert derive_bounds([(0.0, 1.0), (0.2, 3.0)]) == (0.0, 3.0)
    assert derive_bounds([TrapezoidalFuzzyNumber(1, 2, 3, 4), BetaFuzzyNumber(0.5, 2.0, -1.0, 1.0)]) == (-1.0, 4.0)
    with pytest.raises(ParameterError):
        derive_bounds([])
    assert widen_bounds((0.5, 10.5), 0.01, floor=0.0) == pytest.approx((0.4, 10.6))
    assert widen_bounds((0.0, 10.0), 0.01, floor=0.0) == pytest.approx((0.0, 10.1))


def test_simulated_lognormal_modes_inside_bounds(rng):
    spec = ModelSpec("lognormal", bounds=(0.0, 30.0))
    d = simulate(spec, ThetaY(np.array([1.0]), math.log(0.5)), ThetaS(15, 5), np.ones((500, 1)), rng)
    b = derive_bounds([(m, m) for m in d.m])
    assert spec.bounds[0] <= b[0] and b[1] <= spec.bounds[1]
    assert np.all((d.y_latent > 0) & (d.y_latent < 30))


def test_simulate_collapses_to_latent_for_huge_precision(rng):
    spec = ModelSpec("beta", bounds=(1.0, 5.0))
    d = simulate(spec, ThetaY(np.array([0.2]), 2.0), ThetaS(100.0, 1e6), np.ones((1000, 1)), rng)
    assert np.max(np.abs(d.m - d.y_latent)) < 0.01
    assert np.all((d.m > 1) & (d.m < 5))


def test_simulate_reproducible():
    spec = ModelSpec("kumaraswamy")
    X = np.ones((20, 1))
    a = simulate(spec, ThetaY(np.array([0.3]), 0.2), ThetaS(15, 5), X, np.random.default_rng(5))
    b = simulate(spec, ThetaY(np.array([0.3]), 0.2), ThetaS(15, 5), X, np.random.default_rng(5))
    assert np.array_equal(a.m, b.m) and np.array_equal(a.s, b.s)


@pytest.mark.parametrize("fam,bounds", [("beta", (0, 1)), ("logitnormal", (0, 1)), ("kumaraswamy", (-2, 3)),
                                        ("logbilal", (0, 1)), ("truncnormal", (0, 1)), ("lognormal", (0, 20))])
def test_moment_identities(fam, bounds, rng):
    spec = ModelSpec(fam, bounds=bounds)
    th = ThetaY(np.array([0.4 if fam != "lognormal" else 1.0]), -0.3 if fam != "beta" else 1.5)
    ts = ThetaS(2.0, 3.0)
    n = 400_000
    d = simulate(spec, th, ts, np.ones((n, 1)), rng, keep_latent=False)
    em, vm = mode_moments(spec, th, ts)
    assert abs(d.m.mean() - em) < 3.5 * math.sqrt(vm / n)
    assert abs(d.m.var() - vm) / vm < 0.02


def test_mode_moments_examples():
    spec = ModelSpec("beta")
    th = ThetaY(np.array([0.0]), math.log(4.0))  # Beta(2, 2)
    em, vm = mode_moments(spec, th, ThetaS(1.0, 1.639))
    c = dists.c_factor(1.0, 1.639)
    assert em == pytest.approx(0.5)
    assert vm == pytest.approx(0.05 * (1 - c) + 0.25 * c, rel=1e-12)
    assert vm == pytest.approx(0.15, abs=0.002)
    _, vm_big = mode_moments(spec, th, ThetaS(1.0, 1e9))
    assert vm_big == pytest.approx(0.05, rel=1e-6)
    _, vm_small = mode_moments(spec, th, ThetaS(1.0, 1e-9))
    assert vm_small == pytest.approx(0.25, rel=1e-6)


def test_mode_variance_ordering_in_c():
    spec = ModelSpec("beta")
    th = ThetaY(np.array([0.7]), 1.0)
    vms = [mode_moments(spec, th, ThetaS(1.0, b))[1] for b in np.geomspace(1e-3, 1e3, 25)]
    cs = [dists.c_factor(1.0, b) for b in np.geomspace(1e-3, 1e3, 25)]
    # V[M] - V[Y] = c (E[Y](1 - E[Y]) - V[Y]) >= 0, so V[M] grows with c
    order = np.argsort(cs)
    assert np.all(np.diff(np.array(vms)[order]) > 0)
    ey, vy = unit_moments(spec, th)
    assert min(vms) >= vy


def test_latent_logpdf_normalised_on_response_scale():
    spec = ModelSpec("truncnormal", bounds=(1.0, 5.0))
    th = ThetaY(np.array([0.2]), -1.0)
    f = lambda y: math.exp(float(latent_logpdf(spec, th, np.ones((1, 1)), np.array([y]))[0]))
    assert integrate.quad(f, 1.0, 5.0, epsrel=1e-10)[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("fam", ["beta", "kumaraswamy", "logitnormal", "truncnormal", "logbilal"])
def test_loglik_theta_matches_unit_sum(fam, rng):
    spec = ModelSpec(fam, J=2)
    X = add_intercept(rng.standard_normal(30))
    u = rng.uniform(0.05, 0.95, 30)
    B = rng.normal(0, 0.5, (4, 2))
    phi = rng.normal(0.5, 0.3, 4)
    ll = loglik_theta(spec, X, u, B, phi)
    for k in range(4):
        p = family_params(spec, ThetaY(B[k], phi[k]), X)
        assert ll[k] == pytest.approx(float(np.sum(unit_logpdf(spec, p, u))), rel=1e-12)


def test_loglik_theta_illegal_parameters():
    spec = ModelSpec("beta", link="identity")
    ll = loglik_theta(spec, np.ones((3, 1)), np.array([0.2, 0.5, 0.7]), np.array([[1.5], [0.5]]), np.zeros(2))
    assert ll[0] == -np.inf and np.isfinite(ll[1])
