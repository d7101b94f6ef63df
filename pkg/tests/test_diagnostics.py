import math

import numpy as np
import pytest
from scipy import stats

from bayesfuzzy.diagnostics import (check_statistic, ess, grid_distances, hellinger, hpdi, ppc, rhat,
                                    summarize, tv_distance, waic, waic_details)
from bayesfuzzy.errors import DomainError, ParameterError
from bayesfuzzy.fuzznum import Interval
from bayesfuzzy.gibbs import SamplerConfig, run_chains
from bayesfuzzy.model import ModelSpec, ThetaS, ThetaY, add_intercept, simulate


def _ar1(rng, rho, n, chains=4):
    e = rng.standard_normal((chains, n))
    x = np.empty_like(e)
    x[:, 0] = e[:, 0] / math.sqrt(1 - rho**2)
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + e[:, t]
    return x


def test_rhat_identical_chains_is_one(rng):
    c = rng.standard_normal(1000)
    assert abs(rhat([c, c, c]) - 1) < 1e-9


def test_rhat_iid_and_disjoint(rng):
    iid = rng.standard_normal((5, 2000))
    assert rhat(iid) < 1.01
    assert rhat(iid, split=True) < 1.01
    dis = np.vstack([rng.standard_normal(1000), rng.standard_normal(1000) + 10])
    assert rhat(dis) > 1.1


def test_rhat_monotone_invariance(rng):
    c = rng.standard_normal((4, 500)) + np.arange(4)[:, None] * 0.2
    assert rhat(c) == pytest.approx(rhat(np.exp(c)), abs=1e-12)
    assert ess(c) == pytest.approx(ess(np.exp(3 * c + 1)), rel=1e-12)


def test_rhat_needs_two_chains(rng):
    with pytest.raises(ParameterError):
        rhat([rng.standard_normal(100)])


def test_ess_iid(rng):
    c = rng.standard_normal((4, 5000))
    assert abs(ess(c) / c.size - 1) < 0.1
    assert abs(ess(c, "tail") / c.size - 1) < 0.2


@pytest.mark.parametrize("rho", [0.5, 0.8])
def test_ess_ar1(rng, rho):
    c = _ar1(rng, rho, 20_000)
    expected = c.size * (1 - rho) / (1 + rho)
    assert abs(ess(c) / expected - 1) < 0.2


def test_ess_constant_chain_errors():
    with pytest.raises(DomainError):
        ess(np.ones((2, 100)))
    with pytest.raises(ParameterError):
        ess(np.arange(200.0).reshape(2, 100), mode="median")


def test_hpdi_uniform_and_normal(rng):
    u = rng.random(200_000)
    iv = hpdi(u, 0.95)
    assert iv.width == pytest.approx(0.95, abs=5e-3)
    z = rng.standard_normal(200_000)
    iv = hpdi(z, 0.9)
    q = np.quantile(z, [0.05, 0.95])
    # symmetric unimodal: HPDI equals the equal-tailed interval
    assert iv.lo == pytest.approx(q[0], abs=0.02) and iv.hi == pytest.approx(q[1], abs=0.02)
    assert iv.width <= q[1] - q[0] + 1e-12


def test_hpdi_skewed_is_shorter(rng):
    x = rng.exponential(size=50_000)
    iv = hpdi(x, 0.95)
    q = np.quantile(x, [0.025, 0.975])
    assert iv.width < q[1] - q[0]
    assert iv.lo < 1e-3
    assert np.mean((x >= iv.lo) & (x <= iv.hi)) >= 0.95


def test_hpdi_point_mass_and_errors():
    assert hpdi(np.full(500, 2.0)).width == 0
    with pytest.raises(ParameterError):
        hpdi(np.arange(99.0))
    with pytest.raises(ParameterError):
        hpdi(np.arange(200.0), mass=1.0)


def test_summarize(rng):
    ch = [rng.standard_normal((300, 2)) + [1, -2] for _ in range(3)]
    summ = summarize(ch, names=["a", "b"])
    assert summ.names == ["a", "b"]
    assert np.allclose(summ.mean, [1, -2], atol=0.1)
    assert np.all(summ.hpdi_lb < summ.mean) and np.all(summ.mean < summ.hpdi_ub)
    assert np.all(summ.rhat < 1.02)
    assert len(list(summ.rows())) == 2


def test_waic_single_draw_and_formula(rng):
    ll = np.log(rng.random((1, 5)))
    assert waic(ll) == pytest.approx(-2 * ll.sum())
    ll = rng.normal(-1, 0.3, size=(400, 10))
    w = waic_details(ll)
    lppd = np.sum(np.log(np.mean(np.exp(ll), axis=0)))
    pw = np.sum(np.var(ll, axis=0, ddof=1))
    assert w.lppd == pytest.approx(lppd, rel=1e-12)
    assert w.p_waic == pytest.approx(pw, rel=1e-12)
    assert w.waic == pytest.approx(-2 * (lppd - pw), rel=1e-12)
    with pytest.raises(ParameterError):
        waic(np.array([[0.0, -np.inf]]))


def test_distances_identity_and_disjoint():
    f = stats.beta(2, 5).pdf
    assert tv_distance(f, f, Interval(0, 1)) == pytest.approx(0, abs=1e-12)
    assert hellinger(f, f, Interval(0, 1)) == pytest.approx(0, abs=1e-7)
    g1, g2 = stats.uniform(0, 0.5).pdf, stats.uniform(0.5, 0.5).pdf
    assert tv_distance(g1, g2, Interval(0, 1), points=[0.5]) == pytest.approx(1, abs=1e-7)
    assert hellinger(g1, g2, Interval(0, 1), points=[0.5]) == pytest.approx(1, abs=1e-7)


def test_distances_match_riemann_oracle():
    f, g = stats.beta(2, 5).pdf, stats.beta(2, 5.5).pdf
    x = (np.arange(2_000_000) + 0.5) / 2_000_000
    tv_ref = 0.5 * np.mean(np.abs(f(x) - g(x)))
    hd_ref = math.sqrt(0.5 * np.mean((np.sqrt(f(x)) - np.sqrt(g(x))) ** 2))
    tv = tv_distance(f, g, Interval(0, 1))
    hd = hellinger(f, g, Interval(0, 1))
    assert tv == pytest.approx(tv_ref, abs=1e-6)
    assert hd == pytest.approx(hd_ref, abs=1e-6)
    assert tv == pytest.approx(tv_distance(g, f, Interval(0, 1)), abs=1e-12)
    assert hd**2 <= tv <= hd * math.sqrt(2)


def test_grid_distances_agree_with_quadrature():
    grid = np.linspace(1e-6, 1 - 1e-6, 20001)
    tv, hd = grid_distances(stats.beta(3, 4).logpdf(grid), stats.beta(3.3, 4).logpdf(grid), grid)
    f, g = stats.beta(3, 4).pdf, stats.beta(3.3, 4).pdf
    assert float(np.squeeze(tv)) == pytest.approx(tv_distance(f, g, Interval(0, 1)), abs=1e-6)
    assert float(np.squeeze(hd)) == pytest.approx(hellinger(f, g, Interval(0, 1)), abs=1e-6)


def test_check_statistic_invariant_to_replicate_order(rng):
    obs = rng.standard_normal(20)
    rep = rng.standard_normal((300, 20))
    a = check_statistic(obs, rep)
    b = check_statistic(obs, rep[rng.permutation(300)])
    assert a.cp == b.cp and a.bp == b.bp
    assert np.array_equal(a.lo95, b.lo95)
    assert np.all(a.min <= a.lo95) and np.all(a.lo95 <= a.q1) and np.all(a.q1 <= a.q3)
    assert np.all(a.q3 <= a.hi95) and np.all(a.hi95 <= a.max)
    # observation equal to every replicate lies inside its interval
    c = check_statistic(np.zeros(3), np.zeros((100, 3)))
    assert c.cp == 1.0 and c.bp == 1.0


def test_ppc_shapes_and_determinism(rng):
    spec = ModelSpec("beta", J=2)
    X = add_intercept(rng.standard_normal((40, 1)))
    data = simulate(spec, ThetaY(np.array([0.5, -0.8]), math.log(15)), ThetaS(15, 5), X, rng)
    chains = run_chains(data, spec, cfg=SamplerConfig(chains=2, samples=100, burnin=50, seed=2))
    rep = ppc(chains, data, spec, B=100, rng=5)
    assert set(rep.checks) == {"centroid", "support_width", "kaufman"}
    for chk in rep.checks.values():
        assert chk.observed.shape == (40,) and chk.q1.shape == (40,)
        assert 0 <= chk.cp <= 1 and 0 <= chk.bp <= 1
    again = ppc(chains, data, spec, B=100, rng=5)
    assert again.cp == rep.cp
    with pytest.raises(ParameterError):
        ppc(chains, data, spec, B=50)
