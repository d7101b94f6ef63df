"""Command-line front end: ``simulate``, ``fit``, ``ppc`` and ``benchmark``.

Every command is deterministic given ``--seed`` and writes its outputs
atomically into ``--out``.  Errors are reported on stderr with exit code 1.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import benchmark, diagnostics, io
from .errors import ChainFailure, ConvergenceError, DomainError, IntegrationError, ParameterError
from .gibbs import ChainDraws, PriorSpec, SamplerConfig, gamma_mle, run_chains
from .model import ModelSpec, ThetaS, ThetaY, add_intercept, simulate


def _spec(cfg: io.RunConfig, data=None) -> ModelSpec:
    bounds = data.bounds if data is not None else (cfg.bounds or (0.0, 1.0))
    J = data.J if data is not None else len(cfg.beta)
    prior = PriorSpec(cfg.prior_beta_mean, cfg.prior_beta_sd, cfg.prior_phi_mean, cfg.prior_phi_sd)
    return ModelSpec(cfg.family, cfg.link, bounds, J, prior)


def _sampler(cfg: io.RunConfig, keep_latent=False) -> SamplerConfig:
    return SamplerConfig(chains=cfg.chains, samples=cfg.samples, burnin=cfg.burnin, seed=cfg.seed,
                         eps=cfg.eps, max_iter=cfg.max_iter, mh_correct=cfg.mh_correct,
                         sn_refresh=cfg.sn_refresh, keep_latent=keep_latent)


def _load_data(cfg: io.RunConfig):
    if not cfg.data:
        raise ParameterError("no input data: set 'data' in the config or pass --data")
    if not os.path.exists(cfg.data):
        raise ParameterError(f"data file {cfg.data!r} does not exist")
    return io.ingest(cfg.data, cfg.format, cfg.bounds, cfg.standardize, cfg.family)


def _out(cfg, name):
    return os.path.join(cfg.out, name)


def cmd_simulate(cfg: io.RunConfig):
    """Simulate a dataset from the configured truth; writes data.csv and truth.txt."""
    rng = np.random.default_rng(cfg.seed)
    J = len(cfg.beta)
    x_raw = rng.standard_normal((cfg.n, J - 1))
    spec = _spec(cfg)
    truth = ThetaY(np.array(cfg.beta), cfg.phi)
    data = simulate(spec, truth, ThetaS(cfg.alpha_s, cfg.beta_s), add_intercept(x_raw), rng)
    data.x_raw = x_raw
    data.columns = ["intercept"] + [f"x{j}" for j in range(1, J)]
    io.write_dataset(_out(cfg, "data.csv"), data)
    lines = [f"family = {spec.family}", f"link = {spec.link}",
             "bounds = " + ",".join(io.fmt(b) for b in spec.bounds),
             "beta = " + ",".join(io.fmt(b) for b in cfg.beta), f"phi = {io.fmt(cfg.phi)}",
             f"alpha_s = {io.fmt(cfg.alpha_s)}", f"beta_s = {io.fmt(cfg.beta_s)}", f"seed = {cfg.seed}"]
    io.atomic_write(_out(cfg, "truth.txt"), "\n".join(lines) + "\n")
    latent = [[str(i), io.fmt(y)] for i, y in zip(data.ids, data.y_latent)]
    io.atomic_write(_out(cfg, "latent.csv"), io._csv_text(["id", "y"], latent))
    return [_out(cfg, f) for f in ("data.csv", "truth.txt", "latent.csv")]


def _fit(cfg, data, keep_latent=False):
    spec = _spec(cfg, data)
    chains = run_chains(data, spec, spec.prior, _sampler(cfg, keep_latent))
    return spec, chains


def cmd_fit(cfg: io.RunConfig):
    """Run the sampler; writes draws.csv and summary.txt."""
    data = _load_data(cfg)
    keep = cfg.waic in ("conditional", "marginal")
    spec, chains = _fit(cfg, data, keep_latent=cfg.waic == "conditional")
    io.write_draws(_out(cfg, "draws.csv"), chains)
    summ = diagnostics.summarize(chains)
    ts = chains[0].theta_s
    head = {"family": spec.family, "link": spec.link, "n": data.n, "chains": cfg.chains,
            "samples": cfg.samples, "seed": cfg.seed, "alpha_s": f"{ts.alpha_s:.4f}", "beta_s": f"{ts.beta_s:.4f}",
            "b4p_fallbacks": sum(c.b4p_fallback_count for c in chains),
            "sn_fallbacks": sum(c.sn_fallback_count for c in chains)}
    if cfg.mh_correct:
        head["acceptance"] = f"{np.mean([c.acceptance_rate for c in chains]):.4f}"
    if keep:
        ll = diagnostics.pointwise_loglik(chains, data, spec, cfg.waic, rng=cfg.seed, max_draws=2000)
        w = diagnostics.waic_details(ll)
        head.update({"waic": f"{w.waic:.4f}", "lppd": f"{w.lppd:.4f}", "p_waic": f"{w.p_waic:.4f}",
                     "waic_mode": cfg.waic})
    if cfg.standardize and data.J > 1:
        raw = np.concatenate([data.back_transform(c.beta) for c in chains])
        head["raw_scale_beta_mean"] = ",".join(f"{v:.4f}" for v in raw.mean(axis=0))
    io.atomic_write(_out(cfg, "summary.txt"), io.format_summary(summ, head))
    return [_out(cfg, "draws.csv"), _out(cfg, "summary.txt")]


def _chains_from_file(path, data, cfg):
    names, per_chain = io.read_draws(path)
    ts = gamma_mle(data.s)
    return [ChainDraws(theta=v, chain_id=k, seed=None, theta_s=ts, names=names) for k, v in sorted(per_chain.items())]


def cmd_ppc(cfg: io.RunConfig):
    """Posterior predictive check; writes ppc_summary.txt and ppc_quantiles.csv."""
    data = _load_data(cfg)
    if cfg.draws:
        spec = _spec(cfg, data)
        chains = _chains_from_file(cfg.draws, data, cfg)
    else:
        spec, chains = _fit(cfg, data)
    rep = diagnostics.ppc(chains, data, spec, chains[0].theta_s, cfg.B, rng=cfg.seed)
    lines = [f"B = {rep.B}"]
    for k, chk in rep.checks.items():
        lines += [f"[{k}]", f"cp = {chk.cp:.4f}", f"bp = {chk.bp:.4f}", ""]
    io.atomic_write(_out(cfg, "ppc_summary.txt"), "\n".join(lines))
    rows = []
    for k, chk in rep.checks.items():
        for i in range(data.n):
            vals = (chk.observed[i], chk.min[i], chk.q1[i], chk.q3[i], chk.max[i], chk.lo95[i], chk.hi95[i])
            rows.append([str(data.ids[i]), k] + [io.fmt(v) for v in vals])
    header = ["id", "statistic", "observed", "min", "q1", "q3", "max", "lo95", "hi95"]
    io.atomic_write(_out(cfg, "ppc_quantiles.csv"), io._csv_text(header, rows))
    return [_out(cfg, "ppc_summary.txt"), _out(cfg, "ppc_quantiles.csv")]


def cmd_benchmark(cfg: io.RunConfig):
    """Accuracy sweep of the latent proposal; writes benchmark.txt and benchmark_configs.csv."""
    summary, configs = benchmark.run_benchmark(reps=cfg.reps, seed=cfg.seed)
    head = f"reps = {cfg.reps}\nseed = {cfg.seed}\n\n"
    io.atomic_write(_out(cfg, "benchmark.txt"), head + benchmark.format_table(summary) + "\n")
    rows = []
    for c in configs:
        rows.append([c.family, " ".join(io.fmt(p) for p in c.params), io.fmt(c.gamma[0]), io.fmt(c.gamma[1]),
                     io.fmt(c.tv.mean()), io.fmt(c.hd.mean()), str(c.fallbacks)])
    header = ["family", "params", "alpha_s", "beta_s", "tv_mean", "hd_mean", "fallbacks"]
    io.atomic_write(_out(cfg, "benchmark_configs.csv"), io._csv_text(header, rows))
    return [_out(cfg, "benchmark.txt"), _out(cfg, "benchmark_configs.csv")]


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "ppc": cmd_ppc, "benchmark": cmd_benchmark}


def build_parser():
    p = argparse.ArgumentParser(prog="bayesfuzzy", description="Bayesian regression for Beta fuzzy responses")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--chains", type=int)
        sp.add_argument("--samples", type=int)
        sp.add_argument("--burnin", type=int)
        sp.add_argument("--family")
        sp.add_argument("--link")
        sp.add_argument("--mh-correct", action="store_true", default=None)
        sp.add_argument("--sn-refresh", type=int)
        sp.add_argument("--no-standardize", dest="standardize", action="store_false", default=None)
        sp.add_argument("--reps", type=int, help="repetitions per configuration (benchmark)")
        sp.add_argument("--data", help="input CSV")
        sp.add_argument("--format", choices=("beta-fuzzy", "trapezoidal"))
        sp.add_argument("--draws", help="draws CSV from a previous fit (ppc)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("-B", dest="B", type=int, help="replicates (ppc)")
    return p


def make_config(args) -> io.RunConfig:
    cfg = io.RunConfig.from_file(args.config) if args.config else io.RunConfig()
    names = {f.name for f in dataclasses.fields(io.RunConfig)}
    over = {k: v for k, v in vars(args).items() if k in names and v is not None}
    return dataclasses.replace(cfg, **over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        paths = COMMANDS[args.command](cfg)
    except (ParameterError, DomainError, IntegrationError, ConvergenceError, ChainFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
