"""Reading and writing datasets, draws, summaries and run configurations.

Input CSVs come in two layouts:

* Beta fuzzy: ``id,m,s[,lb,ub],x1..xK``
* trapezoidal: ``id,a1,a2,a3,a4,x1..xK``

Any further columns are covariates; an intercept is always added.  Numbers
are written with 17 significant digits so every file reads back exactly.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConversionError, ParameterError
from .fuzznum import TrapezoidalFuzzyNumber, trapezoid_to_beta
from .model import FuzzyDataset, add_intercept, derive_bounds, standardize, widen_bounds

_FMT = "%.17g"


def fmt(x) -> str:
    return _FMT % x


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# datasets


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParameterError(f"{path}: empty file, header expected") from None
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            rows.append((reader.line_num, row))
    if len(set(header)) != len(header):
        raise ParameterError(f"{path}: duplicate column names in header")
    return header, rows


def _number(text, line, col):
    try:
        v = float(text)
    except ValueError:
        raise ParameterError(f"line {line}: column {col!r} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParameterError(f"line {line}: column {col!r} is not finite")
    return v


def detect_format(header):
    if {"a1", "a2", "a3", "a4"} <= set(header):
        return "trapezoidal"
    if {"m", "s"} <= set(header):
        return "beta-fuzzy"
    raise ParameterError("header matches neither id,m,s,... nor id,a1,a2,a3,a4,...")


def ingest(path, fmt=None, bounds=None, standardize_x=True, family=None, margin=0.01) -> FuzzyDataset:
    """Read a fuzzy dataset from CSV.

    Parameters
    ----------
    path : str
    fmt : {"beta-fuzzy", "trapezoidal"}, optional
        Detected from the header when omitted.
    bounds : tuple, optional
        Model bounds.  Rows without their own ``lb,ub`` use them as their
        support.  When omitted they are the envelope of all supports
        (or ``(0, 1)`` if no row has a support); for the lognormal family
        the envelope is widened by ``margin`` of its width, floored at 0.
    standardize_x : bool
        z-score the covariates (the transform is stored on the dataset).

    Raises
    ------
    ParameterError
        On malformed rows or modes outside the bounds, naming the line.
    """
    header, rows = _read_rows(path)
    fmt = fmt or detect_format(header)
    if "id" not in header:
        raise ParameterError(f"{path}: header needs an 'id' column")
    if fmt == "beta-fuzzy":
        fixed = ["id", "m", "s"]
        if ("lb" in header) != ("ub" in header):
            raise ParameterError(f"{path}: give both lb and ub or neither")
        if "lb" in header:
            fixed += ["lb", "ub"]
    elif fmt == "trapezoidal":
        fixed = ["id", "a1", "a2", "a3", "a4"]
    else:
        raise ParameterError(f"unknown input format {fmt!r}")
    missing = [c for c in fixed if c not in header]
    if missing:
        raise ParameterError(f"{path}: missing columns {missing}")
    cov_cols = [c for c in header if c not in fixed]
    pos = {c: header.index(c) for c in header}
    if not rows:
        raise ParameterError(f"{path}: no data rows")

    ids, m, s, lo, hi, xs = [], [], [], [], [], []
    for line, row in rows:
        if len(row) != len(header):
            raise ParameterError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        get = lambda c: _number(row[pos[c]], line, c)
        ids.append(row[pos["id"]].strip())
        xs.append([get(c) for c in cov_cols])
        if fmt == "beta-fuzzy":
            mi, si = get("m"), get("s")
            if not si > 0:
                raise ParameterError(f"line {line}: precision s must be positive")
            a, b = (get("lb"), get("ub")) if "lb" in pos else (np.nan, np.nan)
            if "lb" in pos and not a < mi < b:
                raise ParameterError(f"line {line}: mode {mi} outside its support ({a}, {b})")
        else:
            try:
                tp = TrapezoidalFuzzyNumber(*(get(c) for c in ("a1", "a2", "a3", "a4")))
            except ParameterError as exc:
                raise ParameterError(f"line {line}: {exc}") from None
            try:
                bfn = trapezoid_to_beta(tp)
            except (ConversionError, ParameterError) as exc:
                raise ParameterError(f"line {line}: conversion failed: {exc}") from None
            mi, si, a, b = bfn.m, bfn.s, bfn.lb, bfn.ub
        m.append(mi)
        s.append(si)
        lo.append(a)
        hi.append(b)

    m, s, lo, hi = (np.array(v, dtype=float) for v in (m, s, lo, hi))
    has_support = np.isfinite(lo)
    if bounds is None:
        if has_support.any():
            bounds = derive_bounds(list(zip(lo[has_support], hi[has_support])))
            if family is not None and family.lower() == "lognormal":
                bounds = widen_bounds(bounds, margin, floor=0.0)
        else:
            bounds = (0.0, 1.0)
    lb, ub = (float(b) for b in bounds)
    lo = np.where(has_support, lo, lb)
    hi = np.where(has_support, hi, ub)
    for k, (line, _) in enumerate(rows):
        if not lb < m[k] < ub:
            raise ParameterError(f"line {line}: mode {m[k]} outside the bounds ({lb}, {ub})")
        if lo[k] < lb or hi[k] > ub:
            raise ParameterError(f"line {line}: support ({lo[k]}, {hi[k]}) exceeds the bounds ({lb}, {ub})")

    x_raw = np.array(xs, dtype=float).reshape(len(rows), len(cov_cols))
    X = add_intercept(x_raw)
    center = scale = None
    if standardize_x:
        X, center, scale = standardize(X)
    return FuzzyDataset(m=m, s=s, X=X, bounds=(lb, ub), obs_lb=lo, obs_ub=hi, ids=ids,
                        x_center=center, x_scale=scale, columns=["intercept"] + cov_cols, x_raw=x_raw)


def write_dataset(path, data: FuzzyDataset):
    """Write a dataset in the Beta fuzzy layout with raw covariates."""
    covs = data.columns[1:]
    x = data.x_raw if data.x_raw is not None else data.X[:, 1:]
    rows = []
    for i in range(data.n):
        vals = [data.m[i], data.s[i], data.obs_lb[i], data.obs_ub[i], *x[i]]
        rows.append([str(data.ids[i])] + [fmt(v) for v in vals])
    atomic_write(path, _csv_text(["id", "m", "s", "lb", "ub", *covs], rows))


# --------------------------------------------------------------------------
# draws and summaries


def write_draws(path, chains):
    """Draws CSV: ``chain,iter,<parameter names>`` with one row per retained draw."""
    names = list(chains[0].names)
    rows = []
    for c in chains:
        for t, row in enumerate(c.theta):
            rows.append([str(c.chain_id), str(t)] + [fmt(v) for v in row])
    atomic_write(path, _csv_text(["chain", "iter", *names], rows))


def read_draws(path):
    """Inverse of :func:`write_draws`: ``(names, {chain_id: (draws, P) array})``."""
    header, rows = _read_rows(path)
    if header[:2] != ["chain", "iter"]:
        raise ParameterError(f"{path}: draws file must start with chain,iter")
    names = header[2:]
    out = {}
    for line, row in rows:
        if len(row) != len(header):
            raise ParameterError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        vals = [_number(v, line, c) for v, c in zip(row[2:], names)]
        out.setdefault(int(row[0]), []).append(vals)
    return names, {k: np.array(v) for k, v in out.items()}


_SUMMARY_KEYS = ("mean", "sd", "hpdi_lb", "hpdi_ub", "rhat", "ess_bulk", "ess_tail")


def format_summary(summary, extra=None) -> str:
    """One ``[name]`` block per parameter with ``key = value`` lines (4 decimals)."""
    out = []
    for k, v in (extra or {}).items():
        out.append(f"{k} = {v}")
    if out:
        out.append("")
    for name, row in summary.rows():
        out.append(f"[{name}]")
        out += [f"{k} = {row[k]:.4f}" for k in _SUMMARY_KEYS]
        out.append("")
    return "\n".join(out)


def parse_summary(text):
    """Read a summary back into ``(header dict, {name: {key: float}})``."""
    head, blocks, cur = {}, {}, None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = blocks.setdefault(line[1:-1], {})
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if cur is None:
            head[key] = val
        else:
            cur[key] = float(val)
    return head, blocks


# --------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Settings shared by all commands; read from a flat ``key = value`` file."""

    family: str = "beta"
    link: str | None = None
    bounds: tuple | None = None
    chains: int = 5
    samples: int = 4000
    burnin: int = 2000
    seed: int = 0
    eps: float = 1e-6
    max_iter: int = 200
    mh_correct: bool = False
    sn_refresh: int = 1
    standardize: bool = True
    prior_beta_mean: float = 0.0
    prior_beta_sd: float = 10.0
    prior_phi_mean: float = 0.0
    prior_phi_sd: float = 5.0
    data: str | None = None
    format: str | None = None
    draws: str | None = None
    out: str = "."
    # simulate
    n: int = 200
    beta: tuple = (0.5, -0.8)
    phi: float = math.log(15.0)
    alpha_s: float = 15.0
    beta_s: float = 5.0
    # ppc and benchmark
    B: int = 500
    reps: int = 500
    waic: str = "conditional"

    def __post_init__(self):
        if self.chains < 1 or self.samples < 1 or self.burnin < 0:
            raise ParameterError("need chains >= 1, samples >= 1 and burnin >= 0")
        if self.bounds is not None:
            lb, ub = self.bounds
            if not lb < ub:
                raise ParameterError("config bounds need lb < ub")

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {k}: expected key = value")
            key, val = (p.strip() for p in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ParameterError(f"config line {k}: unknown key {key!r}")
            try:
                kw[key] = _parse_value(types[key], val)
            except ValueError as exc:
                raise ParameterError(f"config line {k}: bad value for {key}: {val!r}") from exc
        return cls(**kw)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(fmt(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = fmt(v)
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"


def _parse_value(type_name, val):
    t = str(type_name)
    if val.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("bool"):
        if val.lower() in ("1", "true", "yes", "on"):
            return True
        if val.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(val)
    if t.startswith("int"):
        return int(val)
    if t.startswith("float"):
        return float(val)
    if t.startswith("tuple"):
        return tuple(float(x) for x in val.split(","))
    return val
