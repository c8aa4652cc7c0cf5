"""Seeded simulation sweeps over scenarios x methods.

Every (cell, replication) unit derives its own seed from
``(base_seed, cell_index, replication)``, so results do not depend on the
order or process in which units run. Rows are sorted before writing and the
output file is byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est_mod
from .errors import ConfcovError, ConfigInvalid, NodewiseFailure
from .graph import DEFAULT_LAMBDA, cig_estimate
from .metrics import best_kappa_frobenius, offdiag_correlation
from .simulation import ALLOWED_DF, KINDS, LINKS, ScenarioSpec, make_ground_truth, sample_dataset

RESULT_FIELDS = (
    "scenario", "p", "n", "q", "nu", "df1", "df2", "link", "method", "method_param",
    "seed", "rho_cov", "rho_prec", "kappa_frob", "resid_frob", "runtime_ms", "error",
)
METHOD_KINDS = ("rsvp", "rsvp-split", "rsvp-sub", "pca-removal", "empirical")
DEFAULT_KMAX = 20
THREADS_ENV = "CONFCOV_THREADS"

_METHOD_KEYS = {
    "rsvp": set(),
    "empirical": set(),
    "rsvp-split": {"m"},
    "rsvp-sub": {"m", "b"},
    "pca-removal": {"ell", "kmax"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: list
    p_grid: list
    n_grid: list
    nu_grid: list
    methods: list
    replications: int
    base_seed: int
    df1_grid: list = field(default_factory=lambda: [math.inf])
    df2_grid: list = field(default_factory=lambda: [math.inf])
    links: list = field(default_factory=lambda: ["linear"])
    parallelism: int = 1
    output_path: str | None = None
    invert_precision: bool = False
    invert_lambda: float = DEFAULT_LAMBDA
    timing: bool = False

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigInvalid("$", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in raw:
            if key not in known:
                raise ConfigInvalid(key, "unknown field")
        for key in ("scenarios", "p_grid", "n_grid", "nu_grid", "methods", "replications", "base_seed"):
            if key not in raw:
                raise ConfigInvalid(key, "required field missing")
        vals = dict(raw)
        vals["scenarios"] = _grid(raw, "scenarios", _choice(KINDS))
        vals["p_grid"] = _grid(raw, "p_grid", _int_at_least(2))
        vals["n_grid"] = _grid(raw, "n_grid", _int_at_least(2))
        vals["nu_grid"] = _grid(raw, "nu_grid", _nonneg_float)
        vals["df1_grid"] = _grid(raw, "df1_grid", _df, [math.inf])
        vals["df2_grid"] = _grid(raw, "df2_grid", _df, [math.inf])
        vals["links"] = _grid(raw, "links", _choice(LINKS), ["linear"])
        vals["methods"] = _grid(raw, "methods", None)
        vals["methods"] = [_method(m, f"methods[{i}]") for i, m in enumerate(vals["methods"])]
        vals["replications"] = _int_at_least(1)(raw["replications"], "replications")
        vals["base_seed"] = _int_at_least(0)(raw["base_seed"], "base_seed")
        vals["parallelism"] = _int_at_least(1)(raw.get("parallelism", 1), "parallelism")
        out = raw.get("output_path")
        if out is not None and not isinstance(out, str):
            raise ConfigInvalid("output_path", "must be a string")
        for key in ("invert_precision", "timing"):
            if not isinstance(raw.get(key, False), bool):
                raise ConfigInvalid(key, "must be a boolean")
        vals["invert_lambda"] = _nonneg_float(raw.get("invert_lambda", DEFAULT_LAMBDA), "invert_lambda")
        return cls(**vals)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigInvalid("$", f"invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def cells(self):
        return list(itertools.product(
            self.scenarios, self.p_grid, self.n_grid, self.nu_grid,
            self.df1_grid, self.df2_grid, self.links,
        ))


def _grid(raw, key, check, default=None):
    if key not in raw:
        return list(default)
    vals = raw[key]
    if not isinstance(vals, list) or not vals:
        raise ConfigInvalid(key, "must be a nonempty list")
    if check is None:
        return vals
    return [check(v, f"{key}[{i}]") for i, v in enumerate(vals)]


def _choice(options):
    def check(v, path):
        if v not in options:
            raise ConfigInvalid(path, f"must be one of {list(options)}, got {v!r}")
        return v
    return check


def _int_at_least(lo):
    def check(v, path):
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ConfigInvalid(path, f"must be an integer >= {lo}, got {v!r}")
        return v
    return check


def _nonneg_float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
        raise ConfigInvalid(path, f"must be a finite non-negative number, got {v!r}")
    return float(v)


def _df(v, path):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        v = math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v not in ALLOWED_DF:
        raise ConfigInvalid(path, f"must be one of 1,2,3,5,10,20,50,100,'inf'; got {v!r}")
    return float(v)


def _method(m, path):
    if not isinstance(m, dict) or "kind" not in m:
        raise ConfigInvalid(path, "method must be an object with a 'kind'")
    kind = m["kind"]
    if kind not in METHOD_KINDS:
        raise ConfigInvalid(f"{path}.kind", f"must be one of {list(METHOD_KINDS)}")
    for key in m:
        if key != "kind" and key not in _METHOD_KEYS[kind]:
            raise ConfigInvalid(f"{path}.{key}", f"unknown field for {kind}")
    out = {"kind": kind}
    if kind in ("rsvp-split", "rsvp-sub"):
        mval = m.get("m", "rule-of-thumb")
        if mval != "rule-of-thumb":
            mval = _int_at_least(3)(mval, f"{path}.m")
        out["m"] = mval
    if kind == "rsvp-sub":
        out["b"] = _int_at_least(1)(m.get("b"), f"{path}.b")
    if kind == "pca-removal":
        ell = m.get("ell", 0)
        if ell not in ("oracle", "bai-ng"):
            ell = _int_at_least(0)(ell, f"{path}.ell")
        out["ell"] = ell
        out["kmax"] = _int_at_least(1)(m.get("kmax", DEFAULT_KMAX), f"{path}.kmax")
    return out


def derive_seed(base_seed, *counters):
    """64-bit seed from a counter-based mix of ``base_seed`` and ``counters``."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def apply_method(method, x, q, seed):
    """Run one configured method; returns (CovEstimate, method_param string)."""
    kind = method["kind"]
    p = x.shape[1]
    if kind == "rsvp":
        return est_mod.rsvp(x), ""
    if kind == "empirical":
        return est_mod.empirical_covariance(x), ""
    if kind in ("rsvp-split", "rsvp-sub"):
        m = method["m"]
        m_val = est_mod.default_subsample_size(p) if m == "rule-of-thumb" else m
        if kind == "rsvp-split":
            est = est_mod.rsvp_split(x, est_mod.SubsampleConfig.split(m_val, seed))
        else:
            est = est_mod.rsvp_sub(x, est_mod.SubsampleConfig.sub(m_val, method["b"], seed))
        prefix = "m=rule:" if m == "rule-of-thumb" else "m="
        return est, f"{prefix}{m_val};B={est.params['B']}"
    if kind == "pca-removal":
        ell = method["ell"]
        if ell == "oracle":
            ell_val, tag = q, f"oracle:{q}"
        elif ell == "bai-ng":
            rank = min(x.shape[0] - 1, p)
            kmax = min(method["kmax"], rank - 1)
            ell_val = est_mod.bai_ng_select(x, max(kmax, 0))
            tag = f"bai-ng:{ell_val}"
        else:
            ell_val, tag = ell, str(ell)
        return est_mod.pca_removal(x, ell_val), f"ell={tag}"
    raise ValueError(f"unknown method kind {kind!r}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def run_unit(methods, cell, cell_index, rep, base_seed, invert, lam, timing):
    """All method rows for one (cell, replication)."""
    kind, p, n, nu, df1, df2, link = cell
    seed = derive_seed(base_seed, cell_index, rep)
    base = {"scenario": kind, "p": p, "n": n, "nu": nu, "df1": df1, "df2": df2, "link": link, "seed": seed}
    try:
        spec = ScenarioSpec(kind, p, n, nu, df1, df2, link, seed)
        base["q"] = spec.q
        gt = make_ground_truth(spec)
        x = sample_dataset(gt, n + 1, df1, link, seed)
    except (ConfcovError, ValueError, np.linalg.LinAlgError) as exc:
        return [
            dict(base, method=m["kind"], error=f"{type(exc).__name__}: {exc}")
            for m in methods
        ]
    rows = []
    for m in methods:
        row = dict(base, method=m["kind"])
        start = time.perf_counter()
        try:
            est, param = apply_method(m, x, spec.q, seed)
            row["method_param"] = param
            row["rho_cov"] = offdiag_correlation(gt.sigma, est.matrix)
            fit = best_kappa_frobenius(gt.sigma, est.matrix)
            row["kappa_frob"], row["resid_frob"] = fit.kappa, fit.residual
            if invert:
                _, proxy = cig_estimate(est.matrix, lam)
                row["rho_prec"] = offdiag_correlation(gt.omega, proxy)
        except (ConfcovError, NodewiseFailure, ValueError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        elapsed = (time.perf_counter() - start) * 1000.0
        row["runtime_ms"] = round(elapsed, 3) if timing else 0
        rows.append(row)
    return rows


def _run_unit_packed(args):
    return args[2], args[3], run_unit(*args)


def resolve_parallelism(config_value):
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            val = int(env)
        except ValueError:
            raise ConfigInvalid(THREADS_ENV, f"must be a positive integer, got {env!r}") from None
        if val < 1:
            raise ConfigInvalid(THREADS_ENV, f"must be a positive integer, got {env!r}")
        return val
    return config_value


def run_experiment(config, output_path=None, parallelism=None):
    """Run the sweep and write the results CSV.

    Returns the path written and the list of row dicts in file order.
    """
    out = output_path or config.output_path
    if out is None:
        raise ConfigInvalid("output_path", "no output path given")
    workers = parallelism if parallelism is not None else resolve_parallelism(config.parallelism)
    units = [
        (config.methods, cell, ci, rep, config.base_seed, config.invert_precision,
         config.invert_lambda, config.timing)
        for ci, cell in enumerate(config.cells())
        for rep in range(config.replications)
    ]
    if workers > 1 and len(units) > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_run_unit_packed, units))
    else:
        results = [_run_unit_packed(u) for u in units]
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [row for _, _, unit_rows in results for row in unit_rows]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_results(rows))
    return out, rows


def format_results(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row.get(f)) for f in RESULT_FIELDS])
    return buf.getvalue()
