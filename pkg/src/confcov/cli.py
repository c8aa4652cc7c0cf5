"""Command-line entry point: ``confcov <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import estimators as est_mod
from .errors import ConfcovError
from .experiment import ExperimentConfig, run_experiment
from .graph import DEFAULT_LAMBDA, cig_estimate, cpdag_orient, pc_skeleton
from .io import read_matrix, write_matrix
from .simulation import GroundTruth, ScenarioSpec, make_ground_truth, population_diagnostics, sample_dataset


def _df(text):
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def bundled_config_path():
    return str(resources.files("confcov").joinpath("data/small_config.json"))


def cmd_simulate(args):
    spec = ScenarioSpec(args.kind, args.p, args.n, args.nu, args.df1, args.df2, args.link, args.seed)
    gt = make_ground_truth(spec)
    x = sample_dataset(gt, args.n + 1, args.df1, args.link, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    write_matrix(os.path.join(args.out_dir, "X.csv"), x)
    write_matrix(os.path.join(args.out_dir, "sigma.csv"), gt.sigma)
    write_matrix(os.path.join(args.out_dir, "gamma.csv"), gt.gamma)


def cmd_estimate(args):
    x = read_matrix(args.input)
    method = args.method
    if method == "rsvp":
        est = est_mod.rsvp(x)
    elif method == "empirical":
        est = est_mod.empirical_covariance(x)
    elif method in ("rsvp-split", "rsvp-sub"):
        m = args.m if args.m is not None else est_mod.default_subsample_size(x.shape[1])
        if method == "rsvp-split":
            est = est_mod.rsvp_split(x, est_mod.SubsampleConfig.split(m, args.seed))
        else:
            est = est_mod.rsvp_sub(x, est_mod.SubsampleConfig.sub(m, args.b, args.seed))
    else:
        if args.ell == "bai-ng":
            rank = min(x.shape[0] - 1, x.shape[1])
            ell = est_mod.bai_ng_select(x, max(min(args.kmax, rank - 1), 0))
        else:
            ell = int(args.ell)
        est = est_mod.pca_removal(x, ell)
    write_matrix(args.out, est.matrix)


def _write_lines(path, lines):
    text = "".join(line + "\n" for line in lines)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_graph(args):
    est = read_matrix(args.input)
    edges, proxy = cig_estimate(est, args.lam, args.rule, args.tol, args.max_iter)
    _write_lines(args.out, [f"{j},{k}" for j, k in edges])
    if args.precision_out:
        write_matrix(args.precision_out, proxy)


def cmd_pc(args):
    est = read_matrix(args.input)
    skeleton, sepsets = pc_skeleton(est, args.tau, args.max_cond_size)
    g = cpdag_orient(skeleton, sepsets)
    lines = ["type,from,to"]
    lines += [f"directed,{a},{b}" for a, b in sorted(g.directed)]
    lines += [f"undirected,{a},{b}" for a, b in sorted(g.undirected)]
    _write_lines(args.out, lines)
    if g.conflicts:
        listed = " ".join(f"{a}-{b}" for a, b in sorted(g.conflicts))
        print(f"warning: {len(g.conflicts)} edges with conflicting orientations left undirected: {listed}",
              file=sys.stderr)


def cmd_experiment(args):
    config = ExperimentConfig.from_json(args.config or bundled_config_path())
    out, rows = run_experiment(config, output_path=args.output, parallelism=args.parallelism)
    failed = sum(1 for r in rows if r.get("error"))
    print(f"wrote {len(rows)} rows to {out} ({failed} with errors)", file=sys.stderr)


def cmd_diagnostics(args):
    sigma = read_matrix(args.sigma)
    gamma = read_matrix(args.gamma)
    gt = GroundTruth(sigma=sigma, omega=np.linalg.inv(sigma), gamma=gamma)
    text = json.dumps(population_diagnostics(gt).to_dict(), indent=2) + "\n"
    _write_lines(args.out, [text.rstrip("\n")])


def build_parser():
    parser = argparse.ArgumentParser(prog="confcov", description="Covariance estimation under latent confounding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a scenario; writes X.csv (n+1 rows), sigma.csv, gamma.csv")
    p.add_argument("--kind", required=True, choices=["block", "block2", "toeplitz", "toeplitz2", "erdos_renyi"])
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="effective sample size; n+1 rows are written")
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--df1", type=_df, default=math.inf)
    p.add_argument("--df2", type=_df, default=math.inf)
    p.add_argument("--link", choices=["linear", "max_linear"], default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate a covariance from a data matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--method", required=True, choices=["rsvp", "rsvp-split", "rsvp-sub", "pca-removal", "empirical"])
    p.add_argument("--m", type=int, default=None, help="subsample size (default round(2 sqrt(p)))")
    p.add_argument("--b", type=int, default=50, help="number of subsamples for rsvp-sub")
    p.add_argument("--ell", default="0", help="components to remove, or 'bai-ng'")
    p.add_argument("--kmax", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("graph", help="nodewise-Lasso conditional independence graph")
    p.add_argument("--input", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--rule", choices=["and", "or"], default="and")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--out", default=None)
    p.add_argument("--precision-out", default=None)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("pc", help="PC algorithm on an estimated covariance")
    p.add_argument("--input", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--max-cond-size", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pc)

    p = sub.add_parser("experiment", help="run a simulation sweep from a JSON config")
    p.add_argument("--config", default=None, help="config JSON (default: the bundled small config)")
    p.add_argument("--output", default=None)
    p.add_argument("--parallelism", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("diagnostics", help="population diagnostics of (sigma, gamma) as JSON")
    p.add_argument("--sigma", required=True)
    p.add_argument("--gamma", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diagnostics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConfcovError, OSError, ValueError) as exc:
        print(f"confcov {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
