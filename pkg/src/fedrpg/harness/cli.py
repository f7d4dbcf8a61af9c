"""Command-line interface.

Subcommands:
  run                 execute a config file and write its metrics file
  summarize           cross-seed summary table from metrics files
  verify-aggregators  exhaustive resilience audit on random collections
  check-estimators    gradient-estimator sanity audit on a random tabular MDP
  presets             write the benchmark-grid config files
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .. import aggregators
from ..env import random_tabular_mdp
from ..errors import FedRpgError
from ..estimators import TruncationSpec, exact_grad, gradient_norm_bound
from ..policy import TabularSoftmaxPolicy
from ..tabular_fast import gpomdp_sample_stats
from .config import parse_config, serialize_config
from .experiment import run_experiment
from .metrics import read_metrics, summarize, summary_table
from .presets import figure_grid


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        cfg = parse_config(fh.read())
    seeds = args.seed_override if args.seed_override else None
    path = run_experiment(cfg, output_dir=args.output_dir,
                          seed_override=seeds, jobs=args.jobs)
    print(f"wrote {path}")
    return 0


def _cmd_summarize(args) -> int:
    files = [read_metrics(p) for p in args.files]
    table = summary_table(summarize(files))
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(table)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(table)
    return 0


def _cmd_verify_aggregators(args) -> int:
    rng = np.random.default_rng(args.seed)
    fs = [int(x) for x in args.f.split(",")]
    ds = [int(x) for x in args.d.split(",")]
    rules = {
        "mda": lambda f: aggregators.MDA(f=f),
        "cwtm": lambda f: aggregators.CWTM(f=f),
        "cwmed": lambda f: aggregators.CWMed(),
        "meamed": lambda f: aggregators.MeaMed(f=f),
        "krum": lambda f: aggregators.MultiKrum(f=f, q=1),
        "geometric-median": lambda f: aggregators.GeometricMedian(),
    }
    failures = 0
    for name, make in rules.items():
        worst = 0.0
        worst_margin = 0.0
        violations = 0
        for f in fs:
            for d in ds:
                lam = aggregators.lambda_of(make(f), args.n, f, d)
                for _ in range(args.trials):
                    collection = aggregators.random_mixed_collection(rng, args.n, f, d)
                    report = aggregators.check_resilience(make(f), collection, f)
                    violations += len(report.violations)
                    worst = max(worst, report.max_ratio)
                    worst_margin = max(worst_margin, report.max_ratio / lam)
        status = "ok" if violations == 0 else "VIOLATED"
        print(f"{name:18s} {status:8s} worst ratio {worst:8.4f} "
              f"worst ratio/lambda {worst_margin:6.3f} violations {violations}")
        failures += violations
    return 0 if failures == 0 else 1


def _cmd_check_estimators(args) -> int:
    mdp = random_tabular_mdp(3, 2, args.mdp_seed, discount=0.9)
    policy = TabularSoftmaxPolicy(num_states=3, num_actions=2)
    rng = np.random.default_rng(args.mdp_seed + 1)
    theta = rng.normal(0.0, 0.5, size=policy.param_dim)
    horizon = 30
    stats = gpomdp_sample_stats(mdp, policy, theta, mdp.discount, horizon,
                                args.samples, rng)
    target = exact_grad(mdp, policy, theta, TruncationSpec(horizon, mdp.discount))
    z = np.abs(stats.mean - target) / np.maximum(stats.stderr, 1e-300)
    bound = gradient_norm_bound(policy.score_bounds(), mdp.reward_bound, mdp.discount)
    print(f"samples            {stats.count}")
    print(f"max |z| per coord  {z.max():.3f}  (should be < 4)")
    print(f"max sample norm    {stats.max_norm:.3f}  (bound {bound:.3f})")
    ok = bool(z.max() < 4.0 and stats.max_norm <= bound)
    print("estimator audit:", "ok" if ok else "FAILED")
    return 0 if ok else 1


def _cmd_presets(args) -> int:
    import os
    os.makedirs(args.output_dir, exist_ok=True)
    grid = figure_grid(args.env)
    for (variant, attack), cfg in grid.items():
        path = os.path.join(args.output_dir, f"{variant}__{attack}.yaml")
        with open(path, "w") as fh:
            fh.write(serialize_config(cfg))
    print(f"wrote {len(grid)} configs to {args.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedrpg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed-override", type=int, nargs="+", default=None)
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="summarize metrics files")
    p_sum.add_argument("files", nargs="+")
    p_sum.add_argument("--output", default=None)
    p_sum.set_defaults(func=_cmd_summarize)

    p_ver = sub.add_parser("verify-aggregators",
                           help="resilience audit on random collections")
    p_ver.add_argument("--n", type=int, default=7)
    p_ver.add_argument("--f", default="1,2,3")
    p_ver.add_argument("--d", default="1,3,10")
    p_ver.add_argument("--trials", type=int, default=100)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.set_defaults(func=_cmd_verify_aggregators)

    p_chk = sub.add_parser("check-estimators",
                           help="gradient estimator audit on a random MDP")
    p_chk.add_argument("--mdp-seed", type=int, default=0)
    p_chk.add_argument("--samples", type=int, default=200000)
    p_chk.set_defaults(func=_cmd_check_estimators)

    p_pre = sub.add_parser("presets", help="write the benchmark grid configs")
    p_pre.add_argument("--env", default="cartpole")
    p_pre.add_argument("--output-dir", default="presets")
    p_pre.set_defaults(func=_cmd_presets)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FedRpgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
