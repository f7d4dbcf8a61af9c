"""Experiment orchestration: one validated config, many seeds, one metrics file."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

from .. import __version__
from ..federation import run as run_training
from .config import (RunConfig, build_aggregator, build_environment,
                     build_policy, build_roles, build_schedule,
                     effective_discount, from_dict)
from .metrics import MetricsFile, MetricsRow, write_metrics


def run_single_seed(cfg: RunConfig, seed: int) -> List[MetricsRow]:
    """Train once with one seed and return its metric rows."""
    env = build_environment(cfg)
    policy = build_policy(cfg, env)
    result = run_training(
        env, policy,
        aggregator=build_aggregator(cfg),
        schedule=build_schedule(cfg, env),
        discount=effective_discount(cfg),
        roles=build_roles(cfg),
        total_iterations=cfg.federation.total_iterations,
        seed=seed,
        init_std=cfg.federation.init_std,
        eval_interval=cfg.run.eval_interval,
        eval_episodes=cfg.run.eval_episodes,
        oracle_metrics=cfg.run.oracle_metrics,
    )
    return [MetricsRow(seed=seed, iteration=r.iteration,
                       trajectories=r.trajectories_consumed,
                       eval_return=r.eval_return, grad_error=r.grad_error,
                       agg_norm=r.aggregated_norm)
            for r in result.records]


def _run_seed_from_dict(args) -> List[MetricsRow]:
    raw, seed = args
    return run_single_seed(from_dict(raw), seed)


def collect_metrics(cfg: RunConfig, seeds: Optional[List[int]] = None,
                    jobs: int = 1) -> MetricsFile:
    """Run every seed (optionally in parallel processes) and assemble the rows.

    Rows are ordered by (seed, iteration) regardless of execution order, so
    the output is independent of ``jobs``.
    """
    seeds = sorted(seeds if seeds is not None else cfg.run.seeds)
    if jobs > 1 and len(seeds) > 1:
        raw = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_seed_from_dict, [(raw, s) for s in seeds]))
    else:
        per_seed = [run_single_seed(cfg, s) for s in seeds]
    rows = [row for chunk in per_seed for row in chunk]
    header = {
        "config": cfg.fingerprint(),
        "version": __version__,
        "variant": cfg.federation.aggregator.kind if cfg.federation.eta == "recursive"
                   else f"pg-{cfg.federation.aggregator.kind}",
        "attack": cfg.federation.attack.kind,
        "env": cfg.environment.kind,
        "workers": cfg.federation.num_workers,
        "byzantine": cfg.federation.num_byzantine,
    }
    return MetricsFile(header=header, rows=rows)


def run_experiment(cfg: RunConfig, output_dir: Optional[str] = None,
                   seed_override: Optional[List[int]] = None,
                   jobs: int = 1) -> str:
    """Execute a config end to end and persist its metrics file.

    Returns the path written. The payload (everything after the header) is a
    deterministic function of the config and seeds.
    """
    metrics = collect_metrics(cfg, seeds=seed_override, jobs=jobs)
    path = cfg.run.output_path
    if output_dir is not None:
        path = os.path.join(output_dir, os.path.basename(path))
    write_metrics(path, metrics)
    return path
