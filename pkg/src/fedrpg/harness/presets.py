"""Config presets for the benchmark grid: eight algorithm variants
(six robust aggregators, simple mean, and vanilla policy gradient with a
simple mean) crossed with the three attack models.

The hyperparameters here are this package's tuned desk-scale values, not
values taken from anywhere else.
"""
from __future__ import annotations

from typing import Dict, List, Tuple

from .config import RunConfig, from_dict

VARIANTS: Tuple[str, ...] = ("mda", "cwtm", "cwmed", "meamed", "krum",
                             "geometric-median", "sm", "pg-sm")
ATTACKS: Tuple[str, ...] = ("random-noise", "random-action", "sign-flip")

# Desk-scale defaults for the cart-pole benchmark.
CARTPOLE_DEFAULTS = dict(
    num_workers=10,
    num_byzantine=3,
    total_iterations=101,
    step_constant=4.0,
    seeds=[1, 2, 3, 4, 5],
    eval_interval=10,
    eval_episodes=5,
    sign_flip_factor=-3.0,
    noise_relative_scale=1.0,
)


def _attack_section(attack: str, defaults: dict) -> dict:
    if attack == "sign-flip":
        return {"kind": "sign-flip", "factor": defaults["sign_flip_factor"]}
    if attack == "random-noise":
        return {"kind": "random-noise",
                "relative_scale": defaults["noise_relative_scale"]}
    if attack == "random-action":
        return {"kind": "random-action"}
    return {"kind": "none"}


def cartpole_config(variant: str, attack: str, **overrides) -> RunConfig:
    """One cart-pole benchmark cell as a validated RunConfig."""
    defaults = dict(CARTPOLE_DEFAULTS)
    defaults.update(overrides)
    eta = "vanilla" if variant == "pg-sm" else "recursive"
    aggregator = "mean" if variant in ("sm", "pg-sm") else variant
    raw = {
        "environment": {"kind": "cartpole"},
        "policy": {"kind": "linear-softmax", "features": "cartpole-norm"},
        "federation": {
            "num_workers": defaults["num_workers"],
            "num_byzantine": defaults["num_byzantine"],
            "attack": _attack_section(attack, defaults),
            "aggregator": {"kind": aggregator},
            "step_constant": defaults["step_constant"],
            "eta": eta,
            "total_iterations": defaults["total_iterations"],
            "discount": 0.99,
        },
        "run": {
            "seeds": list(defaults["seeds"]),
            "eval_interval": defaults["eval_interval"],
            "eval_episodes": defaults["eval_episodes"],
            "output_path": f"cartpole_{variant}_{attack}.csv",
        },
    }
    return from_dict(raw)


def figure_grid(environment: str = "cartpole", **overrides) -> Dict[Tuple[str, str], RunConfig]:
    """The full benchmark grid: every variant under every attack."""
    if environment != "cartpole":
        raise ValueError(f"no preset grid for environment {environment!r}")
    return {(variant, attack): cartpole_config(variant, attack, **overrides)
            for variant in VARIANTS for attack in ATTACKS}


def grid_names() -> List[str]:
    return [f"{variant}__{attack}" for variant in VARIANTS for attack in ATTACKS]
