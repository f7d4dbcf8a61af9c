"""Run configuration: parsing, validation, serialization and fingerprinting.

Configs are YAML documents with four sections (environment, policy,
federation, run). Validation is total and reports every violation at once,
so no invalid configuration ever reaches the training layer. Parsing and
serialization round-trip exactly.
"""
from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import yaml

from .. import adversary, aggregators
from ..env import CartPoleEnv, PointMass1D, TabularMdp, random_tabular_mdp
from ..errors import ConfigurationError
from ..federation import Schedule, default_horizon
from ..policy import (GaussianLinearPolicy, LinearSoftmaxPolicy,
                      TabularSoftmaxPolicy, feature_map)

ENV_KINDS = ("tabular-random", "tabular-explicit", "cartpole", "pointmass")
POLICY_KINDS = ("tabular-softmax", "linear-softmax", "gaussian-linear")
ATTACK_KINDS = ("none", "random-noise", "sign-flip", "random-action")
AGGREGATOR_KINDS = ("mean", "mda", "cwtm", "cwmed", "meamed", "krum",
                    "multi-krum", "geometric-median")
ETA_KINDS = ("recursive", "vanilla")


class ConfigValidationError(ConfigurationError):
    """Carries the full list of violations found in a config document."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" +
                         "\n".join(f"  - {v}" for v in violations))


@dataclass
class EnvironmentConfig:
    kind: str = "cartpole"
    # tabular-random
    num_states: Optional[int] = None
    num_actions: Optional[int] = None
    mdp_seed: Optional[int] = None
    discount: Optional[float] = None
    reward_scale: float = 1.0
    # tabular-explicit
    transition: Optional[list] = None
    reward: Optional[list] = None
    initial_dist: Optional[list] = None
    # pointmass
    target: float = 1.0
    action_clip: float = 1.0
    noise_std: float = 0.05
    max_steps: Optional[int] = None


@dataclass
class PolicyConfig:
    kind: str = "linear-softmax"
    features: Optional[str] = None
    std: float = 0.5
    action_clip: Optional[float] = None
    feature_bound: Optional[float] = None


@dataclass
class AttackConfig:
    kind: str = "none"
    noise_std: Optional[float] = None
    relative_scale: Optional[float] = None
    factor: float = -1.0


@dataclass
class AggregatorConfig:
    kind: str = "mean"
    f: Optional[int] = None
    q: int = 1
    tolerance: float = 1e-9
    max_iterations: int = 10000


@dataclass
class FederationConfig:
    num_workers: int = 10
    num_byzantine: int = 0
    byzantine_ids: Optional[List[int]] = None
    attack: AttackConfig = field(default_factory=AttackConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    step_constant: float = 1.0
    eta: str = "recursive"
    total_iterations: int = 101
    horizon: Optional[int] = None
    discount: Optional[float] = None
    init_std: float = 0.0


@dataclass
class RunSection:
    seeds: List[int] = field(default_factory=lambda: [1])
    eval_interval: int = 10
    eval_episodes: int = 5
    oracle_metrics: bool = False
    output_path: str = "metrics.csv"


@dataclass
class RunConfig:
    """Fully validated description of one experiment."""

    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _suggest(name: str, options) -> str:
    close = difflib.get_close_matches(str(name), options, n=1)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return f"{name!r} is not one of {sorted(options)}{hint}"


def _build_section(cls, raw: dict, path: str, violations: List[str]):
    known = {f.name for f in cls.__dataclass_fields__.values()}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            violations.append(f"{path}: unknown key {key!r}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        violations.append(f"{path}: {exc}")
        return cls()


def _validate(cfg: RunConfig, violations: List[str]):
    env = cfg.environment
    if env.kind not in ENV_KINDS:
        violations.append("environment.kind: " + _suggest(env.kind, ENV_KINDS))
    if env.kind == "tabular-random":
        if not env.num_states or env.num_states < 1:
            violations.append("environment.num_states: required positive integer")
        if not env.num_actions or env.num_actions < 1:
            violations.append("environment.num_actions: required positive integer")
        if env.mdp_seed is None:
            violations.append("environment.mdp_seed: required for a random tabular MDP")
    if env.kind == "tabular-explicit":
        for name in ("transition", "reward", "initial_dist"):
            if getattr(env, name) is None:
                violations.append(f"environment.{name}: required for an explicit MDP")
    if env.kind.startswith("tabular"):
        if env.discount is None or not 0.0 < env.discount < 1.0:
            violations.append("environment.discount: required in (0, 1) for tabular MDPs")

    pol = cfg.policy
    if pol.kind not in POLICY_KINDS:
        violations.append("policy.kind: " + _suggest(pol.kind, POLICY_KINDS))
    if pol.kind in ("linear-softmax", "gaussian-linear") and not pol.features:
        violations.append("policy.features: required feature-map name for this policy")
    if pol.kind == "tabular-softmax" and not env.kind.startswith("tabular"):
        violations.append("policy.kind: tabular-softmax needs a tabular environment")
    if pol.kind == "gaussian-linear" and pol.std <= 0:
        violations.append("policy.std: must be positive")

    fed = cfg.federation
    if fed.num_workers < 1:
        violations.append("federation.num_workers: must be >= 1")
    if fed.num_byzantine < 0 or 2 * fed.num_byzantine >= max(fed.num_workers, 1):
        violations.append(
            f"federation.num_byzantine: breakdown point exceeded, need f < N/2 "
            f"(got f={fed.num_byzantine}, N={fed.num_workers})")
    if fed.attack.kind not in ATTACK_KINDS:
        violations.append("federation.attack.kind: " + _suggest(fed.attack.kind, ATTACK_KINDS))
    if fed.num_byzantine > 0 and fed.attack.kind == "none":
        violations.append("federation.attack.kind: byzantine workers need an attack")
    if fed.aggregator.kind not in AGGREGATOR_KINDS:
        violations.append("federation.aggregator.kind: " +
                          _suggest(fed.aggregator.kind, AGGREGATOR_KINDS))
    if fed.aggregator.kind in ("mda", "cwtm", "meamed", "krum", "multi-krum"):
        agg_f = fed.aggregator.f if fed.aggregator.f is not None else fed.num_byzantine
        if 2 * agg_f >= max(fed.num_workers, 1):
            violations.append(
                "federation.aggregator.f: breakdown point exceeded, need f < N/2")
    if fed.step_constant <= 0:
        violations.append("federation.step_constant: must be positive")
    if fed.eta not in ETA_KINDS:
        violations.append("federation.eta: " + _suggest(fed.eta, ETA_KINDS))
    if fed.total_iterations < 1:
        violations.append("federation.total_iterations: must be >= 1")
    if fed.horizon is not None and fed.horizon < 1:
        violations.append("federation.horizon: must be >= 1 when given")
    disc = fed.discount if fed.discount is not None else env.discount
    if env.kind == "cartpole" and disc is None:
        disc = 0.99
    if env.kind == "pointmass" and disc is None:
        disc = 0.95
    if disc is None or not 0.0 < disc < 1.0:
        violations.append("federation.discount: must lie in (0, 1)")
    if fed.byzantine_ids is not None:
        ids = fed.byzantine_ids
        if len(ids) != fed.num_byzantine or len(set(ids)) != len(ids) or \
                any(not 0 <= i < fed.num_workers for i in ids):
            violations.append("federation.byzantine_ids: must be num_byzantine distinct worker ids")

    run = cfg.run
    if not run.seeds:
        violations.append("run.seeds: must list at least one seed")
    if run.eval_interval < 1:
        violations.append("run.eval_interval: must be >= 1")
    if run.eval_episodes < 1:
        violations.append("run.eval_episodes: must be >= 1")
    if run.oracle_metrics and not env.kind.startswith("tabular"):
        violations.append("run.oracle_metrics: only available with tabular environments")


def from_dict(raw: dict) -> RunConfig:
    """Build and fully validate a RunConfig, reporting every violation."""
    violations: List[str] = []
    if not isinstance(raw, dict):
        raise ConfigValidationError(["config document must be a mapping"])
    known = {"environment", "policy", "federation", "run"}
    for key in raw:
        if key not in known:
            violations.append(f"unknown top-level section {key!r}")
    fed_raw = dict(raw.get("federation", {}) or {})
    attack_raw = fed_raw.pop("attack", {}) or {}
    agg_raw = fed_raw.pop("aggregator", {}) or {}
    cfg = RunConfig(
        environment=_build_section(EnvironmentConfig, raw.get("environment", {}) or {},
                                   "environment", violations),
        policy=_build_section(PolicyConfig, raw.get("policy", {}) or {},
                              "policy", violations),
        federation=_build_section(FederationConfig, fed_raw, "federation", violations),
        run=_build_section(RunSection, raw.get("run", {}) or {}, "run", violations),
    )
    cfg.federation.attack = _build_section(AttackConfig, attack_raw,
                                           "federation.attack", violations)
    cfg.federation.aggregator = _build_section(AggregatorConfig, agg_raw,
                                               "federation.aggregator", violations)
    _validate(cfg, violations)
    if violations:
        raise ConfigValidationError(violations)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse a YAML config document into a validated RunConfig."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigValidationError([f"not valid YAML: {exc}"]) from None
    if raw is None:
        raw = {}
    return from_dict(raw)


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# Compilation of a validated config into live objects.

def build_environment(cfg: RunConfig):
    env = cfg.environment
    if env.kind == "tabular-random":
        return random_tabular_mdp(env.num_states, env.num_actions, env.mdp_seed,
                                  discount=env.discount, reward_scale=env.reward_scale)
    if env.kind == "tabular-explicit":
        return TabularMdp(transition=env.transition, reward=env.reward,
                          initial_dist=env.initial_dist, discount=env.discount)
    if env.kind == "cartpole":
        kwargs = {}
        if env.max_steps is not None:
            kwargs["max_steps"] = env.max_steps
        return CartPoleEnv(**kwargs)
    if env.kind == "pointmass":
        kwargs = dict(target=env.target, action_clip=env.action_clip,
                      noise_std=env.noise_std)
        if env.max_steps is not None:
            kwargs["max_steps"] = env.max_steps
        return PointMass1D(**kwargs)
    raise ConfigurationError(f"unknown environment kind {env.kind!r}")


def build_policy(cfg: RunConfig, env):
    pol = cfg.policy
    if pol.kind == "tabular-softmax":
        return TabularSoftmaxPolicy(num_states=env.num_states,
                                    num_actions=env.num_actions)
    fn, dim, default_bound = feature_map(pol.features)
    bound = pol.feature_bound if pol.feature_bound is not None else default_bound
    if pol.kind == "linear-softmax":
        return LinearSoftmaxPolicy(features=fn, feature_dim=dim,
                                   num_actions=env.num_actions, feature_bound=bound)
    if pol.kind == "gaussian-linear":
        clip = pol.action_clip
        if clip is None:
            clip = getattr(env, "action_clip", 1.0)
        return GaussianLinearPolicy(features=fn, feature_dim=dim, std=pol.std,
                                    action_clip=clip, feature_bound=bound)
    raise ConfigurationError(f"unknown policy kind {pol.kind!r}")


def build_attack(cfg: RunConfig):
    atk = cfg.federation.attack
    if atk.kind == "none":
        return adversary.NoAttack()
    if atk.kind == "random-noise":
        if atk.noise_std is not None:
            return adversary.RandomNoise(noise_std=atk.noise_std)
        scale = atk.relative_scale if atk.relative_scale is not None else 1.0
        return adversary.RandomNoise(relative_scale=scale)
    if atk.kind == "sign-flip":
        return adversary.SignFlip(factor=atk.factor)
    if atk.kind == "random-action":
        return adversary.RandomAction()
    raise ConfigurationError(f"unknown attack kind {atk.kind!r}")


def build_aggregator(cfg: RunConfig):
    agg = cfg.federation.aggregator
    f = agg.f if agg.f is not None else cfg.federation.num_byzantine
    if agg.kind == "mean":
        return aggregators.Mean()
    if agg.kind == "mda":
        return aggregators.MDA(f=f)
    if agg.kind == "cwtm":
        return aggregators.CWTM(f=f)
    if agg.kind == "cwmed":
        return aggregators.CWMed()
    if agg.kind == "meamed":
        return aggregators.MeaMed(f=f)
    if agg.kind == "krum":
        return aggregators.MultiKrum(f=f, q=1)
    if agg.kind == "multi-krum":
        return aggregators.MultiKrum(f=f, q=agg.q)
    if agg.kind == "geometric-median":
        return aggregators.GeometricMedian(tolerance=agg.tolerance,
                                           max_iterations=agg.max_iterations)
    raise ConfigurationError(f"unknown aggregator kind {agg.kind!r}")


def effective_discount(cfg: RunConfig) -> float:
    fed, env = cfg.federation, cfg.environment
    if fed.discount is not None:
        return fed.discount
    if env.discount is not None:
        return env.discount
    return {"cartpole": 0.99, "pointmass": 0.95}.get(env.kind, 0.99)


def build_schedule(cfg: RunConfig, env) -> Schedule:
    fed = cfg.federation
    horizon = fed.horizon
    if horizon is None:
        horizon = default_horizon(fed.total_iterations, effective_discount(cfg),
                                  cap=env.max_steps)
    maker = Schedule.recursive if fed.eta == "recursive" else Schedule.vanilla
    return maker(fed.step_constant, horizon)


def build_roles(cfg: RunConfig):
    fed = cfg.federation
    return adversary.assign_roles(fed.num_workers, fed.num_byzantine,
                                  build_attack(cfg), byzantine_ids=fed.byzantine_ids)
