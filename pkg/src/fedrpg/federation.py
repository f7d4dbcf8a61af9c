"""Federated training loop: per-worker variance-reduced recursion with a
curvature correction, robust aggregation at the server, and a normalized
parameter step of exactly gamma_t per accepted iteration.

Within one iteration the worker computations are independent given the two
broadcast parameter vectors; determinism is guaranteed by giving every
worker its own seeded stream and normalizing message order by worker id
before aggregation, so results never depend on execution interleaving.

Per worker and iteration the randomness is consumed in a fixed order: the
interpolation weight q, then the trajectory at the current parameters, then
the trajectory at the interpolated parameters, then any message corruption.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .adversary import AgentRole, NoAttack, RandomAction, adversarial_policy_override, corrupt_gradient
from .aggregators import AggregatorKind, aggregate
from .env import TabularMdp, sample_trajectory, undiscounted_return
from .errors import ConfigurationError, RunAbortError
from .estimators import TruncationSpec, exact_grad, gpomdp, hessian_correction
from .policy import TabularSoftmaxPolicy
from .tabular_fast import sample_trajectory_tabular


def _sampler_for(env, policy, action_override):
    """Pick the stream-compatible fast sampler where it applies."""
    if action_override is None and isinstance(env, TabularMdp) \
            and isinstance(policy, TabularSoftmaxPolicy):
        return lambda theta, horizon, rng: sample_trajectory_tabular(
            env, policy, theta, horizon, rng)
    return lambda theta, horizon, rng: sample_trajectory(
        env, policy, theta, horizon, rng, action_override)


@dataclass(frozen=True)
class Schedule:
    """Step-size and averaging-weight schedules plus the sampling horizon."""

    eta: Callable[[int], float]
    gamma_step: Callable[[int], float]
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")

    @classmethod
    def recursive(cls, step_constant: float, horizon: int) -> "Schedule":
        """Defaults: averaging weight 1/t, step c/(t+2)."""
        if step_constant <= 0:
            raise ConfigurationError("step_constant must be positive")
        return cls(eta=lambda t: 1.0 / t,
                   gamma_step=lambda t: step_constant / (t + 2.0),
                   horizon=horizon)

    @classmethod
    def vanilla(cls, step_constant: float, horizon: int) -> "Schedule":
        """Plain policy gradient: weight 1 kills the momentum and correction terms."""
        if step_constant <= 0:
            raise ConfigurationError("step_constant must be positive")
        return cls(eta=lambda t: 1.0,
                   gamma_step=lambda t: step_constant / (t + 2.0),
                   horizon=horizon)


def default_horizon(total_iterations: int, discount: float,
                    cap: Optional[int] = None) -> int:
    """Sampling horizon ceil(log(T + 1) / (1 - discount)), optionally capped."""
    if total_iterations < 1:
        raise ConfigurationError("total_iterations must be >= 1")
    h = max(1, math.ceil(math.log(total_iterations + 1.0) / (1.0 - discount)))
    if cap is not None:
        h = min(h, cap)
    return h


@dataclass(frozen=True)
class GradientMessage:
    """One worker's update direction for one iteration, honest or corrupted."""

    worker_id: int
    iteration: int
    values: np.ndarray


@dataclass
class WorkerState:
    """Per-worker recursion state and private random stream."""

    worker_id: int
    d_prev: np.ndarray
    role: AgentRole
    rng: np.random.Generator


@dataclass
class ServerState:
    """Current and previous parameter vectors at the server."""

    theta_curr: np.ndarray
    theta_prev: np.ndarray
    iteration: int
    num_workers: int


@dataclass(frozen=True)
class IterationRecord:
    """Metrics row for one iteration."""

    iteration: int
    aggregated_norm: float
    trajectories_consumed: int
    eval_return: Optional[float] = None
    grad_error: Optional[float] = None


@dataclass(frozen=True)
class RunResult:
    records: List[IterationRecord]
    theta_final: np.ndarray
    theta_history: Optional[List[np.ndarray]] = None


def worker_step(state: WorkerState, theta_curr: np.ndarray, theta_prev: np.ndarray,
                eta_t: float, iteration: int, env, policy, horizon: int,
                discount: float) -> GradientMessage:
    """One worker's update: sample a trajectory pair, advance the recursion,
    then corrupt the outgoing message if the worker is compromised.

    The honest recursion value is kept as ``d_prev`` even for compromised
    workers; message corruption never feeds back into their own state.
    """
    if not 0.0 < eta_t <= 1.0:
        raise ConfigurationError(f"eta_t must lie in (0, 1], got {eta_t}")
    rng = state.rng
    attack = state.role.attack
    override = adversarial_policy_override(attack, policy)
    sample = _sampler_for(env, policy, override)

    q = rng.random()
    theta_hat = q * theta_curr + (1.0 - q) * theta_prev
    traj = sample(theta_curr, horizon, rng)
    traj_hat = sample(theta_hat, horizon, rng)

    displacement = theta_curr - theta_prev
    keep = 1.0 - eta_t
    if keep != 0.0 and np.any(displacement):
        correction = hessian_correction(traj_hat, policy, theta_hat, discount, displacement)
    else:
        correction = np.zeros_like(theta_curr)
    grad = gpomdp(traj, policy, theta_curr, discount)
    d_new = keep * (state.d_prev + correction) + eta_t * grad
    state.d_prev = d_new

    sent = d_new
    if not isinstance(attack, (NoAttack, RandomAction)):
        sent = corrupt_gradient(attack, d_new, rng)
    return GradientMessage(worker_id=state.worker_id, iteration=iteration, values=sent)


def server_step(server: ServerState, messages: Sequence[GradientMessage],
                kind: AggregatorKind, gamma_t: float):
    """Aggregate one message per worker and take a normalized step of length gamma_t.

    Returns the advanced server state together with the aggregated direction.
    A zero aggregate leaves the parameters unchanged; a non-finite one aborts
    the run with diagnostics.
    """
    if len(messages) != server.num_workers:
        raise ConfigurationError(
            f"expected {server.num_workers} messages, got {len(messages)}")
    if gamma_t <= 0:
        raise ConfigurationError("gamma_t must be positive")
    ordered = sorted(messages, key=lambda m: m.worker_id)
    direction = aggregate(kind, [m.values for m in ordered])
    if not np.all(np.isfinite(direction)):
        raise RunAbortError(
            "aggregated direction is not finite",
            diagnostics={"iteration": server.iteration,
                         "message_norms": [float(np.linalg.norm(m.values)) for m in ordered]})
    norm = float(np.linalg.norm(direction))
    if norm > 0.0:
        theta_next = server.theta_curr + (gamma_t / norm) * direction
    else:
        theta_next = server.theta_curr.copy()
    advanced = ServerState(theta_curr=theta_next, theta_prev=server.theta_curr,
                           iteration=server.iteration + 1, num_workers=server.num_workers)
    return advanced, direction


def evaluate_policy(env, policy, theta, episodes: int, horizon: int,
                    rng: np.random.Generator) -> float:
    """Mean undiscounted return of the stochastic policy over fresh rollouts."""
    sample = _sampler_for(env, policy, None)
    total = 0.0
    for _ in range(episodes):
        traj = sample(theta, horizon, rng)
        total += undiscounted_return(traj)
    return total / episodes


def run(env, policy, *, aggregator: AggregatorKind, schedule: Schedule,
        discount: float, roles: Sequence[AgentRole], total_iterations: int,
        seed: int, init_std: float = 0.0, d_init: Optional[np.ndarray] = None,
        worker_seeds: Optional[Sequence] = None, eval_interval: int = 10,
        eval_episodes: int = 5, oracle_metrics: bool = False,
        record_thetas: bool = False) -> RunResult:
    """Run the full training loop for ``total_iterations - 1`` server rounds.

    Results are a deterministic function of the configuration and seeds.
    ``worker_seeds`` optionally pins each worker's stream (used to show
    worker-order independence); by default streams are spawned from ``seed``.
    ``oracle_metrics`` additionally records the distance between the
    aggregated direction and the exact truncated gradient (tabular only).
    """
    roles = list(roles)
    num_workers = len(roles)
    if num_workers < 1:
        raise ConfigurationError("need at least one worker")
    if sorted(r.worker_id for r in roles) != list(range(num_workers)):
        raise ConfigurationError("roles must cover worker ids 0..N-1 exactly once")
    num_byz = sum(r.is_byzantine for r in roles)
    if 2 * num_byz >= num_workers:
        raise ConfigurationError(f"need f < N/2, got f={num_byz}, N={num_workers}")
    if total_iterations < 1:
        raise ConfigurationError("total_iterations must be >= 1")
    if not 0.0 < discount < 1.0:
        raise ConfigurationError("discount must lie in (0, 1)")
    if eval_interval < 1 or eval_episodes < 1:
        raise ConfigurationError("eval_interval and eval_episodes must be >= 1")
    if oracle_metrics and not isinstance(env, TabularMdp):
        raise ConfigurationError("oracle metrics require a tabular environment")

    root = np.random.SeedSequence(seed)
    init_ss, eval_ss, *default_worker_ss = root.spawn(2 + num_workers)
    if worker_seeds is None:
        worker_streams = [np.random.default_rng(ss) for ss in default_worker_ss]
    else:
        if len(worker_seeds) != num_workers:
            raise ConfigurationError("worker_seeds must list one seed per worker")
        worker_streams = [np.random.default_rng(s) for s in worker_seeds]
    init_rng = np.random.default_rng(init_ss)
    eval_rng = np.random.default_rng(eval_ss)

    dim = policy.param_dim
    if init_std > 0:
        theta0 = init_rng.normal(0.0, init_std, size=dim)
    else:
        theta0 = np.zeros(dim)
    if d_init is None:
        d_init = np.zeros(dim)
    d_init = np.asarray(d_init, dtype=float)
    if d_init.shape != (dim,):
        raise ConfigurationError("d_init has the wrong dimension")

    roles_by_id = sorted(roles, key=lambda r: r.worker_id)
    workers = [WorkerState(worker_id=r.worker_id, d_prev=d_init.copy(), role=r,
                           rng=worker_streams[r.worker_id]) for r in roles_by_id]
    server = ServerState(theta_curr=theta0.copy(), theta_prev=theta0.copy(),
                         iteration=1, num_workers=num_workers)
    trunc = TruncationSpec(horizon=schedule.horizon, discount=discount) \
        if oracle_metrics else None
    eval_horizon = env.max_steps if env.max_steps is not None else schedule.horizon

    records: List[IterationRecord] = []
    history = [theta0.copy()] if record_thetas else None
    trajectories = 0
    for t in range(1, total_iterations):
        eta_t = schedule.eta(t)
        theta_t, theta_tm1 = server.theta_curr, server.theta_prev
        messages = [worker_step(w, theta_t, theta_tm1, eta_t, t, env, policy,
                                schedule.horizon, discount) for w in workers]
        trajectories += 2 * num_workers
        server, direction = server_step(server, messages, aggregator,
                                        schedule.gamma_step(t))
        grad_error = None
        if oracle_metrics:
            target = exact_grad(env, policy, theta_t, trunc)
            grad_error = float(np.linalg.norm(direction - target))
        eval_return = None
        if t % eval_interval == 0 or t == total_iterations - 1:
            eval_return = evaluate_policy(env, policy, server.theta_curr,
                                          eval_episodes, eval_horizon, eval_rng)
        agg_norm = float(np.linalg.norm(direction))
        records.append(IterationRecord(
            iteration=t,
            aggregated_norm=agg_norm,
            trajectories_consumed=trajectories,
            eval_return=eval_return,
            grad_error=grad_error,
        ))
        if record_thetas:
            history.append(server.theta_curr.copy())
    return RunResult(records=records, theta_final=server.theta_curr,
                     theta_history=history)
