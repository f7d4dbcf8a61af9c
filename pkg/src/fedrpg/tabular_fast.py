"""Vectorized sampling and estimation for tabular-softmax policies.

The statistical diagnostics draw 1e5+ trajectories; doing that through the
scalar sampler would dominate the test budget. These routines batch the
work across trajectories with numpy. They are an optimization only: the
batch estimators are checked against the per-trajectory implementations on
identical inputs, and every distributional claim is still judged against
the exact oracles.

Shapes: M trajectories of fixed length H on an MDP with S states and A
actions; parameters have dimension d = S * A.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .env import TabularMdp, Trajectory
from .errors import ConfigurationError
from .policy import TabularSoftmaxPolicy


def policy_matrices(policy: TabularSoftmaxPolicy, thetas: np.ndarray) -> np.ndarray:
    """Softmax tables for one theta (S, A) or a batch of thetas (M, S, A)."""
    thetas = np.asarray(thetas, dtype=float)
    logits = thetas.reshape(thetas.shape[:-1] + (policy.num_states, policy.num_actions))
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_trajectory_tabular(mdp: TabularMdp, policy: TabularSoftmaxPolicy, theta,
                              horizon: int, rng: np.random.Generator) -> Trajectory:
    """Fast single-trajectory sampler for tabular MDPs under a softmax policy.

    Consumes the random stream exactly like the generic sampler (one uniform
    for the initial state, then one per action and one per transition), so it
    is a drop-in replacement producing bit-identical trajectories.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    pi_cdf = np.cumsum(policy_matrices(policy, np.asarray(theta, dtype=float)),
                       axis=1).tolist()
    init_cdf = mdp._initial_cdf.tolist()
    trans_cdf = mdp._transition_cdf.tolist()
    num_states = mdp.num_states
    last_a = mdp.num_actions - 1
    last_s = num_states - 1
    u = rng.random(1 + 2 * horizon)
    state = min(bisect_right(init_cdf, u[0]), last_s)
    states = []
    actions = []
    k = 1
    for _ in range(horizon):
        action = min(bisect_right(pi_cdf[state], u[k]), last_a)
        states.append(state)
        actions.append(action)
        state = min(bisect_right(trans_cdf[state][action], u[k + 1]), last_s)
        k += 2
    rewards = mdp.reward[states, actions]
    return Trajectory(states=tuple(states), actions=tuple(actions), rewards=rewards,
                      horizon_cap=horizon, terminated_early=False)


def _draw_rows(prob_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of an (M, K) probability matrix."""
    cdf = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1)


def sample_batch(mdp: TabularMdp, probs: np.ndarray, horizon: int, num: int,
                 rng: np.random.Generator):
    """Sample ``num`` length-``horizon`` trajectories in lockstep.

    ``probs`` is either one policy table (S, A) shared by all trajectories or
    a per-trajectory batch (num, S, A). Returns integer arrays ``states`` and
    ``actions`` of shape (num, horizon) and a float ``rewards`` array.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 2:
        probs = np.broadcast_to(probs, (num,) + probs.shape)
    elif probs.shape[0] != num:
        raise ConfigurationError("per-trajectory probs must have leading dimension num")
    states = np.empty((num, horizon), dtype=np.int64)
    actions = np.empty((num, horizon), dtype=np.int64)
    rows = np.arange(num)
    state = _draw_rows(np.broadcast_to(mdp.initial_dist, (num, mdp.num_states)), rng)
    for h in range(horizon):
        action = _draw_rows(probs[rows, state], rng)
        states[:, h] = state
        actions[:, h] = action
        state = _draw_rows(mdp.transition[state, action], rng)
    rewards = mdp.reward[states, actions]
    return states, actions, rewards


def _one_hot(indices: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(indices.shape + (size,))
    flat = out.reshape(-1, size)
    flat[np.arange(flat.shape[0]), indices.ravel()] = 1.0
    return out


def _per_step_tables(policy, probs, states):
    """Gather pi(.|s_t) per (trajectory, step): returns (M, H, A)."""
    num = states.shape[0]
    if probs.ndim == 2:
        return probs[states]
    return probs[np.arange(num)[:, None], states]


def _rtg_batch(rewards: np.ndarray, gamma: float) -> np.ndarray:
    horizon = rewards.shape[1]
    discs = gamma ** np.arange(horizon)
    weighted = rewards * discs
    return np.flip(np.cumsum(np.flip(weighted, axis=1), axis=1), axis=1)


def gpomdp_batch(policy: TabularSoftmaxPolicy, probs, states, actions, rewards,
                 gamma: float) -> np.ndarray:
    """Batch of reward-to-go gradient estimates, shape (M, d)."""
    probs = np.asarray(probs, dtype=float)
    rtg = _rtg_batch(rewards, gamma)
    pi_t = _per_step_tables(policy, probs, states)
    score_content = _one_hot(actions, policy.num_actions) - pi_t
    one_s = _one_hot(states, policy.num_states)
    grads = np.einsum("mhs,mh,mha->msa", one_s, rtg, score_content)
    return grads.reshape(states.shape[0], policy.param_dim)


def correction_batch(policy: TabularSoftmaxPolicy, probs, states, actions, rewards,
                     gamma: float, u: np.ndarray) -> np.ndarray:
    """Batch of curvature corrections B(traj, theta) @ u, shape (M, d)."""
    probs = np.asarray(probs, dtype=float)
    u = np.asarray(u, dtype=float)
    u_mat = u.reshape(policy.num_states, policy.num_actions)
    rtg = _rtg_batch(rewards, gamma)
    pi_t = _per_step_tables(policy, probs, states)
    one_s = _one_hot(states, policy.num_states)
    one_a = _one_hot(actions, policy.num_actions)
    score_content = one_a - pi_t

    grad_phi = np.einsum("mhs,mh,mha->msa", one_s, rtg, score_content)
    total_score = np.einsum("mhs,mha->msa", one_s, score_content)
    num = states.shape[0]
    dots = total_score.reshape(num, -1) @ u.ravel()

    u_t = np.einsum("mhs,sa->mha", one_s, u_mat)
    z = (pi_t * u_t).sum(axis=2)
    hvp_content = -(pi_t * u_t - pi_t * z[:, :, None])
    hvp_sum = np.einsum("mhs,mh,mha->msa", one_s, rtg, hvp_content)

    out = grad_phi.reshape(num, -1) * dots[:, None] + hvp_sum.reshape(num, -1)
    return out


@dataclass(frozen=True)
class SampleStats:
    """Streaming moments of a vector-valued sample plus the largest norm seen."""

    mean: np.ndarray
    stderr: np.ndarray
    max_norm: float
    count: int


class _MomentAccumulator:
    def __init__(self, dim: int):
        self.count = 0
        self.total = np.zeros(dim)
        self.total_sq = np.zeros(dim)
        self.max_norm = 0.0

    def add(self, batch: np.ndarray):
        self.count += batch.shape[0]
        self.total += batch.sum(axis=0)
        self.total_sq += (batch**2).sum(axis=0)
        norms = np.linalg.norm(batch, axis=1)
        if norms.size:
            self.max_norm = max(self.max_norm, float(norms.max()))

    def stats(self) -> SampleStats:
        mean = self.total / self.count
        var = np.maximum(self.total_sq / self.count - mean**2, 0.0)
        stderr = np.sqrt(var / self.count)
        return SampleStats(mean=mean, stderr=stderr, max_norm=self.max_norm,
                           count=self.count)


def gpomdp_sample_stats(mdp: TabularMdp, policy: TabularSoftmaxPolicy, theta,
                        gamma: float, horizon: int, num_samples: int,
                        rng: np.random.Generator, chunk: int = 8192) -> SampleStats:
    """Moments of the gradient estimator over fresh trajectories at theta."""
    probs = policy_matrices(policy, np.asarray(theta, dtype=float))
    acc = _MomentAccumulator(policy.param_dim)
    remaining = num_samples
    while remaining > 0:
        m = min(chunk, remaining)
        states, actions, rewards = sample_batch(mdp, probs, horizon, m, rng)
        acc.add(gpomdp_batch(policy, probs, states, actions, rewards, gamma))
        remaining -= m
    return acc.stats()


def correction_sample_stats(mdp: TabularMdp, policy: TabularSoftmaxPolicy, theta, u,
                            gamma: float, horizon: int, num_samples: int,
                            rng: np.random.Generator, theta_prev=None,
                            chunk: int = 8192) -> SampleStats:
    """Moments of B(traj, theta_hat) @ u over fresh trajectories.

    With ``theta_prev`` given, each sample interpolates theta_hat between the
    two parameter vectors at an independent uniform weight and samples its
    trajectory there (the variance-reduction construction); otherwise all
    samples sit at ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    acc = _MomentAccumulator(policy.param_dim)
    remaining = num_samples
    while remaining > 0:
        m = min(chunk, remaining)
        if theta_prev is None:
            probs = policy_matrices(policy, theta)
        else:
            q = rng.random(m)
            theta_hat = q[:, None] * theta + (1.0 - q[:, None]) * np.asarray(theta_prev)
            probs = policy_matrices(policy, theta_hat)
        states, actions, rewards = sample_batch(mdp, probs, horizon, m, rng)
        acc.add(correction_batch(policy, probs, states, actions, rewards, gamma, u))
        remaining -= m
    return acc.stats()
