"""Stochastic policy-gradient estimators and exact tabular oracles.

Conventions shared by every estimator here:

* A recorded trajectory of length L <= H contributes action indices
  t = 0 .. L-1; steps past an early termination count as zero reward and
  zero score, so all sums simply stop at L.
* The reward-to-go weight of step t is ``sum_{h>=t} gamma^h r_h`` with the
  discount anchored at the episode start (absolute in h, not relative to t).
* Summation order is fixed ascending in t so repeated runs are
  bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import TabularMdp, Trajectory, _policy_matrix
from .errors import ConfigurationError, UnsupportedOracleError
from .policy import LinearSoftmaxPolicy, ScoreBounds, TabularSoftmaxPolicy


@dataclass(frozen=True)
class TruncationSpec:
    """Finite-horizon truncation: roll out H steps, discount by gamma."""

    horizon: int
    discount: float

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError("discount must lie in (0, 1)")


def _reward_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Suffix sums of gamma^h * r_h, indexed by the starting step t."""
    length = len(rewards)
    rtg = np.zeros(length)
    discs = np.empty(length)
    disc = 1.0
    for t in range(length):
        discs[t] = disc
        disc *= gamma
    acc = 0.0
    for t in range(length - 1, -1, -1):
        acc += discs[t] * float(rewards[t])
        rtg[t] = acc
    return rtg


def _traj_arrays(traj: Trajectory):
    length = len(traj)
    states = np.fromiter(traj.states, dtype=np.int64, count=length)
    actions = np.fromiter(traj.actions, dtype=np.int64, count=length)
    return states, actions


def _linear_step_tables(traj: Trajectory, policy: LinearSoftmaxPolicy, theta):
    """Per-step features, probabilities and score coefficients, stacked (L, .)."""
    theta_mat = np.asarray(theta, dtype=float).reshape(policy.num_actions,
                                                       policy.feature_dim)
    phis = np.stack([policy._phi(s) for s in traj.states])
    logits = phis @ theta_mat.T
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    coeff = -probs.copy()
    coeff[np.arange(len(traj)), np.fromiter(traj.actions, dtype=np.int64)] += 1.0
    return phis, probs, coeff


def gpomdp(traj: Trajectory, policy, theta, gamma: float) -> np.ndarray:
    """Cumulative-score gradient estimate: sum_h (sum_{t<=h} score_t) gamma^h r_h.

    Tabular-softmax trajectories take a vectorized path; both paths are
    checked against each other and against ``phi_gradient``.
    """
    if isinstance(policy, TabularSoftmaxPolicy) and len(traj) > 0:
        from .tabular_fast import gpomdp_batch, policy_matrices
        states, actions = _traj_arrays(traj)
        probs = policy_matrices(policy, np.asarray(theta, dtype=float))
        return gpomdp_batch(policy, probs, states[None, :], actions[None, :],
                            np.asarray(traj.rewards)[None, :], gamma)[0]
    if isinstance(policy, LinearSoftmaxPolicy) and len(traj) > 0:
        phis, _, coeff = _linear_step_tables(traj, policy, theta)
        rtg = _reward_to_go(traj.rewards, gamma)
        return ((coeff * rtg[:, None]).T @ phis).ravel()
    return _gpomdp_loop(traj, policy, theta, gamma)


def _gpomdp_loop(traj: Trajectory, policy, theta, gamma: float) -> np.ndarray:
    out = np.zeros(policy.param_dim)
    cum = np.zeros(policy.param_dim)
    disc = 1.0
    for state, action, reward in zip(traj.states, traj.actions, traj.rewards):
        cum += policy.score(theta, state, action)
        out += (disc * float(reward)) * cum
        disc *= gamma
    return out


def phi_gradient(traj: Trajectory, policy, theta, gamma: float) -> np.ndarray:
    """Reward-to-go form sum_t rtg_t * score_t; equals gpomdp up to reassociation."""
    rtg = _reward_to_go(traj.rewards, gamma)
    out = np.zeros(policy.param_dim)
    for t, (state, action) in enumerate(zip(traj.states, traj.actions)):
        out += rtg[t] * policy.score(theta, state, action)
    return out


def hessian_correction(traj: Trajectory, policy, theta, gamma: float, u) -> np.ndarray:
    """Curvature correction B(traj, theta) @ u without materializing the matrix.

    The operator splits as grad_Phi * <total score, u> plus the contraction
    of the per-step log-policy Hessians with u, each weighted by its
    reward-to-go.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (policy.param_dim,):
        raise ConfigurationError(f"u must have shape ({policy.param_dim},), got {u.shape}")
    if isinstance(policy, TabularSoftmaxPolicy) and len(traj) > 0:
        from .tabular_fast import correction_batch, policy_matrices
        states, actions = _traj_arrays(traj)
        probs = policy_matrices(policy, np.asarray(theta, dtype=float))
        return correction_batch(policy, probs, states[None, :], actions[None, :],
                                np.asarray(traj.rewards)[None, :], gamma, u)[0]
    if isinstance(policy, LinearSoftmaxPolicy) and len(traj) > 0:
        phis, probs, coeff = _linear_step_tables(traj, policy, theta)
        rtg = _reward_to_go(traj.rewards, gamma)
        u_mat = u.reshape(policy.num_actions, policy.feature_dim)
        z = phis @ u_mat.T
        hvp_coeff = -(probs * z - probs * (probs * z).sum(axis=1, keepdims=True))
        grad_phi = ((coeff * rtg[:, None]).T @ phis).ravel()
        total_score = (coeff.T @ phis).ravel()
        hvp_sum = ((hvp_coeff * rtg[:, None]).T @ phis).ravel()
        return grad_phi * float(total_score @ u) + hvp_sum
    rtg = _reward_to_go(traj.rewards, gamma)
    grad_phi = np.zeros(policy.param_dim)
    total_score = np.zeros(policy.param_dim)
    hvp_sum = np.zeros(policy.param_dim)
    for t, (state, action) in enumerate(zip(traj.states, traj.actions)):
        s = policy.score(theta, state, action)
        total_score += s
        grad_phi += rtg[t] * s
        hvp_sum += rtg[t] * policy.score_hvp(theta, state, action, u)
    return grad_phi * float(total_score @ u) + hvp_sum


def exact_grad(mdp, policy, theta, trunc: TruncationSpec) -> np.ndarray:
    """Exact finite-horizon policy gradient on a tabular MDP.

    Enumerates the state occupancy forward and the remaining-steps action
    values backward, then contracts the resulting state-action weights with
    the analytic scores. Exact up to floating-point rounding; no sampling.
    """
    if not isinstance(mdp, TabularMdp):
        raise UnsupportedOracleError("exact_grad requires a tabular MDP")
    horizon, gamma = trunc.horizon, trunc.discount
    pi = _policy_matrix(policy, theta, mdp.num_states)

    # q_by_remaining[k] is the expected discounted (from now) return of k
    # more steps after taking (s, a); k runs 1..H.
    q_by_remaining = [None] * (horizon + 1)
    v = np.zeros(mdp.num_states)
    for k in range(1, horizon + 1):
        q = mdp.reward + gamma * np.einsum("sat,t->sa", mdp.transition, v)
        q_by_remaining[k] = q
        v = np.einsum("sa,sa->s", pi, q)

    p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    weights = np.zeros((mdp.num_states, mdp.num_actions))
    dist = mdp.initial_dist.copy()
    disc = 1.0
    for t in range(horizon):
        weights += disc * dist[:, None] * pi * q_by_remaining[horizon - t]
        dist = dist @ p_pi
        disc *= gamma

    grad = np.zeros(policy.param_dim)
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            w = weights[s, a]
            if w != 0.0:
                grad += w * policy.score(theta, s, a)
    return grad


# Norm envelopes implied by a policy's score bounds; used by diagnostics to
# check every sampled estimate.

def gradient_norm_bound(bounds: ScoreBounds, reward_bound: float, gamma: float) -> float:
    return bounds.g1 * reward_bound / (1.0 - gamma) ** 2


def smoothness_bound(bounds: ScoreBounds, reward_bound: float, gamma: float) -> float:
    return reward_bound * (bounds.g1**2 + bounds.g2) / (1.0 - gamma) ** 2


def correction_norm_bound(bounds: ScoreBounds, reward_bound: float, gamma: float) -> float:
    smooth = smoothness_bound(bounds, reward_bound, gamma)
    return (bounds.g2 * bounds.g1**2 * reward_bound + smooth * reward_bound) / (1.0 - gamma) ** 2
