"""Markov decision process environments and trajectory sampling.

All environments are immutable after construction and expose pure
``initial_state`` / ``step`` methods that take an explicit random
generator, so any number of samplers may run concurrently without
shared mutable state.

Sampling consumes randomness in a documented order so seeded runs can
be replayed by hand: one draw for the initial state, then per step one
draw for the action followed by the draws the environment itself needs
for the transition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, UnsupportedOracleError

_PROB_TOL = 1e-12


def _categorical(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a cumulative probability vector."""
    i = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(i, len(cdf) - 1)


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with explicit transition tensor, rewards and start distribution.

    ``transition[s, a, s']`` is the probability of landing in ``s'`` after
    taking action ``a`` in state ``s``. Rows must be stochastic to 1e-12,
    the initial distribution must sum to one, and every reward must respect
    ``reward_bound`` in absolute value.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float
    reward_bound: Optional[float] = None

    # trajectory length is capped only by the caller's horizon
    max_steps = None

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        rho = np.asarray(self.initial_dist, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ConfigurationError(f"transition tensor must be (S, A, S), got {p.shape}")
        s, a, _ = p.shape
        if r.shape != (s, a):
            raise ConfigurationError(f"reward must be ({s}, {a}), got {r.shape}")
        if rho.shape != (s,):
            raise ConfigurationError(f"initial_dist must be ({s},), got {rho.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > _PROB_TOL):
            raise ConfigurationError("each transition row P[s, a, :] must sum to 1")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > _PROB_TOL:
            raise ConfigurationError("initial distribution must sum to 1")
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError("discount must lie in (0, 1)")
        bound = self.reward_bound
        if bound is None:
            bound = float(np.max(np.abs(r))) if r.size else 0.0
        elif np.any(np.abs(r) > bound + _PROB_TOL):
            raise ConfigurationError("|reward| exceeds the declared reward bound")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "reward_bound", float(bound))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def _transition_cdf(self) -> np.ndarray:
        return np.cumsum(self.transition, axis=2)

    @cached_property
    def _initial_cdf(self) -> np.ndarray:
        return np.cumsum(self.initial_dist)

    def initial_state(self, rng: np.random.Generator) -> int:
        return _categorical(self._initial_cdf, rng)

    def step(self, state: int, action: int, rng: np.random.Generator):
        nxt = _categorical(self._transition_cdf[state, action], rng)
        return nxt, float(self.reward[state, action]), False


@dataclass(frozen=True)
class CartPoleEnv:
    """Pole balancing on a cart, with the published CartPole-v1 constants.

    Dynamics are integrated with one explicit Euler step per action:
    positions advance with the old velocities, then velocities advance
    with the computed accelerations. The episode ends when the cart
    leaves ``position_limit``, the pole exceeds ``angle_limit`` or
    ``max_steps`` actions have been taken; every step yields reward 1.
    """

    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_magnitude: float = 10.0
    integration_step: float = 0.02
    angle_limit: float = 12.0 * math.pi / 180.0
    position_limit: float = 2.4
    max_steps: int = 500

    reward_bound = 1.0
    num_actions = 2

    def __post_init__(self):
        physical = (self.gravity, self.cart_mass, self.pole_mass,
                    self.pole_half_length, self.force_magnitude, self.integration_step)
        if any(v <= 0 for v in physical):
            raise ConfigurationError("all cart-pole physical constants must be positive")
        if not 0.0 < self.angle_limit < math.pi / 2:
            raise ConfigurationError("angle_limit must lie in (0, pi/2)")
        if self.position_limit <= 0 or self.max_steps < 1:
            raise ConfigurationError("position_limit and max_steps must be positive")

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-0.05, 0.05, size=4)

    def step(self, state: np.ndarray, action: int, rng: np.random.Generator):
        x, x_dot, theta, theta_dot = state
        force = self.force_magnitude if action == 1 else -self.force_magnitude
        total_mass = self.cart_mass + self.pole_mass
        polemass_length = self.pole_mass * self.pole_half_length
        sin_t = math.sin(theta)
        cos_t = math.cos(theta)
        temp = (force + polemass_length * theta_dot**2 * sin_t) / total_mass
        theta_acc = (self.gravity * sin_t - cos_t * temp) / (
            self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos_t**2 / total_mass)
        )
        x_acc = temp - polemass_length * theta_acc * cos_t / total_mass
        tau = self.integration_step
        nxt = np.array([
            x + tau * x_dot,
            x_dot + tau * x_acc,
            theta + tau * theta_dot,
            theta_dot + tau * theta_acc,
        ])
        done = bool(abs(nxt[0]) > self.position_limit or abs(nxt[2]) > self.angle_limit)
        return nxt, 1.0, done


@dataclass(frozen=True)
class PointMass1D:
    """Minimal continuous-control task: drive a noisy 1-D point to a target.

    The action (clipped to ``[-action_clip, action_clip]``) shifts the
    position, gaussian noise is added, and the reward ``1/(1 + (x - target)^2)``
    favours positions near the target. Bounded rewards keep the gradient
    oracles' norm envelopes finite.
    """

    target: float = 1.0
    action_clip: float = 1.0
    noise_std: float = 0.05
    max_steps: int = 20

    reward_bound = 1.0

    def __post_init__(self):
        if self.action_clip <= 0:
            raise ConfigurationError("action_clip must be positive")
        if self.noise_std < 0 or self.max_steps < 1:
            raise ConfigurationError("noise_std must be >= 0 and max_steps >= 1")

    def initial_state(self, rng: np.random.Generator) -> float:
        return 0.0

    def step(self, state: float, action: float, rng: np.random.Generator):
        a = float(np.clip(action, -self.action_clip, self.action_clip))
        nxt = state + a
        if self.noise_std > 0:
            nxt += self.noise_std * rng.standard_normal()
        reward = 1.0 / (1.0 + (nxt - self.target) ** 2)
        return nxt, reward, False


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered (state, action, reward) record of at most ``horizon_cap`` steps."""

    states: tuple
    actions: tuple
    rewards: np.ndarray
    horizon_cap: int
    terminated_early: bool

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def steps(self):
        return list(zip(self.states, self.actions, self.rewards))


def sample_trajectory(env, policy, theta, horizon, rng,
                      action_override: Optional[Callable] = None) -> Trajectory:
    """Roll out ``policy`` (or an override sampler) in ``env`` for up to ``horizon`` steps.

    ``action_override``, when given, replaces the policy's action draw
    (same ``(state, rng) -> action`` signature); environment dynamics and
    rewards are untouched. Sampling stops at the horizon, the environment's
    own step cap, or a terminal transition, whichever comes first.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    policy.check_theta(theta)
    cap = horizon if env.max_steps is None else min(horizon, env.max_steps)
    sampler = action_override if action_override is not None else policy.make_sampler(theta)
    states, actions, rewards = [], [], []
    state = env.initial_state(rng)
    terminated = False
    for _ in range(cap):
        action = sampler(state, rng)
        nxt, reward, done = env.step(state, action, rng)
        states.append(state)
        actions.append(action)
        rewards.append(reward)
        state = nxt
        if done:
            terminated = True
            break
    return Trajectory(
        states=tuple(states),
        actions=tuple(actions),
        rewards=np.asarray(rewards, dtype=float),
        horizon_cap=horizon,
        terminated_early=terminated,
    )


def discounted_return(traj: Trajectory, gamma: float) -> float:
    """Sum of gamma^h * r_h over the recorded steps."""
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError("gamma must lie in (0, 1)")
    total = 0.0
    disc = 1.0
    for r in traj.rewards:
        total += disc * float(r)
        disc *= gamma
    return total


def undiscounted_return(traj: Trajectory) -> float:
    return float(np.sum(traj.rewards))


def _policy_matrix(policy, theta, num_states: int) -> np.ndarray:
    """Action-probability matrix pi[s, a] for a discrete policy on integer states."""
    return np.stack([policy.action_probs(theta, s) for s in range(num_states)])


def exact_value(mdp, policy, theta, horizon: Optional[int] = None) -> float:
    """Exact expected discounted return under the policy, on a tabular MDP only.

    With a finite ``horizon`` the state distribution is propagated forward
    H steps (summation ascending in time for bit-reproducibility); with
    ``horizon=None`` the stationary Bellman system is solved directly.
    """
    if not isinstance(mdp, TabularMdp):
        raise UnsupportedOracleError("exact_value requires a tabular MDP")
    pi = _policy_matrix(policy, theta, mdp.num_states)
    r_pi = np.einsum("sa,sa->s", pi, mdp.reward)
    p_pi = np.einsum("sa,sat->st", pi, mdp.transition)
    gamma = mdp.discount
    if horizon is None:
        v = np.linalg.solve(np.eye(mdp.num_states) - gamma * p_pi, r_pi)
        return float(mdp.initial_dist @ v)
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    dist = mdp.initial_dist.copy()
    total = 0.0
    disc = 1.0
    for _ in range(horizon):
        total += disc * float(dist @ r_pi)
        dist = dist @ p_pi
        disc *= gamma
    return total


def optimal_value(mdp: TabularMdp, tol: float = 1e-13, max_iter: int = 10**6) -> float:
    """Optimal expected discounted return, by value iteration to ``tol``."""
    if not isinstance(mdp, TabularMdp):
        raise UnsupportedOracleError("optimal_value requires a tabular MDP")
    gamma = mdp.discount
    v = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        q = mdp.reward + gamma * np.einsum("sat,t->sa", mdp.transition, v)
        v_next = q.max(axis=1)
        if np.max(np.abs(v_next - v)) <= tol:
            v = v_next
            break
        v = v_next
    return float(mdp.initial_dist @ v)


def random_tabular_mdp(num_states: int, num_actions: int, seed,
                       discount: float = 0.9, reward_scale: float = 1.0) -> TabularMdp:
    """Random dense MDP: Dirichlet(1) transition rows, uniform rewards in [-scale, scale]."""
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    reward = rng.uniform(-reward_scale, reward_scale, size=(num_states, num_actions))
    initial = rng.dirichlet(np.ones(num_states))
    return TabularMdp(
        transition=transition,
        reward=reward,
        initial_dist=initial,
        discount=discount,
        reward_bound=reward_scale,
    )
