"""Policy classes with closed-form score functions and score-Hessian products.

Each policy is an immutable description of a parametrization; parameters
travel separately as flat vectors. Every class implements the same duck
interface: ``param_dim``, ``check_theta``, ``sample_action``, ``log_prob``,
``score``, ``score_hvp``, ``score_bounds`` and ``uniform_action``. Discrete
policies additionally expose ``action_probs``.

Only parametrizations with analytic first and second score derivatives are
provided; the curvature-corrected estimators need exact Hessian-vector
products and these closed forms avoid any autodiff dependency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, Union

import numpy as np

from .errors import BoundsUnavailableError, ConfigurationError, NumericalDomainError


@dataclass(frozen=True)
class ScoreBounds:
    """Valid norm bound g1 and Lipschitz bound g2 for a policy's score function."""

    g1: float
    g2: float

    def __post_init__(self):
        if self.g1 < 0 or self.g2 < 0:
            raise ConfigurationError("score bounds must be non-negative")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _check_finite_theta(theta: np.ndarray, dim: int):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise ConfigurationError(f"theta must have shape ({dim},), got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ConfigurationError("theta must be finite")
    return theta


@dataclass(frozen=True)
class TabularSoftmaxPolicy:
    """Softmax over one logit per (state, action) pair."""

    num_states: int
    num_actions: int

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ConfigurationError("num_states and num_actions must be >= 1")

    @property
    def param_dim(self) -> int:
        return self.num_states * self.num_actions

    def check_theta(self, theta):
        return _check_finite_theta(theta, self.param_dim)

    def _block(self, state: int) -> slice:
        a = self.num_actions
        return slice(state * a, (state + 1) * a)

    def action_probs(self, theta, state) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return _softmax(theta[self._block(state)])

    def log_prob(self, theta, state, action) -> float:
        p = self.action_probs(theta, state)[action]
        if p == 0.0:
            raise NumericalDomainError("action has zero probability under this policy")
        return float(np.log(p))

    def score(self, theta, state, action) -> np.ndarray:
        probs = self.action_probs(theta, state)
        if probs[action] == 0.0:
            raise NumericalDomainError("action has zero probability under this policy")
        out = np.zeros(self.param_dim)
        block = out[self._block(state)]
        block -= probs
        block[action] += 1.0
        return out

    def score_hvp(self, theta, state, action, u) -> np.ndarray:
        # Hessian of log softmax is -(diag(pi) - pi pi^T) on the state's block,
        # independent of the taken action.
        probs = self.action_probs(theta, state)
        u = np.asarray(u, dtype=float)
        u_block = u[self._block(state)]
        out = np.zeros(self.param_dim)
        out[self._block(state)] = -(probs * u_block - probs * (probs @ u_block))
        return out

    def score_bounds(self) -> ScoreBounds:
        return ScoreBounds(g1=math.sqrt(2.0), g2=1.0)

    def sample_action(self, theta, state, rng) -> int:
        cdf = np.cumsum(self.action_probs(theta, state))
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        return min(i, self.num_actions - 1)

    def make_sampler(self, theta) -> Callable:
        """Per-theta sampler with the softmax table precomputed once."""
        theta = self.check_theta(theta)
        table = np.cumsum(
            np.stack([_softmax(theta[self._block(s)]) for s in range(self.num_states)]),
            axis=1,
        )
        last = self.num_actions - 1

        def sampler(state, rng):
            i = int(np.searchsorted(table[state], rng.random(), side="right"))
            return min(i, last)

        return sampler

    def uniform_action(self, rng) -> int:
        return int(rng.integers(self.num_actions))


@dataclass(frozen=True)
class LinearSoftmaxPolicy:
    """Softmax over per-action linear scores theta_a . phi(state)."""

    features: Callable[[Any], np.ndarray]
    feature_dim: int
    num_actions: int
    feature_bound: Optional[float] = None

    def __post_init__(self):
        if self.feature_dim < 1 or self.num_actions < 1:
            raise ConfigurationError("feature_dim and num_actions must be >= 1")
        if self.feature_bound is not None and self.feature_bound <= 0:
            raise ConfigurationError("feature_bound must be positive when declared")

    @property
    def param_dim(self) -> int:
        return self.num_actions * self.feature_dim

    def check_theta(self, theta):
        return _check_finite_theta(theta, self.param_dim)

    def _phi(self, state) -> np.ndarray:
        phi = np.asarray(self.features(state), dtype=float)
        if phi.shape != (self.feature_dim,):
            raise ConfigurationError(
                f"feature map must return shape ({self.feature_dim},), got {phi.shape}")
        return phi

    def action_probs(self, theta, state) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(self.num_actions, self.feature_dim)
        return _softmax(theta @ self._phi(state))

    def log_prob(self, theta, state, action) -> float:
        p = self.action_probs(theta, state)[action]
        if p == 0.0:
            raise NumericalDomainError("action has zero probability under this policy")
        return float(np.log(p))

    def score(self, theta, state, action) -> np.ndarray:
        probs = self.action_probs(theta, state)
        if probs[action] == 0.0:
            raise NumericalDomainError("action has zero probability under this policy")
        coeff = -probs
        coeff[action] += 1.0
        return np.outer(coeff, self._phi(state)).ravel()

    def score_hvp(self, theta, state, action, u) -> np.ndarray:
        probs = self.action_probs(theta, state)
        phi = self._phi(state)
        u = np.asarray(u, dtype=float).reshape(self.num_actions, self.feature_dim)
        z = u @ phi
        coeff = -(probs * z - probs * (probs @ z))
        return np.outer(coeff, phi).ravel()

    def score_bounds(self) -> ScoreBounds:
        if self.feature_bound is None:
            raise BoundsUnavailableError("no feature-norm bound declared for this policy")
        b = self.feature_bound
        return ScoreBounds(g1=math.sqrt(2.0) * b, g2=b * b)

    def sample_action(self, theta, state, rng) -> int:
        cdf = np.cumsum(self.action_probs(theta, state))
        i = int(np.searchsorted(cdf, rng.random(), side="right"))
        return min(i, self.num_actions - 1)

    def make_sampler(self, theta) -> Callable:
        theta = self.check_theta(theta)
        if self.num_actions == 2:
            # two-action case reduces to a single sigmoid on the logit gap;
            # keeps the generic inverse-CDF orientation (low action first)
            w = theta.reshape(2, self.feature_dim)
            diff = w[1] - w[0]
            features = self.features

            def sampler(state, rng):
                gap = float(diff @ np.asarray(features(state), dtype=float))
                p0 = 1.0 / (1.0 + math.exp(gap)) if gap < 700 else 0.0
                return 0 if rng.random() < p0 else 1

            return sampler
        return lambda state, rng: self.sample_action(theta, state, rng)

    def uniform_action(self, rng) -> int:
        return int(rng.integers(self.num_actions))


@dataclass(frozen=True)
class GaussianLinearPolicy:
    """Gaussian action with a clipped linear mean and fixed standard deviation.

    The mean ``theta . phi(state)`` is clipped to ``[-action_clip, action_clip]``
    and sampled actions are clipped to the same interval, which keeps the
    score norm bounded by ``2 * action_clip * feature_bound / std^2``. Where
    the mean clip is active the score (and its Hessian) is zero.
    """

    features: Callable[[Any], np.ndarray]
    feature_dim: int
    std: float
    action_clip: float
    feature_bound: Optional[float] = None

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        if self.std <= 0 or self.action_clip <= 0:
            raise ConfigurationError("std and action_clip must be positive")
        if self.feature_bound is not None and self.feature_bound <= 0:
            raise ConfigurationError("feature_bound must be positive when declared")

    @property
    def param_dim(self) -> int:
        return self.feature_dim

    def check_theta(self, theta):
        return _check_finite_theta(theta, self.param_dim)

    def _phi(self, state) -> np.ndarray:
        phi = np.asarray(self.features(state), dtype=float)
        if phi.shape != (self.feature_dim,):
            raise ConfigurationError(
                f"feature map must return shape ({self.feature_dim},), got {phi.shape}")
        return phi

    def action_stats(self, theta, state):
        """Clipped mean and fixed std of the action distribution."""
        theta = np.asarray(theta, dtype=float)
        raw = float(theta @ self._phi(state))
        c = self.action_clip
        return float(np.clip(raw, -c, c)), self.std

    def _raw_mean(self, theta, state) -> float:
        return float(np.asarray(theta, dtype=float) @ self._phi(state))

    def log_prob(self, theta, state, action) -> float:
        mean, std = self.action_stats(theta, state)
        z = (float(action) - mean) / std
        return -0.5 * z * z - math.log(std * math.sqrt(2.0 * math.pi))

    def score(self, theta, state, action) -> np.ndarray:
        raw = self._raw_mean(theta, state)
        if abs(raw) >= self.action_clip:
            return np.zeros(self.param_dim)
        return ((float(action) - raw) / self.std**2) * self._phi(state)

    def score_hvp(self, theta, state, action, u) -> np.ndarray:
        raw = self._raw_mean(theta, state)
        if abs(raw) >= self.action_clip:
            return np.zeros(self.param_dim)
        phi = self._phi(state)
        u = np.asarray(u, dtype=float)
        return -(float(phi @ u) / self.std**2) * phi

    def score_bounds(self) -> ScoreBounds:
        if self.feature_bound is None:
            raise BoundsUnavailableError("no feature-norm bound declared for this policy")
        b = self.feature_bound
        return ScoreBounds(
            g1=2.0 * self.action_clip * b / self.std**2,
            g2=b * b / self.std**2,
        )

    def sample_action(self, theta, state, rng) -> float:
        mean, std = self.action_stats(theta, state)
        a = mean + std * rng.standard_normal()
        return float(np.clip(a, -self.action_clip, self.action_clip))

    def make_sampler(self, theta) -> Callable:
        theta = self.check_theta(theta)
        return lambda state, rng: self.sample_action(theta, state, rng)

    def uniform_action(self, rng) -> float:
        return float(rng.uniform(-self.action_clip, self.action_clip))


Policy = Union[TabularSoftmaxPolicy, LinearSoftmaxPolicy, GaussianLinearPolicy]


# Named feature maps so configs can refer to them by string.

_CARTPOLE_SCALES = np.array([2.4, 3.0, 0.2095, 3.0])


def _cartpole_norm(state) -> np.ndarray:
    return np.asarray(state, dtype=float) / _CARTPOLE_SCALES


def _pointmass_tanh(state) -> np.ndarray:
    return np.array([math.tanh(float(state)), 1.0])


FEATURE_MAPS: dict = {
    # name -> (callable, feature_dim, declared norm bound or None)
    "cartpole-norm": (_cartpole_norm, 4, None),
    "pointmass-tanh": (_pointmass_tanh, 2, math.sqrt(2.0)),
}


def feature_map(name: str):
    """Look up a registered feature map by name."""
    try:
        return FEATURE_MAPS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown feature map {name!r}; known: {sorted(FEATURE_MAPS)}") from None
