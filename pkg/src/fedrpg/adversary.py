"""Byzantine attack models applied at designated workers.

Two attack families exist: message corruption (random noise, sign flip)
rewrites the update a worker sends, while the random-action attack corrupts
the worker's trajectory sampling and leaves its arithmetic honest. The
server never learns which workers are compromised.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import AttackMisuseError, ConfigurationError


@dataclass(frozen=True)
class NoAttack:
    """Honest behaviour."""


@dataclass(frozen=True)
class RandomNoise:
    """Additive zero-mean gaussian corruption of the outgoing message.

    Either an absolute per-coordinate ``noise_std`` or a ``relative_scale``
    multiplying the norm of the message being corrupted; the relative form
    keeps the attack comparable in size to the honest signal at every stage
    of training.
    """

    noise_std: Optional[float] = None
    relative_scale: Optional[float] = 1.0

    def __post_init__(self):
        if self.noise_std is not None:
            if self.noise_std <= 0:
                raise ConfigurationError("noise_std must be positive")
            object.__setattr__(self, "relative_scale", None)
        elif self.relative_scale is None or self.relative_scale <= 0:
            raise ConfigurationError("either noise_std or relative_scale must be positive")


@dataclass(frozen=True)
class SignFlip:
    """Multiply the outgoing message by a negative factor."""

    factor: float = -1.0

    def __post_init__(self):
        if self.factor >= 0:
            raise ConfigurationError("sign-flip factor must be negative")


@dataclass(frozen=True)
class RandomAction:
    """Sample uniformly random actions during trajectory collection.

    The randomness is stateless and never decays, and the gradient messages
    themselves are computed honestly from the corrupted trajectories.
    """


AttackKind = Union[NoAttack, RandomNoise, SignFlip, RandomAction]


def corrupt_gradient(attack: AttackKind, values: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """Apply a message-corrupting attack to one update vector."""
    values = np.asarray(values, dtype=float)
    if isinstance(attack, RandomNoise):
        std = attack.noise_std
        if std is None:
            std = attack.relative_scale * float(np.linalg.norm(values))
        return values + rng.normal(0.0, std, size=values.shape)
    if isinstance(attack, SignFlip):
        return attack.factor * values
    raise AttackMisuseError(
        f"{type(attack).__name__} does not corrupt messages; it applies elsewhere")


def adversarial_policy_override(attack: AttackKind, policy=None) -> Optional[Callable]:
    """Action sampler replacing the policy during a corrupted worker's rollouts.

    Only the random-action attack overrides sampling; it needs the policy to
    know the action space. All other attacks return ``None``.
    """
    if isinstance(attack, RandomAction):
        if policy is None:
            raise ConfigurationError("the random-action override needs the policy's action space")
        return lambda state, rng: policy.uniform_action(rng)
    return None


@dataclass(frozen=True)
class AgentRole:
    """One worker's identity and (possibly adversarial) behaviour."""

    worker_id: int
    attack: AttackKind = NoAttack()

    @property
    def is_byzantine(self) -> bool:
        return not isinstance(self.attack, NoAttack)


def assign_roles(num_workers: int, num_byzantine: int, attack: AttackKind,
                 byzantine_ids: Optional[List[int]] = None) -> List[AgentRole]:
    """Fix roles for a run: exactly ``num_byzantine`` workers get ``attack``.

    By default the lowest worker ids are compromised; explicit ids override.
    """
    if num_workers < 1:
        raise ConfigurationError("need at least one worker")
    if num_byzantine < 0 or 2 * num_byzantine >= num_workers:
        raise ConfigurationError(
            f"need 0 <= f < N/2, got f={num_byzantine}, N={num_workers}")
    if num_byzantine > 0 and isinstance(attack, NoAttack):
        raise ConfigurationError("byzantine workers need a real attack kind")
    if byzantine_ids is None:
        byzantine_ids = list(range(num_byzantine))
    if len(set(byzantine_ids)) != num_byzantine or \
            any(not 0 <= i < num_workers for i in byzantine_ids):
        raise ConfigurationError("byzantine_ids must be distinct valid worker ids")
    bad = set(byzantine_ids)
    return [AgentRole(worker_id=i, attack=attack if i in bad else NoAttack())
            for i in range(num_workers)]
