"""Byzantine-resilient federated policy-gradient training simulator."""

__version__ = "0.1.0"

from . import adversary, aggregators, env, estimators, federation, policy  # noqa: F401
