"""Exception types shared across the package."""


class FedRpgError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(FedRpgError):
    """Invalid construction arguments or mismatched dimensions."""


class BreakdownPointError(FedRpgError):
    """f >= N/2: no aggregation rule can tolerate that many adversaries."""


class CapacityError(FedRpgError):
    """An exact enumeration would exceed its hard cap."""


class NoGuaranteeError(FedRpgError):
    """No published resilience coefficient exists for the requested rule."""


class UnsupportedOracleError(FedRpgError):
    """An exact oracle was asked about a non-tabular environment."""


class BoundsUnavailableError(FedRpgError):
    """Score-norm bounds require a feature-norm bound that was not declared."""


class NumericalDomainError(FedRpgError):
    """A quantity left the numerically representable domain."""


class AttackMisuseError(FedRpgError):
    """An attack was applied at the wrong stage of the pipeline."""


class RunAbortError(FedRpgError):
    """Training had to stop; carries a diagnostic payload."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
