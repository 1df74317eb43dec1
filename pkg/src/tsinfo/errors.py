"""Exception types shared across the package."""


class TsInfoError(Exception):
    """Base class for all package errors."""


class ValidationError(TsInfoError, ValueError):
    """An input violates a documented precondition."""


class DivergenceUndefinedError(TsInfoError, ValueError):
    """KL divergence requested where absolute continuity fails."""


class InstanceTooLargeError(TsInfoError, ValueError):
    """A model family would exceed the exact-enumeration size cap."""


class ImpossibleObservationError(TsInfoError):
    """Every model in the posterior support assigns zero probability to an observation."""


class ZeroProbabilityEventError(TsInfoError, ValueError):
    """Conditioning on an event the posterior gives (near) zero probability."""


class InconsistencyError(TsInfoError, ArithmeticError):
    """Two computations that must agree do not; signals a defect."""


class NumericalError(TsInfoError, ArithmeticError):
    """A numerical routine failed (e.g. covariance factorization)."""
