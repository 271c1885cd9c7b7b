"""Exception types shared across the package."""


class HmnssError(Exception):
    """Base class for all package errors."""


class DomainError(HmnssError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class NumericalError(HmnssError, ArithmeticError):
    """A computation produced non-finite values."""


class SingularMatrixError(NumericalError):
    pass


class GraphError(HmnssError, ValueError):
    """Malformed or disconnected communication graph."""


class ConfigError(HmnssError, ValueError):
    """Invalid parameters or experiment configuration."""


class PreconditionError(HmnssError, RuntimeError):
    """An operation was called from a state where it does not apply."""


class DivergenceDetected(HmnssError):
    """Raised internally when a trajectory leaves the divergence guard."""


class ZenoGuardTripped(HmnssError):
    """Too many jumps accumulated at a single continuous time."""
