"""Exception hierarchy shared by all modules."""


class AQPError(Exception):
    """Base class for package errors."""


class DomainError(AQPError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(AQPError, ValueError):
    """Mismatched sizes, alphabets or orbit lengths."""


class StateExhaustedError(AQPError):
    """No photons left in the symmetric state."""


class RenormalizationError(AQPError, ArithmeticError):
    """A numerically zero-probability measurement branch was selected."""


class ResourceError(AQPError):
    """Requested problem size is above an enforced cap."""


class InsufficientDataError(AQPError, ValueError):
    pass


class DegenerateFeatureError(AQPError, ValueError):
    """Cumulant features are undefined for the prior (e.g. uniform)."""


class DeltaUnsupportedError(AQPError, ValueError):
    """A point prior has no density on a grid."""


class OrbitIncompleteError(AQPError):
    """An orbit level failed to reach a finite variance.

    The policies found before the failure are kept on ``partial``.
    """

    def __init__(self, message, partial=()):
        super().__init__(message)
        self.partial = tuple(partial)


class EmptyDatasetError(AQPError, ValueError):
    pass


class ConfigurationError(AQPError, ValueError):
    pass


class StateError(AQPError, ValueError):
    """Density operator violates Hermiticity, trace or positivity."""
