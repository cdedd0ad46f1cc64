"""Exception hierarchy shared by all engine modules."""


class MpsError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(MpsError, ValueError):
    """Tensor extents do not agree."""


class InvalidInputError(MpsError, ValueError):
    """Input is structurally valid but numerically unusable (zero vector, zero norm, ...)."""


class InvalidGaugeError(MpsError, ValueError):
    """A gauge matrix is singular or has the wrong boundary form."""


class FactorizationError(MpsError, ArithmeticError):
    """A QR/SVD kernel failed or produced non-finite output."""


class StalenessError(MpsError, RuntimeError):
    """An environment block was used while not current with respect to the state."""


class SingularPointError(MpsError, ValueError):
    """The MPS sits at a rank-deficient point where the tangent space is ill-defined."""


class SizeGuardError(MpsError, ValueError):
    """A dense oracle was asked for more amplitudes than the configured guard allows."""


class HermiticityError(MpsError, ValueError):
    """A matrix expected to be Hermitian failed the audit."""


class FitFailureError(MpsError, RuntimeError):
    """No exponential sum within the term ceiling reached the requested accuracy."""

    def __init__(self, message, best_error):
        super().__init__(message)
        self.best_error = best_error


class ConfigError(MpsError, ValueError):
    """Invalid experiment or integrator configuration."""


class NumericalFailure(MpsError, ArithmeticError):
    """Non-finite energy or norm encountered during evolution."""
