"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ParameterError(ValueError):
    """Distribution or model parameters outside their legal range."""


class IntegrationError(RuntimeError):
    """Numerical quadrature failed to reach the requested tolerance."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its stopping rule."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConversionError(ConvergenceError):
    """Trapezoidal-to-Beta fuzzy number conversion did not converge."""


class ChainFailure(RuntimeError):
    """A Gibbs chain aborted because its approximations kept failing.

    The ``payload`` dict carries the diagnostic state at abort time.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}
