"""Exception types shared across the package."""


class EpiKalmanError(Exception):
    """Base class for all package-specific errors."""


class DomainError(EpiKalmanError, ValueError):
    """A state or parameter lies outside its admissible domain."""


class ConfigError(EpiKalmanError, ValueError):
    """An invalid or inconsistent run configuration."""


class SimulationError(EpiKalmanError, RuntimeError):
    """A stochastic simulation could not be completed (e.g. event cap hit)."""


class NumericsError(EpiKalmanError, ArithmeticError):
    """A numerical routine produced an unusable result."""


class BlowUpError(NumericsError):
    """An ODE solution left the admissible region."""


class SingularMatrixError(NumericsError):
    """A matrix required to be invertible is singular or too ill-conditioned."""


class DegenerateDataError(EpiKalmanError, ValueError):
    """Input data cannot support the requested operation."""
