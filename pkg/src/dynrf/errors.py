"""Exception taxonomy shared across the package.

ConfigError maps to CLI exit code 2, NumericsError (and subclasses) to 3,
I/O problems surface as OSError and map to 4.
"""


class ConfigError(ValueError):
    """Invalid configuration or input schema violation."""


class NumericsError(RuntimeError):
    """A numerical stage failed (integration, quadrature, fit)."""


class IntegrationError(NumericsError):
    """Adaptive stepper could not meet tolerances."""


class InvariantViolation(NumericsError):
    """A propagated state drifted past its physical invariants."""


class QuadratureError(NumericsError):
    """Adaptive quadrature failed to converge."""
