"""Exception types raised across the package."""


class SpeedscaleError(Exception):
    """Base class for package errors."""


class ParameterError(SpeedscaleError, ValueError):
    """Invalid model or algorithm parameter."""


class FeasibilityError(SpeedscaleError, ValueError):
    """Action outside the feasible set U(x) = [0, x]."""


class DomainError(SpeedscaleError, ValueError):
    """Argument outside the domain where a formula is valid."""


class EvaluationError(SpeedscaleError, ValueError):
    """Tabular function evaluated off its lattice or beyond its grid."""


class NumericError(SpeedscaleError, ArithmeticError):
    """A numerical routine failed (non-convergence, divergence, singularity)."""


class DivergenceError(NumericError):
    pass


class SingularityError(NumericError):
    pass


class ConfigError(SpeedscaleError, ValueError):
    """Bad experiment configuration or command-line usage."""
