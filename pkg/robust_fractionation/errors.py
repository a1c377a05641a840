"""
Exception hierarchy for the robust fractionation toolkit.
Validation problems also subclass ValueError so callers can catch them generically.
"""

from typing import Optional


class DroError(Exception):
    """Base class for every error raised by this package."""


# =============================================================================
# Grid / ambiguity validation
# =============================================================================

class NonPositiveStep(DroError, ValueError):
    """Grid step width is zero or negative."""


class NonDivisibleSpan(DroError, ValueError):
    """Grid span is not an integer multiple of the step width."""


class GridTooSmall(DroError, ValueError):
    """Grid has too few points for the indicator encoding."""


class EmptyAmbiguity(DroError, ValueError):
    """The envelope caps cannot hold a probability measure."""


class InvalidMoments(DroError, ValueError):
    """Moment bounds are inconsistent (mu_minus > mu_plus or beta out of range)."""


class UnboundedHeight(DroError, ValueError):
    """A variable indicator height has no finite bound over the polytope."""


class DegenerateQuadratic(DroError, ValueError):
    """The quadratic dual polynomial has no curvature (y5 = 0)."""


# =============================================================================
# Solver / verification
# =============================================================================

class NumericalFailure(DroError):
    """The simplex hit a pivot it could not handle even with Bland's rule."""


class OracleInfeasible(DroError):
    """The atomic primal LP is empty: robustness holds vacuously."""


class SandwichViolation(DroError):
    """Dual objective exceeds the primal oracle value (weak duality broken)."""


class VerificationFailure(DroError):
    """A certificate failed the continuum feasibility check."""


# =============================================================================
# Configuration
# =============================================================================

class ConfigError(DroError, ValueError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """Malformed JSON configuration."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")


class SchemaError(ConfigError):
    """Configuration key is missing, unknown or holds an invalid value."""

    def __init__(self, key: str, message: str = ""):
        self.key = key
        detail = f": {message}" if message else ""
        super().__init__(f"{key}{detail}")


__all__ = [
    "DroError",
    "NonPositiveStep",
    "NonDivisibleSpan",
    "GridTooSmall",
    "EmptyAmbiguity",
    "InvalidMoments",
    "UnboundedHeight",
    "DegenerateQuadratic",
    "NumericalFailure",
    "OracleInfeasible",
    "SandwichViolation",
    "VerificationFailure",
    "ConfigError",
    "ParseError",
    "SchemaError",
]
