"""Exception hierarchy shared across the engine.

Validation problems (bad parameters, malformed scenarios) are ValueErrors;
runtime numerical failures (divergence, non-convergence) are RuntimeErrors.
The CLI maps the former to exit code 1 and the latter to exit code 2.
"""


class ParameterError(ValueError):
    """A numeric parameter violates its documented precondition."""


class ConfigurationError(ValueError):
    """Mutually inconsistent configuration values (e.g. window/step mismatch)."""


class ShapeError(ValueError):
    """Dimension or length mismatch between coupled arrays."""


class ValidationError(ValueError):
    """Scenario-level validation failure; carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DivergenceError(RuntimeError):
    """Non-finite state encountered during integration."""

    def __init__(self, message, t=None, variable=None):
        super().__init__(message)
        self.t = t
        self.variable = variable


class InitializationError(RuntimeError):
    """Equilibrium search failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DiagnosticError(RuntimeError):
    """Eigensolver or other diagnostic computation failed."""


class ComparisonError(ValueError):
    """Trace comparison impossible (no overlap, missing variables)."""
