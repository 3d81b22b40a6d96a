"""Exception types shared across the package."""


class CutLocusError(ValueError):
    """Group logarithm requested outside its injectivity domain."""


class NoConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    Carries the best iterate found so far so the failure is diagnosable
    rather than silent.
    """

    def __init__(self, message, best=None, residual_norm=None):
        super().__init__(message)
        self.best = best
        self.residual_norm = residual_norm


class BiInvariantRequiredError(ValueError):
    """Operation is only valid for metrics flagged bi-invariant."""


class InsufficientSamplesError(ValueError):
    """Trajectory grid is too coarse for the requested finite-difference step."""


class MaxIterationsError(RuntimeError):
    """Descent hit its iteration budget; carries the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NonFiniteStateError(ArithmeticError):
    """Integration produced a non-finite state and the step was rejected."""


class ScenarioParseError(ValueError):
    """Scenario file is not well-formed structured text."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScenarioValidationError(ValueError):
    """Scenario violates an invariant; names the offending field."""

    def __init__(self, message, field=None, line=None):
        prefix = ""
        if field is not None:
            prefix = f"{field}: "
        if line is not None:
            prefix = f"line {line}: " + prefix
        super().__init__(prefix + message)
        self.field = field
        self.line = line
