"""Exception hierarchy shared by all modules."""


class EpmfluxError(Exception):
    """Base class for every error raised by the package."""


class NonHermitianInput(EpmfluxError, ValueError):
    pass


class ConvergenceFailure(EpmfluxError, RuntimeError):
    pass


class SingularOperand(EpmfluxError, ValueError):
    pass


class DimensionMismatch(EpmfluxError, ValueError):
    pass


class InvalidState(EpmfluxError, ValueError):
    """Matrix fails Hermiticity, positivity or unit-trace checks."""


class SupportViolation(EpmfluxError, ValueError):
    """A divergence is infinite because of a support mismatch."""


class NonpositivePartitionFunction(EpmfluxError, ValueError):
    pass


class IntegrationUnstable(EpmfluxError, RuntimeError):
    pass


class CompletePositivityViolation(EpmfluxError, ValueError):
    pass


class NoUniqueFixedPoint(EpmfluxError, ValueError):
    pass


class SingularFixedPoint(EpmfluxError, ValueError):
    pass


class NotAFixedPoint(EpmfluxError, ValueError):
    pass


class OptimizationNotConverged(EpmfluxError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularReference(EpmfluxError, ValueError):
    pass


class MarginalsNotThermal(EpmfluxError, ValueError):
    pass


class DecompositionInapplicable(EpmfluxError, ValueError):
    pass


class LabelMismatch(EpmfluxError, ValueError):
    pass


class ConfigError(EpmfluxError, ValueError):
    pass


class AssertionFailure(EpmfluxError, AssertionError):
    pass
