"""Exception types shared across the package."""


class ErmLabError(Exception):
    """Base class for all errors raised by ermlab."""


class DimensionMismatch(ErmLabError, ValueError):
    def __init__(self, expected, got, what="vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"{what} has dimension {got}, expected {expected}")


class NonConvergence(ErmLabError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, iterations, residual, solver="solver"):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"{solver} did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class NoConvergence(NonConvergence):
    """Raised by the fixed-point search when ``max_iter`` is exhausted."""

    def __init__(self, max_iter, last_residual):
        super().__init__(max_iter, last_residual, solver="fixed-point iteration")


class UnboundedClass(ErmLabError, ValueError):
    pass


class EvaluationUnavailable(ErmLabError, ValueError):
    """The class is only defined at the design points."""


class InterpolatorSamplingUnavailable(ErmLabError, ValueError):
    pass


class NotAMember(ErmLabError, ValueError):
    def __init__(self, violation, tol):
        self.violation = violation
        super().__init__(f"candidate violates the class by {violation:.3e} > tol {tol:.1e}")


class NoCrossing(ErmLabError, ValueError):
    pass


class AsymmetricNoise(ErmLabError, ValueError):
    pass


class FieldTooLarge(ErmLabError, ValueError):
    pass


class NonPositiveValue(ErmLabError, ValueError):
    pass


class ConfigInvalid(ErmLabError, ValueError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid config field {field!r}: {reason}")


class SolverFailure(ErmLabError, RuntimeError):
    """Too many replicates failed inside a Monte Carlo run."""

    def __init__(self, failed, total, threshold=0.01):
        self.failed = failed
        self.total = total
        super().__init__(
            f"{failed} of {total} replicates failed (threshold {threshold:.0%})"
        )


class IoFailure(ErmLabError, OSError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"I/O failure at {path}: {reason}")


__all__ = [
    "ErmLabError",
    "DimensionMismatch",
    "NonConvergence",
    "NoConvergence",
    "UnboundedClass",
    "EvaluationUnavailable",
    "InterpolatorSamplingUnavailable",
    "NotAMember",
    "NoCrossing",
    "AsymmetricNoise",
    "FieldTooLarge",
    "NonPositiveValue",
    "ConfigInvalid",
    "SolverFailure",
    "IoFailure",
]
