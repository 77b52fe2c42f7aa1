"""Exception hierarchy shared by all spexact modules."""

from __future__ import annotations


class SpexactError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(SpexactError, ValueError):
    """A parameter lies outside its admissible range."""


class OutOfRange(InvalidParameter):
    pass


class EmptySamples(SpexactError, ValueError):
    pass


class EmptySet(SpexactError, ValueError):
    pass


class NonFiniteEvaluation(SpexactError, ArithmeticError):
    """A potential evaluator returned inf/nan at ``point``."""

    def __init__(self, point, message: str | None = None):
        self.point = point
        super().__init__(message or f"non-finite potential value at {point!r}")


class NonFiniteCoefficient(NonFiniteEvaluation):
    pass


class StepSizeUnderflow(SpexactError, ArithmeticError):
    """The adaptive integrator could not meet the tolerance with a usable step."""

    def __init__(self, point: float):
        self.point = point
        super().__init__(f"step size underflow near x = {point:.6g}")


class NotRadial(SpexactError, ValueError):
    pass


class ZeroOnContour(SpexactError, ArithmeticError):
    """The analytic function is (numerically) zero on the contour."""

    def __init__(self, point: complex, value: float):
        self.point = point
        self.value = value
        super().__init__(f"|w| = {value:.3e} below clearance at lambda = {point:.8g}")


class PhaseResolutionExceeded(SpexactError, ArithmeticError):
    pass


class NonConvergence(SpexactError, ArithmeticError):
    def __init__(self, box, message: str | None = None):
        self.box = box
        super().__init__(message or f"root polishing did not converge in box {box}")


class NotAnEigenvalue(SpexactError, ValueError):
    pass


class MatchFailure(SpexactError, ArithmeticError):
    pass


class TooShort(SpexactError, ValueError):
    pass


class InsufficientData(SpexactError, ValueError):
    pass


class MeshTooCoarse(SpexactError, ValueError):
    pass


class SiteOffMesh(SpexactError, ValueError):
    pass


class PivotBreakdown(SpexactError, ArithmeticError):
    pass


class IterationCapExceeded(SpexactError, ArithmeticError):
    def __init__(self, estimate: float, iterations: int):
        self.estimate = estimate
        self.iterations = iterations
        super().__init__(f"no convergence after {iterations} iterations (estimate {estimate:.6g})")


class WindowNotCovered(SpexactError, ValueError):
    pass


class LMaxExceeded(SpexactError, ArithmeticError):
    pass


class UnknownTrajectory(SpexactError, KeyError):
    pass


class ConfigError(SpexactError, ValueError):
    pass
