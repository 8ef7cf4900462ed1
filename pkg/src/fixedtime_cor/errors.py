"""Exception hierarchy shared by the synthesis, simulation and CLI layers."""


class CorError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(CorError, ValueError):
    pass


class NotSquare(DimensionMismatch):
    pass


# graph
class NotSpanningTree(CorError):
    pass


class ConstructionFailed(CorError):
    pass


# attacks
class OutOfHorizon(CorError, ValueError):
    pass


class InfeasibleBudget(CorError, ValueError):
    pass


# numerics
class NonPositiveExponent(CorError, ValueError):
    pass


class SingularMatrix(CorError, ArithmeticError):
    pass


class SingularSystem(CorError, ArithmeticError):
    pass


class NoBracket(CorError, ValueError):
    pass


class NonFiniteState(CorError, FloatingPointError):
    """Raised when integration produces NaN/inf; carries the failing time."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


# synthesis
class SynthesisError(CorError):
    pass


class NoSolution(SynthesisError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NotControllable(SynthesisError):
    pass


class RankDeficientB(SynthesisError):
    pass


class InvalidExponents(SynthesisError, ValueError):
    pass


class GainTooSmall(SynthesisError, ValueError):
    pass


class ConditionFailed(SynthesisError):
    pass


class DegenerateRecursion(SynthesisError, ValueError):
    pass


class NotHurwitz(SynthesisError):
    pass


class ParseError(CorError, ValueError):
    """Configuration error; ``path`` addresses the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
