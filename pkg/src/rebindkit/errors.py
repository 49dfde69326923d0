"""Exception hierarchy.

Two families map onto the CLI exit codes: :class:`ValidationError` (bad input,
exit code 2) and :class:`NumericalError` (a computation that cannot be
completed, exit code 3).
"""


class RebindError(Exception):
    """Base class for all package errors."""


class ValidationError(RebindError, ValueError):
    pass


class NumericalError(RebindError, ArithmeticError):
    pass


# markov-core
class NonUniqueStationary(NumericalError):
    pass


class NonPositive(NumericalError):
    pass


class MatrixOverflow(NumericalError):
    pass


class NoPrincipalLog(NumericalError):
    pass


class NotGeneratorLike(NumericalError):
    pass


# schur-tools
class NoConvergence(NumericalError):
    pass


class SwapIllConditioned(NumericalError):
    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class BlockSplit(ValidationError):
    pass


class GapTooSmall(NumericalError):
    pass


# genpcca
class DegenerateVertices(NumericalError):
    pass


class Infeasible(NumericalError):
    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class SamplingExhausted(NumericalError):
    pass


# projection
class SingularOverlap(NumericalError):
    pass


class NonPositiveDeterminant(NumericalError):
    pass


# rebind-min
class ComplexUnderReversible(ValidationError):
    pass


class NoFeasibleStart(NumericalError):
    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual
