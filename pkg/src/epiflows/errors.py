"""Exception hierarchy.

ValidationError subclasses signal bad inputs (CLI exit code 2);
ComputationError subclasses signal numerical failures on valid inputs
(CLI exit code 1).
"""


class EpiflowsError(Exception):
    pass


class ValidationError(EpiflowsError):
    pass


class ComputationError(EpiflowsError):
    pass


# --- input validation ---

class DimensionMismatch(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class BalanceViolation(ValidationError):
    pass


class InvalidState(ValidationError):
    pass


class WindowLargerThanSchedule(ValidationError):
    pass


class PerturbationUnbalanced(ValidationError):
    pass


class NegativeRate(ValidationError):
    pass


class ScheduleMismatch(ValidationError):
    pass


class NotDiagonal(ValidationError):
    pass


class NegativeEntryInM(ValidationError):
    pass


class NotIrreducible(ValidationError):
    pass


class EmptyInfectedSet(ValidationError):
    pass


class NoOverlap(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class NonPositivePopulation(ValidationError):
    pass


class UnknownNode(ValidationError):
    pass


class CasesExceedPopulation(ValidationError):
    pass


class EmptySchedule(ValidationError):
    pass


# --- computational failures ---

class NoConvergence(ComputationError):
    """Iteration cap reached. May carry the best iterate seen."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class StepTooLarge(ComputationError):
    pass


class StateLeftSimplex(ComputationError):
    pass


class EigensolverFailure(ComputationError):
    pass


class InsufficientArrivals(ComputationError):
    pass


class DegenerateFit(ComputationError):
    pass


class DegenerateSpectrum(ComputationError):
    pass
