"""
Exception hierarchy for quasarbench.

Every error raised on purpose by the library derives from QuasarBenchError so
the CLI can translate it into its exit-code contract.
"""

from typing import Optional, Sequence


class QuasarBenchError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigurationError(QuasarBenchError):
    """Inconsistent or invalid configuration (bad rule parameter, mismatched bound)."""


class DomainError(QuasarBenchError):
    """Input outside the mathematical domain of an operation (e.g. log of a nonpositive value)."""


class EvaluationError(QuasarBenchError):
    """An objective produced a non-finite value or gradient."""


class DeterminismError(QuasarBenchError):
    """A stream position was reused within a run."""


class CertificationError(QuasarBenchError):
    """The objective violates the structural inequality somewhere in the box."""

    exit_code = 4

    def __init__(self, message: str, witness: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.witness = list(witness) if witness is not None else None

    def __reduce__(self):
        return (self.__class__, (str(self), self.witness))


class RegimeError(QuasarBenchError):
    """A schedule or bound was requested outside the regime where it is valid."""

    exit_code = 3

    def __init__(self, message: str, minimal_T: Optional[int] = None):
        super().__init__(message)
        self.minimal_T = minimal_T

    def __reduce__(self):
        return (self.__class__, (str(self), self.minimal_T))


class DivergenceError(QuasarBenchError):
    """An iterate became non-finite or left the divergence radius."""

    exit_code = 2

    def __init__(self, message: str, step: int, last_point: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.step = step
        self.last_point = list(last_point) if last_point is not None else None

    def __reduce__(self):
        return (self.__class__, (str(self), self.step, self.last_point))


class StageFailure(QuasarBenchError):
    """Stage one of a two-phase method exhausted its budget without reaching epsilon1."""

    exit_code = 2


class BudgetExhausted(QuasarBenchError):
    """An empirical complexity search reached its cap without meeting the target."""

    def __init__(self, message: str, cap: int):
        super().__init__(message)
        self.cap = cap

    def __reduce__(self):
        return (self.__class__, (str(self), self.cap))
