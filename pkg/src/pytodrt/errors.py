"""Exception hierarchy shared by every pytodrt module."""

from __future__ import annotations


class PytodError(Exception):
    """Base class for all errors raised by this package."""


# -- schema loading -------------------------------------------------------


class SchemaIOError(PytodError, OSError):
    pass


class FormatError(PytodError):
    pass


class ValidationError(PytodError):
    pass


class PreconditionError(PytodError, ValueError):
    pass


# -- statement language ---------------------------------------------------


class StatementSyntaxError(PytodError):
    """A program line that does not belong to the statement grammar.

    ``span`` locates the offending token; ``line`` is the 1-based line index
    within a multi-line block (1 for single statements).
    """

    def __init__(self, message, span=None, line=1, text=""):
        super().__init__(message)
        self.message = message
        self.span = span
        self.line = line
        self.text = text

    def __str__(self):
        if self.span is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, col {self.span.column_start}: {self.message}"


# -- execution ------------------------------------------------------------


class ExecError(PytodError):
    """Raised (or collected into an outcome) when a statement cannot execute."""


class UnknownIntent(ExecError):
    def __init__(self, intent):
        super().__init__(f"unknown API {intent!r}")
        self.intent = intent


class UnknownSlot(ExecError):
    def __init__(self, slot, value=None, intent=None):
        super().__init__(f"{intent or 'API'} has no slot {slot!r}")
        self.slot = slot
        self.value = value
        self.intent = intent


class CoercionError(ExecError):
    def __init__(self, feedback, slot=None, value=None):
        super().__init__(feedback)
        self.feedback = feedback
        self.slot = slot
        self.value = value


class InvalidCategoricalValue(CoercionError):
    pass


class NotConfirmable(ExecError):
    pass


class UnboundVariable(ExecError):
    def __init__(self, name):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class WrongKind(ExecError):
    pass


class Rebound(ExecError):
    def __init__(self, name):
        super().__init__(f"variable {name!r} is already bound")
        self.name = name


class ExhaustedResults(ExecError):
    pass


class ReservedRoutine(ExecError):
    pass


class NoActiveApi(ExecError):
    pass


# -- supervisors & backends -----------------------------------------------


class InvalidAnswer(PytodError):
    pass


class BackendError(PytodError):
    pass


class MissingAnswer(BackendError):
    pass


class ScenarioExhausted(BackendError):
    pass


# -- evaluation -----------------------------------------------------------


class LengthMismatch(PytodError, ValueError):
    pass


class OrderError(PytodError, ValueError):
    pass


class MissingPredictions(PytodError):
    pass
