"""Exception hierarchy.

Everything the CLI maps to exit code 2 derives from :class:`InputError`;
:class:`InvariantViolation` maps to exit code 3.
"""

from __future__ import annotations

from typing import Optional


class LogCoverageError(Exception):
    """Base class. Carries optional file/line context for reporting."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def with_context(self, path: Optional[str] = None, line: Optional[int] = None) -> "LogCoverageError":
        if path is not None:
            self.path = path
        if line is not None:
            self.line = line
        return self

    def __str__(self) -> str:
        where = ""
        if self.path is not None:
            where = self.path
            if self.line is not None:
                where += f":{self.line}"
            where += ": "
        return f"{where}{type(self).__name__}: {self.message}"


class InputError(LogCoverageError):
    pass


class InvariantViolation(LogCoverageError):
    pass


# telemetry
class IoFailure(InputError):
    pass


class MalformedRecord(InputError):
    pass


class MissingMandatoryField(MalformedRecord):
    pass


class BadTimestamp(MalformedRecord):
    pass


class CorpusEmpty(InputError):
    pass


# sessions
class InvalidAttackRecord(InputError):
    pass


# templates
class TemplateParse(InputError):
    pass


class DuplicateTarget(TemplateParse):
    pass


class UnknownTransform(TemplateParse):
    pass


class TemplateMismatch(InputError):
    pass


# signatures
class SignatureParse(InputError):
    pass


class DuplicateId(SignatureParse):
    pass


class BadRegex(SignatureParse):
    pass


# metrics
class ZeroDenominator(InputError):
    pass


class PreservedExceedsTotal(InputError):
    pass


# synth
class InvalidSpec(InputError):
    pass
