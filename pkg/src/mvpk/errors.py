"""Error types and source spans shared across the whole pipeline."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SourceSpan:
    """Byte range in a source file with 1-based line/column of its start."""

    file: str
    start: int
    end: int
    line: int
    column: int

    def __post_init__(self):
        assert self.start <= self.end

    def merge(self, other: "SourceSpan") -> "SourceSpan":
        if other is DUMMY_SPAN:
            return self
        if self is DUMMY_SPAN:
            return other
        lo = self if self.start <= other.start else other
        return SourceSpan(self.file, min(self.start, other.start),
                          max(self.end, other.end), lo.line, lo.column)

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


DUMMY_SPAN = SourceSpan("<internal>", 0, 0, 1, 1)


class MvpkError(Exception):
    """Base class for user-facing errors carrying a source span."""

    def __init__(self, message: str, span: SourceSpan = DUMMY_SPAN):
        super().__init__(message)
        self.message = message
        self.span = span

    def __str__(self):
        if self.span is DUMMY_SPAN:
            return self.message
        return f"{self.span}: {self.message}"


class ParseError(MvpkError):
    """Syntax error; carries the set of tokens that would have been accepted."""

    def __init__(self, message, span=DUMMY_SPAN, expected=()):
        super().__init__(message, span)
        self.expected = frozenset(expected)


class ModelError(MvpkError):
    """Type checking / name resolution / well-formedness error."""


class BorrowError(MvpkError):
    """Violation of the borrow or acquires discipline."""


class RecursionError_(MvpkError):
    """Call graph cycle (recursion is not supported)."""


class SuspensionError(MvpkError):
    """A script or public function tried to suspend invariant verification."""


class OpaqueSpecMissing(MvpkError):
    """Opaque callee without a modifies clause inside a modifies-carrying caller."""


class EncodeError(MvpkError):
    """A verification unit was not ground or not encodable."""


class InternalError(MvpkError):
    """Invariant of the pipeline itself was broken (a bug, not a user error)."""


class SolverNotFound(MvpkError):
    """Solver executable could not be located."""


class SolverCrash(MvpkError):
    def __init__(self, message, exit_code: int, stderr: str):
        super().__init__(message)
        self.exit_code = exit_code
        self.stderr = stderr


class InterpBug(MvpkError):
    """Runtime borrow shadow-state violation inside the interpreter."""
