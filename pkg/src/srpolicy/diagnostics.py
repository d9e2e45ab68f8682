"""Source spans and compiler diagnostics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    # Informational; never blocks emission and never counts as a warning.
    NOTE = "note"


@dataclass(frozen=True)
class SourceSpan:
    file: str = "<input>"
    start_line: int = 1
    start_col: int = 1
    end_line: int = 1
    end_col: int = 1

    def __post_init__(self) -> None:
        if (self.start_line, self.start_col) > (self.end_line, self.end_col):
            raise ValueError(f"span start after end: {self}")

    def to_dict(self) -> dict:
        return {
            "file": self.file,
            "start_line": self.start_line,
            "start_col": self.start_col,
            "end_line": self.end_line,
            "end_col": self.end_col,
        }


UNKNOWN_SPAN = SourceSpan()


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    span: SourceSpan = UNKNOWN_SPAN
    related: tuple[SourceSpan, ...] = field(default=())

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def render(self) -> str:
        s = self.span
        return f"{s.file}:{s.start_line}:{s.start_col}: {self.severity.value}[{self.code}]: {self.message}"

    def to_dict(self) -> dict:
        return {
            "severity": self.severity.value,
            "code": self.code,
            "message": self.message,
            "span": self.span.to_dict(),
            "related": [r.to_dict() for r in self.related],
        }


def error(code: str, message: str, span: Optional[SourceSpan] = None, related=()) -> Diagnostic:
    return Diagnostic(Severity.ERROR, code, message, span or UNKNOWN_SPAN, tuple(related))


def warning(code: str, message: str, span: Optional[SourceSpan] = None, related=()) -> Diagnostic:
    return Diagnostic(Severity.WARNING, code, message, span or UNKNOWN_SPAN, tuple(related))


def note(code: str, message: str, span: Optional[SourceSpan] = None, related=()) -> Diagnostic:
    return Diagnostic(Severity.NOTE, code, message, span or UNKNOWN_SPAN, tuple(related))


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


class DiagnosticError(Exception):
    """Raised when an operation is refused because of error diagnostics."""

    def __init__(self, diagnostics: Iterable[Diagnostic], message: str = "") -> None:
        self.diagnostics = list(diagnostics)
        first = next((d for d in self.diagnostics if d.is_error), None)
        super().__init__(message or (first.render() if first else "diagnostics reported"))
