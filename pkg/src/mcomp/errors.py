"""Exception hierarchy shared by every phase."""

from __future__ import annotations

from dataclasses import dataclass


class MCompError(Exception):
    """Base class for all errors raised by the package."""


class DocumentError(MCompError):
    """A metamodel or model document is not well-formed JSON of the expected shape."""


class ValidationError(MCompError):
    """A metamodel violates one of its invariants."""


class ConformanceError(MCompError):
    """A model does not conform to its metamodel."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Violation:
    element: str | None
    rule: str
    message: str

    def __str__(self) -> str:
        where = f"element {self.element!r}" if self.element else "model"
        return f"{where}: {self.rule}: {self.message}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity}: {self.message}"


class SpecError(MCompError):
    """Parsing or checking a composition spec produced diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


class CompositionError(MCompError):
    """Runtime failure while executing a composition spec."""


class AmbiguityError(CompositionError):
    def __init__(self, rules: list[str], sources: str):
        self.rules = rules
        super().__init__(f"ambiguous rules {', '.join(rules)} all apply to {sources}")


class UnresolvedEquivalentError(CompositionError):
    pass


class EvaluationError(CompositionError):
    pass


class CallError(CompositionError):
    pass


class TraceIntegrityError(MCompError):
    """The execution log contradicts the trace generation rules (engine bug)."""


class WeaveError(MCompError):
    pass


class UnknownLinkError(MCompError, LookupError):
    pass
