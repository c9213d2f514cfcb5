from __future__ import annotations

from collections.abc import Sequence


class ScreeningError(Exception):
    """Base error. `exit_code` is what the CLI exits with when this error escapes a command."""

    exit_code = 2

    def __init__(self, message: str, hint: str | None = None) -> None:
        super().__init__(message)
        self.hint = hint


class ParameterError(ScreeningError, ValueError):
    """A parameter is outside its documented range."""


class InvariantViolationError(ParameterError):
    """An input breaks a type invariant (e.g. g_k >= p_k)."""


class AdmissibilityError(ScreeningError):
    """The class distribution does not admit the requested rule."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        labels: Sequence[str] = (),
        margins: Sequence[float] = (),
        hint: str | None = None,
    ) -> None:
        super().__init__(message, hint)
        self.labels = list(labels)
        self.margins = list(margins)


class InfeasibleError(ScreeningError):
    """No subprobability vector satisfies the level and power constraints."""

    exit_code = 3

    def __init__(self, message: str, gap: float, hint: str | None = None) -> None:
        super().__init__(message, hint)
        self.gap = gap


class DegenerateScaleError(ScreeningError):
    def __init__(self, message: str, label: str | None = None, hint: str | None = None) -> None:
        super().__init__(message, hint)
        self.label = label


class InsufficientDataError(ScreeningError):
    def __init__(self, message: str, label: str | None = None, hint: str | None = None) -> None:
        super().__init__(message, hint)
        self.label = label


class UnknownClassError(ScreeningError):
    def __init__(self, labels: Sequence[str], hint: str | None = None) -> None:
        super().__init__(f"unknown class label(s): {', '.join(map(repr, labels))}", hint)
        self.labels = list(labels)


class IngestError(ScreeningError):
    """Input file could not be turned into a labeled sample."""

    def __init__(
        self, message: str, lines: Sequence[int] = (), hint: str | None = None
    ) -> None:
        super().__init__(message, hint)
        self.lines = list(lines)


class ResamplingError(ScreeningError):
    """Too many bootstrap replicates had to be rejected."""

    exit_code = 3
