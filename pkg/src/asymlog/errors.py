"""Exception types shared across the package.

Every failure mode that a caller can reasonably recover from gets its own
class so the solver, the zero tests and the CLI can tell them apart.  All
of them derive from :class:`AsymlogError`.
"""

from __future__ import annotations

from dataclasses import dataclass


class AsymlogError(Exception):
    """Base class for all package-specific errors."""


class UndecidedZeroTest(AsymlogError):
    """A sign/zero test on an exact constant or germ ran out of budget.

    Raised instead of guessing: the quantity could not be proven zero and
    could not be separated from zero within the configured precision cap.
    """


class NonRepresentableLimit(AsymlogError):
    """A limit needed by the rewriting step is not an exact constant."""


class SeriesCapExceeded(AsymlogError):
    """A lazy series expansion exceeded its term or attempt budget."""


class ConstantRootFailure(AsymlogError):
    """Roots of a constant polynomial could not be represented exactly."""


class OrderingFailure(AsymlogError):
    """Two real root approximations could not be strictly ordered."""


class DomainError(AsymlogError):
    """An operation left the domain where the expression is defined.

    Examples: log of an eventually negative germ, a fractional power of a
    quantity whose sign cannot be certified positive.
    """


class DegreeError(AsymlogError):
    """The input is not a polynomial in the unknown."""


class DerivativeVanishes(AsymlogError):
    """Numeric validation hit a point where the derivative vanishes."""


class EpsilonTooLarge(AsymlogError):
    """The requested perturbation radius violates its admissibility bound."""


class PrecisionExhausted(AsymlogError):
    """Adaptive-precision numeric evaluation hit its precision ceiling."""


@dataclass(frozen=True)
class SourceSpan:
    """Half-open character range ``[start, end)`` inside an input string."""

    start: int
    end: int

    def mark(self, text: str) -> str:
        """Render ``text`` with a caret line under this span."""
        lo = max(0, min(self.start, len(text)))
        hi = max(lo + 1, min(self.end, len(text) + 1))
        return text + "\n" + " " * lo + "^" * (hi - lo)


class ParseError(AsymlogError):
    """Syntax or validation error in textual input."""

    def __init__(self, message: str, span: SourceSpan | None = None,
                 source: str | None = None):
        self.span = span
        self.source = source
        if span is not None and source is not None:
            message = message + "\n" + span.mark(source)
        super().__init__(message)
