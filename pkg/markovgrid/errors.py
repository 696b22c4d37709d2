"""
Error types shared by every markovgrid module.

All errors carry a list of human-readable messages, so callers can report
every problem found in one pass instead of failing on the first.
"""
from __future__ import annotations

from typing import Any, Optional


class MarkovgridError(Exception):
    """Base error; ``errors`` holds one message per detected problem."""

    def __init__(self, errors: list[str] | str, context: Optional[dict[str, Any]] = None) -> None:
        if isinstance(errors, str):
            errors = [errors]
        self.errors = errors
        self.context = context or {}
        super().__init__("; ".join(errors))


class InputValidationError(MarkovgridError):
    """Raised when an input is malformed or dimensionally inconsistent."""


class InfeasibleError(MarkovgridError):
    """Raised when a model admits no feasible point (or violates a stability bound)."""


class ConvergenceError(MarkovgridError):
    """Raised when an iterative method stops without meeting its tolerance."""

    def __init__(
        self,
        errors: list[str] | str,
        residual_history: Optional[list[float]] = None,
        context: Optional[dict[str, Any]] = None,
    ) -> None:
        self.residual_history = residual_history or []
        super().__init__(errors, context)


# ─── Surface mappings ───────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4


def exit_code_for(exc: BaseException) -> int:
    """CLI exit code: 2 bad input, 3 infeasible or non-convergent, 4 anything else."""
    if isinstance(exc, InputValidationError):
        return EXIT_INPUT
    if isinstance(exc, (InfeasibleError, ConvergenceError)):
        return EXIT_INFEASIBLE
    return EXIT_INTERNAL


def http_status_for(exc: MarkovgridError) -> int:
    if isinstance(exc, InputValidationError):
        return 422
    if isinstance(exc, (InfeasibleError, ConvergenceError)):
        return 409
    return 500
