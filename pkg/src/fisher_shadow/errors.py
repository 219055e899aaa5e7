"""Exception types raised across the package."""

from __future__ import annotations

from typing import Any


class FisherShadowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FisherShadowError, ValueError):
    pass


class InvalidOperator(FisherShadowError, ValueError):
    """An operator violates a structural invariant (Hermiticity, trace, PSD)."""


class GramSingular(FisherShadowError, ValueError):
    """Observables are numerically linearly dependent."""


class SingularC2(FisherShadowError, ValueError):
    pass


class InvalidPovm(FisherShadowError, ValueError):
    pass


class SingularFrame(FisherShadowError, ValueError):
    pass


class UnsupportedDim(FisherShadowError, ValueError):
    pass


class SingularOutcome(FisherShadowError, ValueError):
    """A zero-probability outcome carries a nonzero score, so the FIM is undefined."""


class SupportViolation(FisherShadowError, ValueError):
    """The chi-square divergence is infinite."""


class InvalidTree(FisherShadowError, ValueError):
    pass


class SingularFim(FisherShadowError, ValueError):
    pass


class CountMismatch(FisherShadowError, ValueError):
    pass


class InvalidAlpha(FisherShadowError, ValueError):
    pass


class CoarseFailure(FisherShadowError):
    """The true state fell outside the neighborhood of the tomographic estimate."""


class BudgetExhausted(FisherShadowError):
    """An optimizer ran out of evaluations; ``best`` holds the best result found."""

    def __init__(self, message: str, best: Any = None) -> None:
        super().__init__(message)
        self.best = best
