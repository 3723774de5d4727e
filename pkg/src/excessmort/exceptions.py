"""Exception types raised by the package."""


class ExcessMortError(Exception):
    """Base class for all package-specific errors."""


class ParseError(ExcessMortError, ValueError):
    """A malformed input row. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateRecordError(ParseError):
    """Two input rows describe the same cell."""


class DomainError(ExcessMortError, ValueError):
    """A value outside its permitted domain (negative count, population <= 0, ...)."""


class CompletenessError(ExcessMortError, ValueError):
    """A panel is missing cells inside its declared coverage range."""


class CoverageError(ExcessMortError, ValueError):
    """A requested period falls outside a panel's coverage."""


class AlignmentError(ExcessMortError, ValueError):
    """Two series that must share periods do not."""


class DegenerateResponseError(ExcessMortError, ValueError):
    """The response admits no finite maximum-likelihood estimate (e.g. all zero)."""


class DegreesOfFreedomError(ExcessMortError, ValueError):
    """Too few observations for the requested number of parameters."""


class SingularDesignError(ExcessMortError, ValueError):
    """The design matrix is rank deficient. Names the dependent columns."""

    def __init__(self, dependent_columns):
        self.dependent_columns = list(dependent_columns)
        cols = ", ".join(str(c) for c in self.dependent_columns)
        super().__init__(f"design matrix is rank deficient; dependent columns: {cols}")


class CovarianceError(ExcessMortError, ValueError):
    """A coefficient covariance matrix is indefinite beyond jitter tolerance."""


class NonConvergenceError(ExcessMortError, RuntimeError):
    """An iterative fit that must converge for downstream use did not."""


class ConvergenceWarning(UserWarning):
    """Emitted when an iterative fit stops at the iteration cap."""
