"""Exception hierarchy shared by every detrendcorr module."""

from typing import Optional


class DetrendCorrError(ValueError):
    """Base class for all analysis errors raised by detrendcorr."""


class TickFormatError(DetrendCorrError):
    """A line of a tick or supplies file could not be parsed."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class EmptyTickTableError(DetrendCorrError):
    """No tick record survived parsing and window filtering."""


class DomainError(DetrendCorrError):
    """An input value lies outside the domain of a transform (e.g. ln of K <= 0)."""


class ZeroVarianceError(DetrendCorrError):
    """A series or panel column has zero variance."""

    def __init__(self, label: Optional[str] = None):
        self.label = label
        what = f"column '{label}'" if label is not None else "series"
        super().__init__(f"{what} has zero variance")


class InsufficientDataError(DetrendCorrError):
    """Too few samples, scales or q points for the requested estimate."""


class UndefinedCellError(DetrendCorrError):
    """A detrended coefficient is undefined at the given (q, s) cell."""

    def __init__(self, q: float, s: int, reason: str = "zero denominator"):
        self.q = q
        self.s = s
        super().__init__(f"rho undefined at q={q:g}, s={s}: {reason}")


class FlaggedMatrixError(DetrendCorrError):
    """A correlation matrix carries flagged cells and flagged input was not allowed."""


class AsymmetricMatrixError(DetrendCorrError):
    """A matrix expected to be symmetric is not."""


class SpectralCheckError(DetrendCorrError):
    """An eigendecomposition failed one of its accuracy checks."""


class MarchenkoPasturError(DetrendCorrError):
    """The Marchenko-Pastur law is undefined for the given shape (Q <= 1)."""


class DegenerateTailError(DetrendCorrError):
    """A tail fit cannot be computed from the given sample."""


class DegenerateDegreesError(DetrendCorrError):
    """A degree distribution has too few distinct values for a tail fit."""


class GeneratorParamError(DetrendCorrError):
    """A synthetic generator received invalid parameters."""


class ConfigError(DetrendCorrError):
    """A run configuration or command-line value is invalid."""


class PipelineStageError(DetrendCorrError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
