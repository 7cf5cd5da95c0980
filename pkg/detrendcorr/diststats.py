"""Distribution tails and temporal memory: CCDFs, tail-law fits, autocorrelation."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import signal
from scipy.stats import linregress

from .errors import DegenerateTailError, DomainError, InsufficientDataError, ZeroVarianceError
from .series import Series
from .synthlab import substream

logger = logging.getLogger(__name__)

MIN_TAIL = 50
POOR_FIT_R2 = 0.98
DEFAULT_XMIN_PCT = 90.0
# points of the log-log diagnostic need at least this many samples at or above them
MIN_POINT_SUPPORT = 5

Values = Union[Series, np.ndarray, Sequence[float]]


def _array(values: Values) -> np.ndarray:
    arr = values.values if isinstance(values, Series) else np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return arr


@dataclass(frozen=True)
class CcdfCurve:
    """Empirical CCDF on the sorted unique sample values.

    ``p[k]`` is the fraction of samples at or above ``x[k]``, so it starts at 1
    and ends at (multiplicity of the maximum) / N. ``evaluate`` returns the
    strict P(X > x) anywhere.
    """

    x: np.ndarray
    p: np.ndarray
    sigma: float
    normalized: bool
    sample: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.sample)

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.x.tolist(), self.p.tolist()))

    def evaluate(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        above = self.n - np.searchsorted(self.sample, x, side="right")
        result = above / self.n
        return float(result) if np.ndim(result) == 0 else result


def ccdf(values: Values, normalize: bool = False) -> CcdfCurve:
    sample = np.sort(_array(values))
    if len(sample) < 2:
        raise InsufficientDataError("a CCDF needs at least 2 values")
    if sample[0] == sample[-1]:
        raise DomainError("all values are identical")
    sigma = float(sample.std(ddof=1))
    if normalize:
        sample = sample / sigma
    x, counts = np.unique(sample, return_counts=True)
    at_or_above = len(sample) - np.concatenate([[0], np.cumsum(counts)[:-1]])
    return CcdfCurve(x, at_or_above / len(sample), sigma, normalize, sample)


def loglog_points(curve: CcdfCurve, x_min: float, max_points: int = 40) -> Tuple[np.ndarray, np.ndarray]:
    """CCDF points above x_min, thinned to at most one per log-spaced bin."""
    support = curve.p * curve.n
    keep = (curve.x >= x_min) & (curve.x > 0) & (support >= MIN_POINT_SUPPORT)
    x, p = curve.x[keep], curve.p[keep]
    if len(x) > max_points:
        edges = np.geomspace(x[0], x[-1], max_points + 1)
        first = np.unique(np.searchsorted(x, edges[:-1], side="left"))
        x, p = x[first], p[first]
    return x, p


@dataclass(frozen=True)
class TailFit:
    kind: str
    exponent: float
    x_min: float
    n_tail: int
    stderr: float = float("nan")
    loglog_slope: float = float("nan")
    r2: float = float("nan")

    @property
    def poor(self) -> bool:
        return bool(np.isnan(self.r2) or self.r2 < POOR_FIT_R2)

    def as_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "exponent": self.exponent,
            "x_min": self.x_min,
            "n_tail": self.n_tail,
            "stderr": self.stderr,
            "loglog_slope": self.loglog_slope,
            "r2": self.r2,
            "poor": self.poor,
        }


def _tail_sample(values: Values, x_min: Optional[float], x_min_pct: float, normalize: bool):
    sample = _array(values)
    if len(sample) == 0 or np.ptp(sample) == 0:
        raise DegenerateTailError("tail fit needs a nonconstant sample")
    if normalize:
        sample = sample / sample.std(ddof=1)
    if x_min is None:
        x_min = float(np.percentile(sample, x_min_pct))
    if x_min <= 0:
        raise DegenerateTailError(f"tail threshold must be positive, got {x_min:g}")
    tail = sample[sample > x_min]
    if len(tail) < MIN_TAIL:
        raise DegenerateTailError(f"only {len(tail)} samples above x_min={x_min:g}, need {MIN_TAIL}")
    return sample, float(x_min), tail


def fit_powerlaw_tail(
    values: Values,
    x_min: Optional[float] = None,
    x_min_pct: float = DEFAULT_XMIN_PCT,
    normalize: bool = True,
) -> TailFit:
    """Hill estimate of gamma in P(X > x) ~ x^-gamma over samples above x_min.

    ``x_min`` is in units of the sample standard deviation when ``normalize``
    is set; it defaults to the ``x_min_pct`` percentile. The log-log CCDF slope
    and its R^2 are reported alongside as a linearity diagnostic.
    """
    sample, x_min, tail = _tail_sample(values, x_min, x_min_pct, normalize)
    gamma = len(tail) / float(np.sum(np.log(tail / x_min)))
    x, p = loglog_points(ccdf(sample), x_min)
    slope, r2 = float("nan"), float("nan")
    if len(x) >= 3:
        fit = linregress(np.log(x), np.log(p))
        slope, r2 = float(fit.slope), float(fit.rvalue**2)
    result = TailFit("power_law", gamma, x_min, len(tail), gamma / np.sqrt(len(tail)), slope, r2)
    if result.poor:
        logger.info("Power-law tail fit is poor (log-log R^2 = %.3f)", r2)
    return result


def fit_stretched_exp_ccdf(x: np.ndarray, p: np.ndarray, x_min: float = 0.0, n_tail: Optional[int] = None) -> TailFit:
    """beta from least squares of ln(-ln P) against ln x on a CCDF curve."""
    x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    keep = (x > 0) & (x >= x_min) & (p > 0) & (p < 1)
    if keep.sum() < 3 or np.ptp(p[keep]) == 0:
        raise DegenerateTailError("stretched-exponential fit needs a nonconstant tail of at least 3 points")
    fit = linregress(np.log(x[keep]), np.log(-np.log(p[keep])))
    return TailFit(
        "stretched_exp",
        float(fit.slope),
        float(x_min),
        int(n_tail if n_tail is not None else keep.sum()),
        float(fit.stderr),
        float(fit.slope),
        float(fit.rvalue**2),
    )


def fit_stretched_exp(
    values: Values,
    x_min: Optional[float] = None,
    x_min_pct: float = DEFAULT_XMIN_PCT,
    normalize: bool = False,
) -> TailFit:
    """beta of P(X > x) = exp(-(x/x0)^beta) from the empirical tail above x_min."""
    sample, x_min, tail = _tail_sample(values, x_min, x_min_pct, normalize)
    curve = ccdf(sample)
    support = curve.p * curve.n
    keep = (curve.x > x_min) & (support >= MIN_POINT_SUPPORT)
    return fit_stretched_exp_ccdf(curve.x[keep], curve.p[keep], x_min, len(tail))


@dataclass(frozen=True)
class AcfCurve:
    lags: np.ndarray
    values: np.ndarray
    dt: Optional[int] = None

    @property
    def tau(self) -> Optional[np.ndarray]:
        return None if self.dt is None else self.lags * self.dt

    def as_dict(self) -> Dict[str, object]:
        return {"lags": self.lags.tolist(), "values": self.values.tolist(), "dt": self.dt}


def acf(x: Values, max_lag: int = 100) -> AcfCurve:
    """Autocorrelation A(dI) for dI = 1..max_lag.

    Centered on the global mean and normalized by the biased (1/T) variance;
    the lagged sum runs over the T - dI defined products only.
    """
    values = _array(x)
    T = len(values)
    if max_lag < 1 or max_lag >= T / 4:
        raise InsufficientDataError(f"max_lag must lie in [1, T/4) for T={T}, got {max_lag}")
    centered = values - values.mean()
    variance = float(np.mean(centered * centered))
    if variance == 0.0:
        raise ZeroVarianceError(x.label if isinstance(x, Series) else None)
    full = signal.correlate(centered, centered, mode="full", method="fft")
    lagged = full[T : T + max_lag] / T
    return AcfCurve(np.arange(1, max_lag + 1), lagged / variance, x.dt if isinstance(x, Series) else None)


def acf_decay_exponent(curve: AcfCurve, lag_range: Optional[Tuple[int, int]] = None) -> Tuple[float, float, float]:
    """kappa, its standard error and R^2 of A ~ lag^-kappa over the positive ACF values."""
    mask = curve.values > 0
    if lag_range is not None:
        mask &= (curve.lags >= lag_range[0]) & (curve.lags <= lag_range[1])
    if mask.sum() < 3:
        raise InsufficientDataError("power-law decay fit needs at least 3 positive ACF values")
    fit = linregress(np.log(curve.lags[mask]), np.log(curve.values[mask]))
    return -float(fit.slope), float(fit.stderr), float(fit.rvalue**2)


def shuffled_surrogate(x: Series, seed: int) -> Series:
    """Random permutation of x: same distribution, no temporal memory."""
    return x.with_values(substream(seed).permutation(x.values))
