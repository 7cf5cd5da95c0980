"""Multifractal detrended fluctuation and cross-correlation analysis.

For a scale ``s`` a series of length T is cut into M_s = floor(T/s) segments
from the left end and M_s from the right end. Each segment is integrated on
its own, an order-m polynomial is removed by least squares and the
per-segment variance f^2_ZZ (or covariance f^2_XY) is formed. The literal
fluctuation function is the mean of ``sign(f2) |f2|^(q/2)`` over the 2 M_s
segments; the normalized form ``sign(F) |F|^(1/q)`` is what scales as
``s^h(q)`` and is used for every exponent fit.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import legendre
from scipy.stats import linregress

from .errors import DomainError, InsufficientDataError
from .series import Series

logger = logging.getLogger(__name__)

DEFAULT_Q_GRID = tuple(-4.0 + 0.5 * i for i in range(17) if i != 8)
PROFILES = ("cumulative", "midpoint")
GRID_KINDS = ("auto_XX", "auto_YY", "cross_XY")
MIN_FIT_SCALES = 5

ArrayLike = Union[Series, np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class DetrendConfig:
    """Parameters of the fluctuation analysis.

    ``s_grid=None`` selects about 20 log-spaced scales in [10, T/5].
    Segments whose f^2_ZZ falls below ``epsilon`` times the segment-scale
    variance of the series are excluded at q <= 0; a (q, s) cell with more
    than ``max_excluded_fraction`` of its segments excluded is invalid.
    """

    m: int = 2
    q_grid: Tuple[float, ...] = DEFAULT_Q_GRID
    s_grid: Optional[Tuple[int, ...]] = None
    min_valid_segments: int = 2
    max_excluded_fraction: float = 0.10
    epsilon: float = 1e-12
    profile: str = "cumulative"

    def __post_init__(self):
        if self.m < 0:
            raise DomainError(f"polynomial order must be nonnegative, got {self.m}")
        if self.profile not in PROFILES:
            raise DomainError(f"unknown profile '{self.profile}', expected one of {PROFILES}")
        object.__setattr__(self, "q_grid", tuple(float(q) for q in self.q_grid))
        if self.s_grid is not None:
            object.__setattr__(self, "s_grid", tuple(sorted({int(s) for s in self.s_grid})))

    def scales(self, T: int) -> Tuple[int, ...]:
        """The scale grid for a series of length T, validated."""
        grid = self.s_grid if self.s_grid is not None else default_scales(T, self.m)
        check_scales(T, grid, self.m)
        return grid


def default_scales(T: int, m: int = 2, count: int = 20) -> Tuple[int, ...]:
    lo, hi = max(10, m + 2), T // 5
    if hi < lo:
        raise InsufficientDataError(f"series of length {T} is too short for the default scale range [10, T/5]")
    return tuple(int(s) for s in np.unique(np.round(np.geomspace(lo, hi, count)).astype(int)))


def check_scales(T: int, scales: Iterable[int], m: int, min_ratio: int = 4) -> None:
    scales = list(scales)
    if not scales:
        raise InsufficientDataError("empty scale grid")
    if min(scales) < m + 2:
        raise DomainError(f"scale {min(scales)} is too small for a polynomial of order {m}")
    if T < min_ratio * max(scales):
        raise InsufficientDataError(f"series of length {T} is shorter than {min_ratio} x the largest scale {max(scales)}")


def _values(x: ArrayLike) -> np.ndarray:
    values = x.values if isinstance(x, Series) else np.asarray(x, dtype=float)
    if values.ndim != 1:
        raise DomainError("fluctuation analysis needs one-dimensional input")
    return values


@lru_cache(maxsize=512)
def _legendre_basis(s: int, m: int) -> np.ndarray:
    """Orthonormal basis of degree-<=m polynomials on s points rescaled to [-1, 1]."""
    vander = legendre.legvander(np.linspace(-1.0, 1.0, s), m)
    basis, _ = np.linalg.qr(vander)
    basis.flags.writeable = False
    return basis


def segment_matrix(x: np.ndarray, s: int) -> np.ndarray:
    """The 2 M_s segments of x, left-anchored ones first, as a (2 M_s, s) array."""
    count = len(x) // s
    left = x[: count * s].reshape(count, s)
    right = x[len(x) - count * s :].reshape(count, s)
    return np.vstack([left, right])


def detrended_segments(x: np.ndarray, s: int, m: int = 2, profile: str = "cumulative") -> np.ndarray:
    """Per-segment integrated series with the order-m least-squares trend removed."""
    segments = segment_matrix(x, s)
    integrated = np.cumsum(segments, axis=1)
    if profile == "midpoint":
        integrated -= 0.5 * segments
    basis = _legendre_basis(s, m)
    return integrated - (integrated @ basis) @ basis.T


def segment_variance(residuals: np.ndarray) -> np.ndarray:
    return np.mean(residuals * residuals, axis=1)


def segment_covariance(rx: np.ndarray, ry: np.ndarray) -> np.ndarray:
    return np.mean(rx * ry, axis=1)


def degenerate_mask(f2: np.ndarray, x: np.ndarray, s: int, epsilon: float) -> np.ndarray:
    """Segments whose detrended variance is negligible at the series' own scale."""
    reference = s * float(np.var(x))
    if reference == 0.0:
        return np.ones(len(f2), dtype=bool)
    return f2 <= epsilon * reference


def aggregate(f2: np.ndarray, q: float, signed: bool = False) -> Tuple[float, float]:
    """Literal and normalized fluctuation values from the used segments' f^2.

    At q = 0 the literal mean of sign(f2) |f2|^0 is kept as is and the
    normalized value is the logarithmic average exp(mean(ln|f2|) / 2), signed
    by the literal value for cross terms.
    """
    if f2.size == 0:
        return float("nan"), float("nan")
    if signed:
        sign, magnitude = np.sign(f2), np.abs(f2)
    else:
        sign, magnitude = np.ones_like(f2), f2
    if q == 0:
        literal = float(np.mean(sign))
        normalized = float(np.exp(0.5 * np.mean(np.log(magnitude))))
        if signed:
            normalized *= float(np.sign(literal))
        return literal, normalized
    literal = float(np.mean(sign * magnitude ** (q / 2.0)))
    normalized = float(np.sign(literal) * abs(literal) ** (1.0 / q))
    return literal, normalized


@dataclass
class FluctuationGrid:
    """F(q, s) over a (q, s) lattice for one series (auto) or one pair (cross).

    ``F`` holds the literal fluctuation values, ``F_norm`` the normalized ones;
    both are (len(q), len(s)) arrays. ``segments`` is 2 M_s per scale and
    ``segments_used`` the per-cell count after exclusions.
    """

    kind: str
    q: np.ndarray
    s: np.ndarray
    F: np.ndarray
    F_norm: np.ndarray
    valid: np.ndarray
    segments_used: np.ndarray
    segments: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise DomainError(f"unknown grid kind '{self.kind}'")
        self.q = np.asarray(self.q, dtype=float)
        self.s = np.asarray(self.s, dtype=np.int64)
        shape = (len(self.q), len(self.s))
        for name in ("F", "F_norm", "valid", "segments_used"):
            if np.shape(getattr(self, name)) != shape:
                raise DomainError(f"grid field '{name}' must have shape {shape}")
        if self.segments is None:
            self.segments = self.segments_used.max(axis=0)

    @property
    def excluded(self) -> np.ndarray:
        return self.segments[None, :] - self.segments_used

    def _index(self, q: float, s: int) -> Tuple[int, int]:
        qi = np.flatnonzero(np.isclose(self.q, q, rtol=0, atol=1e-12))
        si = np.flatnonzero(self.s == s)
        if not qi.size or not si.size:
            raise KeyError(f"(q={q}, s={s}) is not on the grid")
        return int(qi[0]), int(si[0])

    def value(self, q: float, s: int) -> float:
        return float(self.F[self._index(q, s)])

    def normalized(self, q: float, s: int) -> float:
        return float(self.F_norm[self._index(q, s)])

    def to_frame(self) -> pd.DataFrame:
        qq, ss = np.meshgrid(self.q, self.s, indexing="ij")
        return pd.DataFrame(
            {
                "q": qq.ravel(),
                "s": ss.ravel(),
                "F": self.F.ravel(),
                "F_norm": self.F_norm.ravel(),
                "segments_used": self.segments_used.ravel(),
                "valid": self.valid.ravel(),
            }
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, kind: str = "auto_XX") -> "FluctuationGrid":
        q = np.unique(frame["q"].to_numpy(dtype=float))
        s = np.unique(frame["s"].to_numpy(dtype=np.int64))
        table = frame.set_index(["q", "s"]).sort_index()
        full = pd.MultiIndex.from_product([q, s], names=["q", "s"])
        if len(table) != len(full):
            raise DomainError("grid table does not cover a full (q, s) lattice")
        table = table.reindex(full)

        def block(column, dtype):
            return table[column].to_numpy(dtype=dtype).reshape(len(q), len(s))

        return cls(
            kind=kind,
            q=q,
            s=s,
            F=block("F", float),
            F_norm=block("F_norm", float),
            valid=block("valid", bool),
            segments_used=block("segments_used", np.int64),
        )


def write_grid(grid: FluctuationGrid, path: Union[str, Path]) -> None:
    grid.to_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def read_grid(path: Union[str, Path], kind: str = "auto_XX") -> FluctuationGrid:
    return FluctuationGrid.from_frame(pd.read_csv(path), kind)


def _cell_usable(count: int, used: int, cfg: DetrendConfig) -> bool:
    excluded = count - used
    return used >= cfg.min_valid_segments and excluded <= cfg.max_excluded_fraction * count


def _grid_from_f2(
    kind: str,
    f2_by_scale: Dict[int, np.ndarray],
    degenerate_by_scale: Dict[int, np.ndarray],
    cfg: DetrendConfig,
    signed: bool,
) -> FluctuationGrid:
    q_values = np.asarray(cfg.q_grid, dtype=float)
    scales = sorted(f2_by_scale)
    shape = (len(q_values), len(scales))
    F = np.full(shape, np.nan)
    F_norm = np.full(shape, np.nan)
    valid = np.zeros(shape, dtype=bool)
    used = np.zeros(shape, dtype=np.int64)
    for j, s in enumerate(scales):
        f2 = f2_by_scale[s]
        for i, q in enumerate(q_values):
            keep = ~degenerate_by_scale[s] if q <= 0 else np.ones(len(f2), dtype=bool)
            if signed and q <= 0:
                keep &= f2 != 0
            used[i, j] = int(keep.sum())
            F[i, j], F_norm[i, j] = aggregate(f2[keep], q, signed)
            valid[i, j] = _cell_usable(len(f2), used[i, j], cfg) and np.isfinite(F_norm[i, j])
    segments = np.array([len(f2_by_scale[s]) for s in scales], dtype=np.int64)
    return FluctuationGrid(kind, q_values, np.array(scales), F, F_norm, valid, used, segments)


def single_fluctuation(x: ArrayLike, cfg: Optional[DetrendConfig] = None, kind: str = "auto_XX") -> FluctuationGrid:
    """Univariate MFDFA grid F_XX(q, s)."""
    cfg = cfg or DetrendConfig()
    values = _values(x)
    f2_by_scale, degenerate = {}, {}
    for s in cfg.scales(len(values)):
        f2 = segment_variance(detrended_segments(values, s, cfg.m, cfg.profile))
        f2_by_scale[s] = f2
        degenerate[s] = degenerate_mask(f2, values, s, cfg.epsilon)
    return _grid_from_f2(kind, f2_by_scale, degenerate, cfg, signed=False)


def fluctuation_pair(
    x: ArrayLike,
    y: ArrayLike,
    cfg: Optional[DetrendConfig] = None,
) -> Tuple[FluctuationGrid, FluctuationGrid, FluctuationGrid]:
    """F_XX, F_YY and the signed F_XY over the configured lattice.

    A segment degenerate in either series is excluded from all three grids at
    q <= 0, so the three share their segment sets cell by cell.
    """
    cfg = cfg or DetrendConfig()
    xv, yv = _values(x), _values(y)
    if len(xv) != len(yv):
        raise DomainError(f"series lengths differ: {len(xv)} vs {len(yv)}")
    fxx, fyy, fxy, degenerate = {}, {}, {}, {}
    for s in cfg.scales(len(xv)):
        rx = detrended_segments(xv, s, cfg.m, cfg.profile)
        ry = detrended_segments(yv, s, cfg.m, cfg.profile)
        fxx[s], fyy[s], fxy[s] = segment_variance(rx), segment_variance(ry), segment_covariance(rx, ry)
        degenerate[s] = degenerate_mask(fxx[s], xv, s, cfg.epsilon) | degenerate_mask(fyy[s], yv, s, cfg.epsilon)
    return (
        _grid_from_f2("auto_XX", fxx, degenerate, cfg, signed=False),
        _grid_from_f2("auto_YY", fyy, degenerate, cfg, signed=False),
        _grid_from_f2("cross_XY", fxy, degenerate, cfg, signed=True),
    )


def _scale_mask(grid: FluctuationGrid, scale_range: Optional[Tuple[int, int]]) -> np.ndarray:
    if scale_range is None:
        return np.ones(len(grid.s), dtype=bool)
    lo, hi = scale_range
    return (grid.s >= lo) & (grid.s <= hi)


def _fit_row(grid: FluctuationGrid, qi: int, scale_range: Optional[Tuple[int, int]]):
    mask = _scale_mask(grid, scale_range) & grid.valid[qi]
    magnitude = np.abs(grid.F_norm[qi])
    mask &= np.isfinite(magnitude) & (magnitude > 0)
    if mask.sum() < MIN_FIT_SCALES:
        raise InsufficientDataError(
            f"need {MIN_FIT_SCALES} valid scales at q={grid.q[qi]:g}, found {int(mask.sum())}"
        )
    fit = linregress(np.log(grid.s[mask]), np.log(magnitude[mask]))
    return float(fit.slope), float(fit.stderr), float(fit.rvalue**2), grid.s[mask]


def hurst(grid: FluctuationGrid, q: float = 2.0, scale_range: Optional[Tuple[int, int]] = None) -> Tuple[float, float]:
    """Slope of ln |F_norm(q, s)| against ln s and its standard error."""
    qi = np.flatnonzero(np.isclose(grid.q, q, rtol=0, atol=1e-12))
    if not qi.size:
        raise InsufficientDataError(f"q={q} is not on the grid")
    h, stderr, _, _ = _fit_row(grid, int(qi[0]), scale_range)
    return h, stderr


@dataclass(frozen=True)
class HurstResult:
    q: np.ndarray
    h: np.ndarray
    stderr: np.ndarray
    r2: np.ndarray
    scaling_range: Tuple[int, int]

    @property
    def h_of_q(self) -> Dict[float, Tuple[float, float]]:
        return {float(q): (float(h), float(e)) for q, h, e in zip(self.q, self.h, self.stderr)}

    def monotonicity_violations(self, factor: float = 2.0) -> List[Tuple[float, float]]:
        """Consecutive q pairs where h rises by more than ``factor`` combined standard errors."""
        violations = []
        for k in range(len(self.q) - 1):
            rise = self.h[k + 1] - self.h[k]
            if rise > factor * np.hypot(self.stderr[k], self.stderr[k + 1]):
                violations.append((float(self.q[k]), float(self.q[k + 1])))
        return violations

    def as_dict(self) -> Dict[str, object]:
        return {
            "q": self.q.tolist(),
            "h": self.h.tolist(),
            "stderr": self.stderr.tolist(),
            "r2": self.r2.tolist(),
            "scaling_range": list(self.scaling_range),
        }


def generalized_hurst(grid: FluctuationGrid, scale_range: Optional[Tuple[int, int]] = None) -> HurstResult:
    """h(q) for every q on the grid that has enough valid scales."""
    rows = []
    used_scales: List[np.ndarray] = []
    for qi, q in enumerate(grid.q):
        try:
            h, stderr, r2, scales = _fit_row(grid, qi, scale_range)
        except InsufficientDataError as e:
            logger.debug("Skipping q=%g: %s", q, e)
            continue
        rows.append((q, h, stderr, r2))
        used_scales.append(scales)
    if not rows:
        raise InsufficientDataError("no q value has enough valid scales for a fit")
    q, h, stderr, r2 = (np.array(col, dtype=float) for col in zip(*rows))
    lo = int(min(s.min() for s in used_scales))
    hi = int(max(s.max() for s in used_scales))
    result = HurstResult(q, h, stderr, r2, (lo, hi))
    if result.monotonicity_violations():
        logger.warning("h(q) rises with q beyond its standard errors at %s", result.monotonicity_violations())
    return result


@dataclass(frozen=True)
class SingularitySpectrum:
    q: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    folded: bool = False

    @property
    def points(self) -> List[Tuple[float, float]]:
        return list(zip(self.alpha.tolist(), self.f.tolist()))

    @property
    def width(self) -> float:
        return float(self.alpha.max() - self.alpha.min())

    def as_dict(self) -> Dict[str, object]:
        return {"q": self.q.tolist(), "alpha": self.alpha.tolist(), "f": self.f.tolist(), "folded": self.folded}


def singularity_spectrum(h: HurstResult, branch: str = "full") -> SingularitySpectrum:
    """alpha = h + q dh/dq and f = q (alpha - h) + 1.

    ``branch="left"`` keeps q >= 0 (alpha below alpha(0)), ``"right"`` keeps
    q <= 0. The spectrum is flagged ``folded`` when alpha is not monotone in q.
    """
    if branch == "full":
        keep = np.ones(len(h.q), dtype=bool)
    elif branch == "left":
        keep = h.q >= 0
    elif branch == "right":
        keep = h.q <= 0
    else:
        raise DomainError(f"unknown branch '{branch}'")
    q, hq = h.q[keep], h.h[keep]
    if len(q) < 5:
        raise InsufficientDataError(f"singularity spectrum needs at least 5 q points, got {len(q)}")
    if np.any(np.diff(q) <= 0):
        raise DomainError("q values must be strictly increasing")

    dh = np.gradient(hq, q)
    alpha = hq + q * dh
    f = q * (alpha - hq) + 1.0
    steps = np.diff(alpha)
    folded = bool(np.any(steps > 1e-12) and np.any(steps < -1e-12))
    if folded:
        logger.warning("Singularity spectrum folds: alpha is not monotone in q")
    return SingularitySpectrum(q, alpha, f, folded)


def tau_spectrum(h: HurstResult) -> np.ndarray:
    """Scaling function tau(q) = q h(q) - 1."""
    return h.q * h.h - 1.0
