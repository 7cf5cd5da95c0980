"""Pearson and q-dependent detrended correlation matrices over a panel."""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg
from scipy.stats import norm

from .errors import (
    AsymmetricMatrixError,
    DomainError,
    FlaggedMatrixError,
    InsufficientDataError,
    UndefinedCellError,
    ZeroVarianceError,
)
from .mfdfa import (
    DetrendConfig,
    aggregate,
    check_scales,
    degenerate_mask,
    detrended_segments,
    segment_covariance,
    segment_variance,
)
from .series import Panel, Series

logger = logging.getLogger(__name__)

KINDS = ("pearson", "detrended")
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class CorrMatrix:
    """Symmetric I x I correlation matrix with provenance.

    ``entries`` holds the values as computed (detrended coefficients at
    q != 2 may leave [-1, 1]); ``clamped()`` gives the copy used for
    distances. ``flagged`` marks cells whose coefficient was undefined and
    was filled with 0.
    """

    entries: np.ndarray
    labels: List[str]
    kind: str = "pearson"
    q: Optional[float] = None
    s: Optional[int] = None
    observable: str = "other"
    dt: Optional[int] = None
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        n = len(self.labels)
        if entries.shape != (n, n):
            raise DomainError(f"matrix shape {entries.shape} does not match {n} labels")
        if self.kind not in KINDS:
            raise DomainError(f"unknown matrix kind '{self.kind}'")
        asymmetry = np.max(np.abs(entries - entries.T)) if n else 0.0
        if asymmetry > SYMMETRY_TOL:
            raise AsymmetricMatrixError(f"matrix is asymmetric by {asymmetry:.3g}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "labels", [str(label) for label in self.labels])
        flagged = np.zeros((n, n), dtype=bool) if self.flagged is None else np.asarray(self.flagged, dtype=bool)
        object.__setattr__(self, "flagged", flagged)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def is_flagged(self) -> bool:
        return bool(self.flagged.any())

    @property
    def flagged_pairs(self) -> List[Tuple[str, str]]:
        rows, cols = np.nonzero(np.triu(self.flagged, k=1))
        return [(self.labels[i], self.labels[j]) for i, j in zip(rows, cols)]

    def offdiag(self) -> np.ndarray:
        return self.entries[np.triu_indices(self.size, k=1)]

    def clamped(self) -> "CorrMatrix":
        return replace(self, entries=np.clip(self.entries, -1.0, 1.0))

    def permuted(self, order: Sequence[int]) -> "CorrMatrix":
        order = list(order)
        return replace(
            self,
            entries=self.entries[np.ix_(order, order)],
            labels=[self.labels[i] for i in order],
            flagged=self.flagged[np.ix_(order, order)],
        )

    @property
    def name(self) -> str:
        return "pearson" if self.kind == "pearson" else f"rho_q{self.q:g}_s{self.s}"

    def metadata(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "q": self.q,
            "s": self.s,
            "dt": self.dt,
            "observable": self.observable,
            "flagged_pairs": [list(pair) for pair in self.flagged_pairs],
        }


def require_defined(m: CorrMatrix, allow_flagged: bool = False, hint: str = "pass allow_flagged") -> CorrMatrix:
    """Return ``m`` unless it carries undefined (zero-filled) pairs that were not allowed."""
    if m.is_flagged and not allow_flagged:
        raise FlaggedMatrixError(
            f"{m.name} has {len(m.flagged_pairs)} undefined pairs (first: {m.flagged_pairs[0]}); "
            f"{hint} to keep them as zeros"
        )
    if m.is_flagged:
        logger.warning("%s: using %d undefined pairs as zero correlation", m.name, len(m.flagged_pairs))
    return m


def _check_panel(panel: Panel) -> np.ndarray:
    values = panel.values
    for j, label in enumerate(panel.labels):
        column = values[:, j]
        if np.ptp(column) == 0 or column.std(ddof=1) == 0:
            raise ZeroVarianceError(label)
    return values


def pearson_matrix(panel: Panel) -> CorrMatrix:
    values = _check_panel(panel)
    entries = np.corrcoef(values, rowvar=False)
    entries = np.clip(0.5 * (entries + entries.T), -1.0, 1.0)
    np.fill_diagonal(entries, 1.0)
    return CorrMatrix(entries, panel.labels, "pearson", observable=panel.observable.value, dt=panel.dt)


def _rho_cell(
    fxx: np.ndarray,
    fyy: np.ndarray,
    fxy: np.ndarray,
    degenerate: np.ndarray,
    q: float,
    s: int,
    cfg: DetrendConfig,
) -> float:
    """rho(q, s) = F_XY / sqrt(F_XX F_YY) from literal fluctuation values.

    At q = 0 the literal values are degenerate, so the log-average forms are
    used: rho = sign(F_XY) F_XY^2 / (F_XX F_YY) on the normalized values.
    """
    keep = np.ones(len(fxx), dtype=bool)
    if q <= 0:
        keep = ~degenerate & (fxy != 0)
    used = int(keep.sum())
    if used < cfg.min_valid_segments or len(fxx) - used > cfg.max_excluded_fraction * len(fxx):
        raise UndefinedCellError(q, s, f"{len(fxx) - used} of {len(fxx)} segments degenerate")
    lxx, nxx = aggregate(fxx[keep], q)
    lyy, nyy = aggregate(fyy[keep], q)
    lxy, nxy = aggregate(fxy[keep], q, signed=True)
    if q == 0:
        denominator = nxx * nyy
        numerator = np.sign(nxy) * nxy * nxy
    else:
        denominator = np.sqrt(lxx * lyy) if lxx * lyy > 0 else 0.0
        numerator = lxy
    if not np.isfinite(denominator) or denominator <= 0:
        raise UndefinedCellError(q, s)
    rho = numerator / denominator
    if not np.isfinite(rho):
        raise UndefinedCellError(q, s, "non-finite coefficient")
    return float(rho)


def _as_values(x: Union[Series, np.ndarray, Sequence[float]]) -> np.ndarray:
    return x.values if isinstance(x, Series) else np.asarray(x, dtype=float)


def rho_q(
    x: Union[Series, np.ndarray],
    y: Union[Series, np.ndarray],
    q: float,
    s: int,
    cfg: Optional[DetrendConfig] = None,
) -> float:
    """q-dependent detrended cross-correlation coefficient of x and y at scale s (bins)."""
    cfg = cfg or DetrendConfig()
    xv, yv = _as_values(x), _as_values(y)
    if len(xv) != len(yv):
        raise DomainError(f"series lengths differ: {len(xv)} vs {len(yv)}")
    check_scales(len(xv), [s], cfg.m, min_ratio=2)
    rx = detrended_segments(xv, s, cfg.m, cfg.profile)
    ry = detrended_segments(yv, s, cfg.m, cfg.profile)
    fxx, fyy = segment_variance(rx), segment_variance(ry)
    degenerate = degenerate_mask(fxx, xv, s, cfg.epsilon) | degenerate_mask(fyy, yv, s, cfg.epsilon)
    return _rho_cell(fxx, fyy, segment_covariance(rx, ry), degenerate, q, s, cfg)


def _detrended_row(i, residuals, f2, degenerate, q, s, cfg) -> List[Tuple[int, int, float, bool]]:
    cells = []
    for j in range(i + 1, len(residuals)):
        fxy = segment_covariance(residuals[i], residuals[j])
        try:
            value = _rho_cell(f2[i], f2[j], fxy, degenerate[i] | degenerate[j], q, s, cfg)
            cells.append((i, j, value, False))
        except UndefinedCellError:
            cells.append((i, j, 0.0, True))
    return cells


def detrended_matrix(
    panel: Panel,
    q: float,
    s: int,
    cfg: Optional[DetrendConfig] = None,
    n_jobs: int = 1,
) -> CorrMatrix:
    """C^rho(q, s) over every column pair; undefined cells are filled with 0 and flagged."""
    cfg = cfg or DetrendConfig()
    values = _check_panel(panel)
    check_scales(len(values), [s], cfg.m, min_ratio=2)
    columns = [values[:, j] for j in range(values.shape[1])]
    residuals = [detrended_segments(x, s, cfg.m, cfg.profile) for x in columns]
    f2 = [segment_variance(r) for r in residuals]
    degenerate = [degenerate_mask(f, x, s, cfg.epsilon) for f, x in zip(f2, columns)]

    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_detrended_row)(i, residuals, f2, degenerate, q, s, cfg) for i in range(len(columns))
    )
    n = len(columns)
    entries = np.eye(n)
    flagged = np.zeros((n, n), dtype=bool)
    for cells in rows:
        for i, j, value, undefined in cells:
            entries[i, j] = entries[j, i] = value
            flagged[i, j] = flagged[j, i] = undefined
    if flagged.any():
        logger.warning("%d pairs undefined at q=%g, s=%d; filled with 0 and flagged", int(flagged.sum()) // 2, q, s)
    return CorrMatrix(
        entries, panel.labels, "detrended", q=float(q), s=int(s),
        observable=panel.observable.value, dt=panel.dt, flagged=flagged,
    )


@dataclass(frozen=True)
class OffdiagHistogram:
    edges: np.ndarray
    counts: np.ndarray
    mu: float
    sigma: float
    n: int

    def fitted_density(self, x: np.ndarray) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return norm.pdf(x, loc=self.mu, scale=self.sigma)

    def as_dict(self) -> Dict[str, object]:
        return {
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "mu": self.mu,
            "sigma": self.sigma,
            "n": self.n,
        }


def offdiag_histogram(m: CorrMatrix, bins: int = 30) -> OffdiagHistogram:
    """Histogram of the I(I-1)/2 upper-triangle entries with their sample mean and deviation."""
    if m.size < 3:
        raise InsufficientDataError(f"off-diagonal histogram needs I >= 3, got {m.size}")
    values = m.offdiag()
    counts, edges = np.histogram(values, bins=bins)
    return OffdiagHistogram(edges, counts, float(values.mean()), float(values.std(ddof=1)), len(values))


def build_matrix(
    panel: Panel,
    kind: str,
    q: Optional[float] = None,
    s: Optional[int] = None,
    cfg: Optional[DetrendConfig] = None,
    n_jobs: int = 1,
) -> CorrMatrix:
    if kind == "pearson":
        return pearson_matrix(panel)
    if kind == "detrended":
        if q is None or s is None:
            raise DomainError("detrended matrices need q and s")
        return detrended_matrix(panel, q, s, cfg, n_jobs)
    raise DomainError(f"unknown matrix kind '{kind}'")


def sweep_row(m: CorrMatrix) -> Dict[str, float]:
    """Mean off-diagonal entry, largest eigenvalue and flagged-pair count of one matrix."""
    return {
        "q": m.q,
        "s": m.s,
        "mean_offdiag": float(m.offdiag().mean()),
        "lambda1": float(linalg.eigh(m.entries, eigvals_only=True)[-1]),
        "flagged": int(np.triu(m.flagged, k=1).sum()),
    }


def _sweep_cell(panel: Panel, q: float, s: int, cfg: DetrendConfig) -> Dict[str, float]:
    return sweep_row(detrended_matrix(panel, q, s, cfg))


def scale_sweep(
    panel: Panel,
    q_values: Sequence[float],
    scales: Sequence[int],
    cfg: Optional[DetrendConfig] = None,
    n_jobs: int = 1,
) -> pd.DataFrame:
    """Mean off-diagonal rho and the largest eigenvalue for every (q, s) combination."""
    cfg = cfg or DetrendConfig()
    cells = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_cell)(panel, q, s, cfg) for q in q_values for s in sorted(scales)
    )
    return pd.DataFrame(cells, columns=["q", "s", "mean_offdiag", "lambda1", "flagged"])


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".json")


def write_matrix(m: CorrMatrix, path: Union[str, Path]) -> None:
    """Matrix CSV with label header row and column, plus a JSON metadata sidecar."""
    frame = pd.DataFrame(m.entries, index=m.labels, columns=m.labels)
    frame.to_csv(path, index_label="label", lineterminator="\n", float_format="%.17g")
    sidecar_path(path).write_text(json.dumps(m.metadata(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_matrix(path: Union[str, Path]) -> CorrMatrix:
    frame = pd.read_csv(path, index_col=0)
    labels = [str(label) for label in frame.columns]
    if [str(label) for label in frame.index] != labels:
        raise DomainError(f"row and column labels differ in {path}")
    meta: Dict[str, object] = {}
    sidecar = sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    else:
        logger.warning("No metadata sidecar for %s; assuming a Pearson matrix", path)
    flagged = np.zeros((len(labels), len(labels)), dtype=bool)
    index = {label: k for k, label in enumerate(labels)}
    for a, b in meta.get("flagged_pairs", []):
        flagged[index[a], index[b]] = flagged[index[b], index[a]] = True
    entries = frame.to_numpy(dtype=float)
    return CorrMatrix(
        0.5 * (entries + entries.T),
        labels,
        kind=meta.get("kind", "pearson"),
        q=meta.get("q"),
        s=meta.get("s"),
        observable=meta.get("observable", "other"),
        dt=meta.get("dt"),
        flagged=flagged,
    )
