"""Spectral analysis of correlation matrices against the Marchenko-Pastur null.

Throughout, T is the series length and I the number of series, so Q = T / I.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg

from .corrmat import CorrMatrix, build_matrix
from .errors import AsymmetricMatrixError, DomainError, MarchenkoPasturError, SpectralCheckError, ZeroVarianceError
from .mfdfa import DetrendConfig
from .series import Panel, Series

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10
TRACE_TOL = 1e-8
RESIDUAL_TOL = 1e-8
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with sign-normalized eigenvector columns.

    ``first_index`` is the label of the top pair: 1 for a raw matrix, 2 for a
    matrix with its market mode filtered out, whose pairs keep the index of
    the pair they descend from.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: List[str]
    source: Dict[str, object] = field(default_factory=dict)
    first_index: int = 1

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def vector(self, index: int) -> np.ndarray:
        """Eigenvector by its label index (``first_index`` is the top one)."""
        k = index - self.first_index
        if not 0 <= k < self.size:
            raise IndexError(f"eigenvector {index} is outside {self.first_index}..{self.first_index + self.size - 1}")
        return self.eigenvectors[:, k]

    def value(self, index: int) -> float:
        return float(self.eigenvalues[index - self.first_index])


def _orient(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each sums to >= 0; on a zero sum the first nonzero component is positive."""
    vectors = vectors.copy()
    tol = 1e-12 * np.sqrt(vectors.shape[0])
    for k in range(vectors.shape[1]):
        column = vectors[:, k]
        total = column.sum()
        if abs(total) <= tol:
            nonzero = np.flatnonzero(np.abs(column) > tol)
            flip = bool(nonzero.size) and column[nonzero[0]] < 0
        else:
            flip = total < 0
        if flip:
            vectors[:, k] = -column
    return vectors


def _verify(a: np.ndarray, values: np.ndarray, vectors: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(values))))
    diagonal = np.diag(a)
    if np.allclose(diagonal, 1.0, rtol=0, atol=1e-12):
        drift = abs(values.sum() - len(values))
        if drift > TRACE_TOL * max(1.0, len(values)):
            raise SpectralCheckError(f"eigenvalues sum to {values.sum():.12g}, expected {len(values)}")
    residual = np.max(np.abs(a @ vectors - vectors * values))
    if residual > RESIDUAL_TOL * scale:
        raise SpectralCheckError(f"eigenpair residual {residual:.3g} exceeds tolerance")
    gram = vectors.T @ vectors
    deviation = np.max(np.abs(gram - np.eye(len(values))))
    if deviation > ORTHO_TOL:
        raise SpectralCheckError(f"eigenvectors deviate from orthonormality by {deviation:.3g}")


def eigen_sym(m: Union[CorrMatrix, np.ndarray], first_index: int = 1) -> SpectralDecomposition:
    """Full symmetric eigendecomposition with descending eigenvalues and deterministic signs."""
    if isinstance(m, CorrMatrix):
        a, labels, source = m.entries, m.labels, m.metadata()
    else:
        a = np.asarray(m, dtype=float)
        labels, source = [str(i) for i in range(len(a))], {}
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"eigen_sym needs a square matrix, got shape {a.shape}")
    asymmetry = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asymmetry > SYMMETRY_TOL:
        raise AsymmetricMatrixError(f"matrix is asymmetric by {asymmetry:.3g}")

    values, vectors = linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(-values, kind="stable")
    values, vectors = values[order], _orient(vectors[:, order])
    _verify(a, values, vectors)
    return SpectralDecomposition(values, vectors, list(labels), source, first_index)


@dataclass(frozen=True)
class MpLaw:
    Q: float
    sigma2: float = 1.0

    def __post_init__(self):
        if self.Q <= 1:
            raise MarchenkoPasturError(f"Q = T/I must exceed 1, got {self.Q:g}")
        if self.sigma2 <= 0:
            raise MarchenkoPasturError(f"sigma2 must be positive, got {self.sigma2:g}")

    @property
    def lambda_minus(self) -> float:
        return self.sigma2 * (1.0 + 1.0 / self.Q - 2.0 * np.sqrt(1.0 / self.Q))

    @property
    def lambda_plus(self) -> float:
        return self.sigma2 * (1.0 + 1.0 / self.Q + 2.0 * np.sqrt(1.0 / self.Q))

    @property
    def bounds(self) -> Tuple[float, float]:
        return self.lambda_minus, self.lambda_plus

    def density(self, lam: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        lam_arr = np.asarray(lam, dtype=float)
        lo, hi = self.bounds
        inside = (lam_arr > lo) & (lam_arr < hi)
        out = np.zeros_like(lam_arr)
        l_in = lam_arr[inside]
        out[inside] = self.Q / (2.0 * np.pi * self.sigma2) * np.sqrt((hi - l_in) * (l_in - lo)) / l_in
        return float(out) if out.ndim == 0 else out


def mp_law(T_pts: int, I: int, sigma2: float = 1.0) -> MpLaw:
    if I <= 0:
        raise MarchenkoPasturError("I must be positive")
    return MpLaw(T_pts / I, sigma2)


def mp_density(law: MpLaw, lam: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    return law.density(lam)


class OutlierCount(NamedTuple):
    n_above: int
    n_below: int
    lambda1_ratio: float


def count_outliers(spec: SpectralDecomposition, law: MpLaw) -> OutlierCount:
    lo, hi = law.bounds
    return OutlierCount(
        int(np.sum(spec.eigenvalues > hi)),
        int(np.sum(spec.eigenvalues < lo)),
        float(spec.eigenvalues[0] / hi),
    )


@dataclass(frozen=True)
class FilteredPanel:
    residuals: Panel
    intercepts: np.ndarray
    slopes: np.ndarray
    z1: Series

    def regression(self) -> Dict[str, Tuple[float, float]]:
        return {label: (float(a), float(b)) for label, a, b in zip(self.residuals.labels, self.intercepts, self.slopes)}


def filter_market_mode(panel: Panel, v1: np.ndarray) -> FilteredPanel:
    """Regress every column on the factor Z_1 = X v1 and keep the residuals.

    Works on raw or standardized columns: each column gets its own intercept
    and slope.
    """
    v1 = np.asarray(v1, dtype=float)
    if v1.shape != (panel.n_columns,):
        raise DomainError(f"v1 has length {len(v1)}, panel has {panel.n_columns} columns")
    x = panel.values
    z1 = x @ v1
    z_centered = z1 - z1.mean()
    z_var = float(np.dot(z_centered, z_centered))
    if z_var == 0.0:
        raise ZeroVarianceError("Z_1")
    x_centered = x - x.mean(axis=0)
    slopes = (z_centered @ x_centered) / z_var
    intercepts = x.mean(axis=0) - slopes * z1.mean()
    residuals = x_centered - np.outer(z_centered, slopes)
    frame = pd.DataFrame(residuals, index=panel.frame.index, columns=panel.labels)
    factor = Series(z1, panel.dt, panel.t0, panel.observable, "Z_1")
    return FilteredPanel(Panel(frame, panel.dt, panel.observable), intercepts, slopes, factor)


def filtered_matrix(
    filtered: FilteredPanel,
    kind: str = "pearson",
    q: Optional[float] = None,
    s: Optional[int] = None,
    cfg: Optional[DetrendConfig] = None,
    n_jobs: int = 1,
) -> CorrMatrix:
    """C' built from the residual panel."""
    return build_matrix(filtered.residuals, kind, q, s, cfg, n_jobs)


def top_contributors(spec: SpectralDecomposition, index: int = 1, k: int = 5) -> Dict[str, List[Tuple[str, float]]]:
    """The ``k`` largest positive and ``k`` most negative components of eigenvector ``index``."""
    vector = spec.vector(index)
    order = np.argsort(-vector, kind="stable")
    positive = [(spec.labels[i], float(vector[i])) for i in order[:k] if vector[i] > 0]
    negative = [(spec.labels[i], float(vector[i])) for i in order[::-1][:k] if vector[i] < 0]
    return {"positive": positive, "negative": negative}


def spectrum_report(spec: SpectralDecomposition, law: MpLaw) -> Dict[str, object]:
    """JSON-ready summary; detrended spectra carry ``heuristic`` since M-P assumes Pearson entries."""
    outliers = count_outliers(spec, law)
    return {
        "eigenvalues": spec.eigenvalues.tolist(),
        "mp_bounds": list(law.bounds),
        "Q": law.Q,
        "n_above": outliers.n_above,
        "n_below": outliers.n_below,
        "lambda1_ratio": outliers.lambda1_ratio,
        "first_index": spec.first_index,
        "heuristic": spec.source.get("kind") == "detrended",
        "source": spec.source,
    }


def write_eigenvector(spec: SpectralDecomposition, index: int, path: Union[str, Path]) -> None:
    frame = pd.DataFrame({"label": spec.labels, "component": spec.vector(index)})
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
