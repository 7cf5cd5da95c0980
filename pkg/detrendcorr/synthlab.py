"""Seeded synthetic data used as verification oracles.

Every generator draws from a Philox counter-based bit generator keyed by
``SeedSequence([seed, stream])``; column ``i`` of a panel uses stream ``i``,
so a (kind, params, seed) triple reproduces bit-identical output.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy import signal

from .errors import GeneratorParamError
from .mstnet import Tree
from .series import DAILY, Observable, Panel, Series

logger = logging.getLogger(__name__)

PANEL_KINDS = ("gaussian_iid", "one_factor")
SERIES_KINDS = ("fgn", "pareto", "cascade", "stretched_exp", "ar1")
TREE_KINDS = ("pa_tree",)
FGN_METHODS = ("davies_harte", "spectral")


def substream(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream)."""
    if seed < 0 or stream < 0:
        raise GeneratorParamError("seed and stream must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _check_length(T_pts: int) -> None:
    if T_pts < 2:
        raise GeneratorParamError(f"T_pts must be at least 2, got {T_pts}")


def _labels(I: int) -> List[str]:
    width = max(3, len(str(I - 1)))
    return [f"syn{i:0{width}d}" for i in range(I)]


def _series(values: np.ndarray, label: str, dt: int) -> Series:
    return Series(values, dt, 0, Observable.OTHER, label)


def gaussian_iid(T_pts: int, I: int, seed: int, dt: int = DAILY) -> Panel:
    _check_length(T_pts)
    if I < 1:
        raise GeneratorParamError(f"I must be positive, got {I}")
    values = np.column_stack([substream(seed, i).standard_normal(T_pts) for i in range(I)])
    return Panel.from_array(values, _labels(I), dt)


def _fgn_autocovariance(H: float, lags: np.ndarray) -> np.ndarray:
    k = np.abs(lags).astype(float)
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def _davies_harte(T_pts: int, H: float, rng: np.random.Generator) -> np.ndarray:
    gamma = _fgn_autocovariance(H, np.arange(T_pts + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eigenvalues = np.fft.fft(row).real
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        raise GeneratorParamError(f"circulant embedding is not positive for H={H}, T={T_pts}")
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    n2 = len(row)
    w = rng.standard_normal(n2) + 1j * rng.standard_normal(n2)
    return np.fft.fft(np.sqrt(eigenvalues / n2) * w).real[:T_pts]


def _spectral(T_pts: int, H: float, rng: np.random.Generator) -> np.ndarray:
    freqs = np.fft.rfftfreq(T_pts)[1:]
    amplitude = freqs ** ((1.0 - 2.0 * H) / 2.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    spectrum = np.concatenate([[0.0], amplitude * np.exp(1j * phases)])
    return np.fft.irfft(spectrum, n=T_pts)


def fgn(
    T_pts: int,
    H: float,
    seed: int,
    method: str = "davies_harte",
    stream: int = 0,
    dt: int = DAILY,
) -> Series:
    """Fractional Gaussian noise normalized to zero mean and unit variance.

    ``davies_harte`` is the exact circulant-embedding method; ``spectral``
    shapes random phases by a power spectrum proportional to f^(1 - 2H).
    """
    if not 0.0 < H < 1.0:
        raise GeneratorParamError(f"H must lie in (0, 1), got {H}")
    if T_pts < 2 or T_pts & (T_pts - 1):
        raise GeneratorParamError(f"T_pts must be a power of 2, got {T_pts}")
    rng = substream(seed, stream)
    if method == "davies_harte":
        x = _davies_harte(T_pts, H, rng)
    elif method == "spectral":
        x = _spectral(T_pts, H, rng)
    else:
        raise GeneratorParamError(f"unknown fgn method '{method}', expected one of {FGN_METHODS}")
    x = (x - x.mean()) / x.std()
    return _series(x, f"fgn_H{H:g}", dt)


def one_factor(
    T_pts: int,
    I: int,
    loading: float,
    seed: int,
    idio_sigma: Optional[float] = None,
    dt: int = DAILY,
) -> Panel:
    """column_i = b*Z + sigma*eps_i with a common standard normal factor Z.

    ``idio_sigma`` defaults to sqrt(1 - b^2), giving unit-variance columns.
    """
    _check_length(T_pts)
    if not 0.0 <= loading < 1.0:
        raise GeneratorParamError(f"loading must lie in [0, 1), got {loading}")
    if idio_sigma is None:
        idio_sigma = float(np.sqrt(1.0 - loading**2))
    if idio_sigma < 0:
        raise GeneratorParamError("idio_sigma must be nonnegative")
    factor = substream(seed, I).standard_normal(T_pts)
    noise = np.column_stack([substream(seed, i).standard_normal(T_pts) for i in range(I)])
    return Panel.from_array(loading * factor[:, None] + idio_sigma * noise, _labels(I), dt)


def pareto(T_pts: int, gamma: float, seed: int, x_min: float = 1.0, stream: int = 0, dt: int = DAILY) -> Series:
    """Inverse-CDF Pareto draws with P(X > x) = (x / x_min)^-gamma."""
    _check_length(T_pts)
    if gamma <= 0 or x_min <= 0:
        raise GeneratorParamError("gamma and x_min must be positive")
    u = 1.0 - substream(seed, stream).random(T_pts)
    return _series(x_min * u ** (-1.0 / gamma), f"pareto_g{gamma:g}", dt)


def cascade(
    T_pts: int,
    depth: int,
    seed: int,
    weight: float = 0.7,
    stream: int = 0,
    dt: int = DAILY,
) -> Series:
    """Binomial multiplicative cascade with randomly oriented splits, unit mean."""
    if depth < 1 or T_pts > 2**depth:
        raise GeneratorParamError(f"cascade depth {depth} cannot produce {T_pts} points")
    _check_length(T_pts)
    if not 0.5 < weight < 1.0:
        raise GeneratorParamError(f"cascade weight must lie in (0.5, 1), got {weight}")
    rng = substream(seed, stream)
    measure = np.ones(1)
    for _ in range(depth):
        left = np.where(rng.random(len(measure)) < 0.5, weight, 1.0 - weight)
        measure = np.column_stack([measure * left, measure * (1.0 - left)]).ravel()
    return _series(measure[:T_pts] * 2**depth, f"cascade_d{depth}", dt)


def stretched_exp(T_pts: int, beta: float, seed: int, stream: int = 0, dt: int = DAILY) -> Series:
    """Weibull draws whose CCDF is exp(-x^beta)."""
    _check_length(T_pts)
    if beta <= 0:
        raise GeneratorParamError(f"beta must be positive, got {beta}")
    return _series(substream(seed, stream).weibull(beta, T_pts), f"weibull_b{beta:g}", dt)


def ar1(T_pts: int, phi: float, seed: int, stream: int = 0, dt: int = DAILY) -> Series:
    """Stationary AR(1) with unit innovations, started from its stationary law."""
    _check_length(T_pts)
    if not -1.0 < phi < 1.0:
        raise GeneratorParamError(f"phi must lie in (-1, 1), got {phi}")
    eps = substream(seed, stream).standard_normal(T_pts)
    eps[0] /= np.sqrt(1.0 - phi**2)
    return _series(signal.lfilter([1.0], [1.0, -phi], eps), f"ar1_{phi:g}", dt)


def pa_tree(I: int, seed: int) -> Tree:
    """Preferential-attachment tree: each new node links to an old node with probability proportional to degree."""
    if I < 2:
        raise GeneratorParamError(f"a tree needs at least 2 nodes, got {I}")
    rng = substream(seed)
    edges = [(0, 1, 1.0)]
    # node k appears deg(k) times
    endpoints = [0, 1]
    for new in range(2, I):
        target = endpoints[int(rng.integers(len(endpoints)))]
        edges.append((min(target, new), max(target, new), 1.0))
        endpoints.extend([target, new])
    return Tree(labels=[str(i) for i in range(I)], edges=edges)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 42
    T_pts: int = 1024
    I: int = 1
    dt: int = DAILY

    def __post_init__(self):
        if self.kind not in PANEL_KINDS + SERIES_KINDS + TREE_KINDS:
            raise GeneratorParamError(f"unknown generator kind '{self.kind}'")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeneratorSpec":
        data = dict(data)
        try:
            kind = data.pop("kind")
        except KeyError:
            raise GeneratorParamError("generator spec needs a 'kind'") from None
        known = {k: data.pop(k) for k in ("seed", "T_pts", "I", "dt") if k in data}
        params = dict(data.pop("params", {}))
        params.update(data)
        return cls(kind=kind, params=params, **known)


def generate(spec: GeneratorSpec) -> Union[Panel, Series, Tree]:
    p = spec.params
    try:
        if spec.kind == "gaussian_iid":
            return gaussian_iid(spec.T_pts, spec.I, spec.seed, spec.dt)
        if spec.kind == "one_factor":
            return one_factor(spec.T_pts, spec.I, p["loading"], spec.seed, p.get("idio_sigma"), spec.dt)
        if spec.kind == "pa_tree":
            return pa_tree(spec.I, spec.seed)
        return _series_generator(spec, stream=0)
    except KeyError as e:
        raise GeneratorParamError(f"generator '{spec.kind}' is missing parameter {e}") from None
    except TypeError as e:
        raise GeneratorParamError(f"bad parameters for '{spec.kind}': {e}") from None


def _series_generator(spec: GeneratorSpec, stream: int) -> Series:
    p = spec.params
    if spec.kind == "fgn":
        return fgn(spec.T_pts, p["H"], spec.seed, p.get("method", "davies_harte"), stream, spec.dt)
    if spec.kind == "pareto":
        return pareto(spec.T_pts, p["gamma"], spec.seed, p.get("x_min", 1.0), stream, spec.dt)
    if spec.kind == "cascade":
        return cascade(spec.T_pts, p["depth"], spec.seed, p.get("weight", 0.7), stream, spec.dt)
    if spec.kind == "stretched_exp":
        return stretched_exp(spec.T_pts, p["beta"], spec.seed, stream, spec.dt)
    return ar1(spec.T_pts, p["phi"], spec.seed, stream, spec.dt)


def generate_panel(spec: GeneratorSpec) -> Panel:
    """Panel for any series or panel kind; series kinds use one substream per column."""
    if spec.kind in TREE_KINDS:
        raise GeneratorParamError(f"'{spec.kind}' does not produce a panel")
    if spec.kind in PANEL_KINDS:
        panel = generate(spec)
    else:
        try:
            columns = [_series_generator(spec, stream=i).values for i in range(spec.I)]
        except KeyError as e:
            raise GeneratorParamError(f"generator '{spec.kind}' is missing parameter {e}") from None
        panel = Panel.from_array(np.column_stack(columns), _labels(spec.I), spec.dt)
    logger.info("Generated %s panel: T=%d, I=%d, seed=%d", spec.kind, len(panel), panel.n_columns, spec.seed)
    return panel
