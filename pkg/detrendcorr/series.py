"""Resampling of tick tables into aligned per-collection time series.

Bins are half-open ``[t0 + k*dt, t0 + (k+1)*dt)``; a tick on a boundary
belongs to the later bin. Capitalization is carried forward across bins
without trades, so inactive bins produce zero log increments.
"""

import logging
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DomainError, EmptyTickTableError, InsufficientDataError, ZeroVarianceError
from .ingest import TickTable

logger = logging.getLogger(__name__)

HOURLY = 3600
DAILY = 86400
DT_PRESETS = {"1h": HOURLY, "24h": DAILY}


class Observable(StrEnum):
    CAP_INCREMENT = "cap_increment"
    TX_COUNT = "tx_count"
    CAPITALIZATION = "capitalization"
    OTHER = "other"


OBSERVABLE_CODES = {"c": Observable.CAP_INCREMENT, "n": Observable.TX_COUNT}


@dataclass(frozen=True)
class Series:
    values: np.ndarray
    dt: int
    t0: int
    observable: Observable = Observable.OTHER
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise DomainError("series values must be one-dimensional")
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values), dtype=np.int64)

    def with_values(self, values: np.ndarray, observable: Optional[Observable] = None) -> "Series":
        return Series(values, self.dt, self.t0, observable or self.observable, self.label)


@dataclass(frozen=True)
class Panel:
    """Time-aligned series, one column per collection, sharing dt, t0 and observable.

    ``frame`` is indexed by bin start time in epoch seconds (index name ``t``).
    """

    frame: pd.DataFrame
    dt: int
    observable: Observable = Observable.OTHER

    def __post_init__(self):
        if self.frame.empty or self.frame.shape[1] == 0:
            raise DomainError("panel has no data")
        if self.frame.columns.has_duplicates:
            raise DomainError("panel column labels must be unique")
        steps = np.diff(self.frame.index.to_numpy(dtype=np.int64))
        if len(steps) and not np.all(steps == self.dt):
            raise DomainError(f"panel index is not evenly spaced at dt={self.dt}")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def labels(self) -> List[str]:
        return [str(c) for c in self.frame.columns]

    @property
    def n_columns(self) -> int:
        return self.frame.shape[1]

    @property
    def t0(self) -> int:
        return int(self.frame.index[0])

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float)

    def column(self, label: str) -> Series:
        return Series(self.frame[label].to_numpy(dtype=float), self.dt, self.t0, self.observable, label)

    def columns(self) -> Iterable[Series]:
        for label in self.labels:
            yield self.column(label)

    def select(self, labels: Sequence[str]) -> "Panel":
        return Panel(self.frame[list(labels)], self.dt, self.observable)

    @classmethod
    def from_array(
        cls,
        values: np.ndarray,
        labels: Sequence[str],
        dt: int = HOURLY,
        t0: int = 0,
        observable: Observable = Observable.OTHER,
    ) -> "Panel":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(labels):
            raise DomainError("values must be a (T, I) array matching the labels")
        index = pd.Index(t0 + dt * np.arange(values.shape[0], dtype=np.int64), name="t")
        return cls(pd.DataFrame(values, index=index, columns=list(labels)), dt, observable)

    @classmethod
    def from_series(cls, series: Sequence[Series]) -> "Panel":
        if not series:
            raise DomainError("panel needs at least one series")
        first = series[0]
        for s in series[1:]:
            if (s.dt, s.t0, len(s), s.observable) != (first.dt, first.t0, len(first), first.observable):
                raise DomainError(f"series '{s.label}' is not aligned with '{first.label}'")
        labels = [s.label if s.label is not None else f"x{i}" for i, s in enumerate(series)]
        values = np.column_stack([s.values for s in series])
        return cls.from_array(values, labels, first.dt, first.t0, first.observable)


def n_bins(duration_seconds: int, dt: int) -> int:
    return int(duration_seconds // dt)


def _bin_index(table: TickTable, records: pd.DataFrame, dt: int) -> np.ndarray:
    return ((records["timestamp"].to_numpy(dtype=np.int64) - table.t_start) // dt).astype(np.int64)


def _collection_records(table: TickTable, collection_id: Optional[str]) -> Tuple[str, pd.DataFrame]:
    if collection_id is None:
        ids = table.collections
        if len(ids) != 1:
            raise DomainError("collection_id is required for a table with several collections")
        collection_id = ids[0]
    records = table.records(collection_id)
    if records.empty:
        raise EmptyTickTableError(f"no ticks for collection '{collection_id}'")
    return collection_id, records


def build_capitalization(
    table: TickTable,
    supply: int,
    dt: int,
    collection_id: Optional[str] = None,
) -> Series:
    """K per bin = supply x last trade price at or before the bin end.

    Prices are carried forward over bins without trades; bins before the
    first trade take the first observed price.
    """
    collection_id, records = _collection_records(table, collection_id)
    n = n_bins(table.duration_days * DAILY, dt)
    bins = _bin_index(table, records, dt)
    inside = bins < n
    if not inside.any():
        raise EmptyTickTableError(f"no ticks for '{collection_id}' inside the {n} full bins")

    last_price = pd.Series(records["price"].to_numpy()[inside]).groupby(bins[inside]).last()
    prices = last_price.reindex(range(n)).ffill().bfill().to_numpy()
    return Series(supply * prices, dt, table.t_start, Observable.CAPITALIZATION, collection_id)


def log_increments(k: Series, dt: Optional[int] = None) -> Series:
    """c(t) = ln K(t + dt) - ln K(t); the result is one bin shorter."""
    if dt is not None and dt != k.dt:
        raise DomainError(f"capitalization sampled at {k.dt}s, increments requested at {dt}s")
    nonpositive = np.flatnonzero(k.values <= 0)
    if nonpositive.size:
        raise DomainError(f"capitalization is not positive at bin {int(nonpositive[0])} of '{k.label}'")
    return k.with_values(np.diff(np.log(k.values)), Observable.CAP_INCREMENT)


def tx_counts(table: TickTable, collection_id: str, dt: int) -> Series:
    """Number of trades per bin; empty bins count zero."""
    n = n_bins(table.duration_days * DAILY, dt)
    records = table.records(collection_id)
    bins = _bin_index(table, records, dt)
    counts = np.bincount(bins[(bins >= 0) & (bins < n)], minlength=n)
    return Series(counts.astype(float), dt, table.t_start, Observable.TX_COUNT, collection_id)


def daily_pattern(n: Series) -> np.ndarray:
    """Mean hourly activity by UTC hour of day (entry h is hour h)."""
    if n.dt != HOURLY:
        raise DomainError(f"daily pattern needs hourly bins, got dt={n.dt}")
    if len(n) < 24:
        raise InsufficientDataError(f"daily pattern needs at least 24 hourly bins, got {len(n)}")
    usable = len(n) - len(n) % 24
    if usable != len(n):
        logger.warning("Truncating %d trailing bins of a partial day", len(n) - usable)
    hours = ((n.times[:usable] // HOURLY) % 24).astype(np.int64)
    totals = np.bincount(hours, weights=n.values[:usable], minlength=24)
    return totals / np.bincount(hours, minlength=24)


def standardize(s: Series) -> Series:
    """Zero mean, unit sample standard deviation (denominator T - 1)."""
    if len(s) < 2 or np.ptp(s.values) == 0:
        raise ZeroVarianceError(s.label)
    sd = s.values.std(ddof=1)
    if sd == 0:
        raise ZeroVarianceError(s.label)
    return s.with_values((s.values - s.values.mean()) / sd)


def standardize_panel(panel: Panel) -> Panel:
    columns = [standardize(s) for s in panel.columns()]
    return Panel.from_series(columns)


def build_panel(
    table: TickTable,
    observable: Union[str, Observable],
    dt: int,
    supplies: Optional[Mapping[str, int]] = None,
    collections: Optional[Sequence[str]] = None,
) -> Panel:
    """Aligned panel of capitalization increments ("c") or trade counts ("n").

    Log increments do not depend on the supply, which cancels in
    ln K(t + dt) - ln K(t); collections without a known supply use 1.
    """
    observable = OBSERVABLE_CODES.get(observable, observable)
    ids = list(collections) if collections is not None else table.collections
    columns: List[Series] = []
    for collection_id in ids:
        if observable == Observable.TX_COUNT:
            columns.append(tx_counts(table, collection_id, dt))
        elif observable == Observable.CAP_INCREMENT:
            supply = (supplies or {}).get(collection_id, 1)
            k = build_capitalization(table, supply, dt, collection_id)
            columns.append(log_increments(k))
        else:
            raise DomainError(f"cannot build a panel of observable '{observable}'")
    panel = Panel.from_series(columns)
    logger.info("Built %s panel: %d bins x %d collections at dt=%ds", observable.value, len(panel), panel.n_columns, dt)
    return panel


def activity_surges(
    panel: Panel,
    z: float = 5.0,
    min_collections: int = 3,
) -> List[Tuple[int, List[str]]]:
    """Bins where at least ``min_collections`` columns exceed a robust z-score of ``z``.

    Each column is scored against its own median and scaled MAD (falling back
    to the standard deviation when the MAD vanishes, as it does for sparse
    counts).
    """
    values = panel.values
    median = np.median(values, axis=0)
    scale = 1.4826 * np.median(np.abs(values - median), axis=0)
    fallback = values.std(axis=0, ddof=1) if len(values) > 1 else np.zeros(values.shape[1])
    scale = np.where(scale > 0, scale, fallback)
    active = scale > 0
    scores = np.zeros_like(values)
    scores[:, active] = (values[:, active] - median[active]) / scale[active]
    hits = scores > z

    labels = panel.labels
    times = panel.frame.index.to_numpy(dtype=np.int64)
    surges = []
    for row in np.flatnonzero(hits.sum(axis=1) >= min_collections):
        surges.append((int(times[row]), [labels[j] for j in np.flatnonzero(hits[row])]))
    return surges


def write_panel(panel: Panel, path: Union[str, Path]) -> None:
    panel.frame.to_csv(path, index=True, index_label="t", lineterminator="\n", float_format="%.17g")


def read_panel(
    path: Union[str, Path],
    observable: Union[str, Observable] = Observable.OTHER,
    dt: Optional[int] = None,
) -> Panel:
    frame = pd.read_csv(path, index_col="t")
    frame.index = frame.index.astype(np.int64)
    frame.columns = [str(c) for c in frame.columns]
    if dt is None:
        if len(frame) < 2:
            raise InsufficientDataError(f"cannot infer dt from a one-row panel: {path}")
        dt = int(frame.index[1] - frame.index[0])
    observable = OBSERVABLE_CODES.get(observable, observable)
    return Panel(frame.astype(float), dt, Observable(observable))
