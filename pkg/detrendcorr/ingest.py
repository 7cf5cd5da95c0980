"""Tick-file ingestion and collection-level metadata.

Tick files are UTF-8 CSV with the header ``collection_id,timestamp,price_usd``;
timestamps are integer Unix seconds (UTC) and prices are USD decimals.

Capitalization is not part of the raw data. Throughout the package it is
modelled as ``K(t) = supply x last observed trade price``, carried forward
across bins without trades; see ``series.build_capitalization``.
"""

import io
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, BinaryIO, Dict, List, Mapping, Optional, Set, TextIO, Tuple, Union

import pandas as pd

from .errors import DomainError, EmptyTickTableError, TickFormatError

if TYPE_CHECKING:
    from .series import Panel

logger = logging.getLogger(__name__)

TICK_HEADER = "collection_id,timestamp,price_usd"
SUPPLY_HEADER = "collection_id,supply"
SECONDS_PER_DAY = 86400

_INT_RE = re.compile(r"[+-]?\d+")

Window = Tuple[int, int]
ByteSource = Union[bytes, BinaryIO, str, Path]


@dataclass(frozen=True)
class TickTable:
    """Per-collection transaction records inside an analysis window.

    ``frame`` has the columns ``collection_id``, ``timestamp`` (int64) and
    ``price`` (float64), sorted by (collection_id, timestamp); records sharing
    a timestamp keep their file order.
    """

    frame: pd.DataFrame
    t_start: int
    duration_days: int
    dropped: int = 0

    def __post_init__(self):
        if self.duration_days <= 0:
            raise DomainError(f"duration_days must be positive, got {self.duration_days}")

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def window(self) -> Window:
        return self.t_start, self.duration_days

    @property
    def t_end(self) -> int:
        return self.t_start + self.duration_days * SECONDS_PER_DAY

    @property
    def collections(self) -> List[str]:
        return sorted(self.frame["collection_id"].unique().tolist())

    def records(self, collection_id: str) -> pd.DataFrame:
        return self.frame[self.frame["collection_id"] == collection_id]

    def counts(self) -> pd.Series:
        """Record count per collection."""
        return self.frame.groupby("collection_id", sort=True).size()


@dataclass(frozen=True)
class CollectionMeta:
    collection_id: str
    capitalization_last_day: Optional[float]
    n_total: int
    supply: Optional[int]
    zero_fraction_1h: float


def _read_bytes(source: ByteSource) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line = data[: e.start].count(b"\n") + 1
        raise TickFormatError(line, "input is not valid UTF-8") from e


def _parse_tick_lines(text: str) -> pd.DataFrame:
    lines = text.splitlines()
    if not lines or lines[0].strip().lstrip("\ufeff") != TICK_HEADER:
        raise TickFormatError(1, f"expected header '{TICK_HEADER}'")

    ids: List[str] = []
    stamps: List[int] = []
    prices: List[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 3:
            raise TickFormatError(lineno, f"expected 3 fields, got {len(parts)}")
        collection_id, stamp, price_text = parts
        if not collection_id:
            raise TickFormatError(lineno, "empty collection_id")
        if not _INT_RE.fullmatch(stamp):
            raise TickFormatError(lineno, f"timestamp '{stamp}' is not an integer")
        try:
            price = float(price_text)
        except ValueError:
            raise TickFormatError(lineno, f"price '{price_text}' is not a decimal") from None
        if not math.isfinite(price):
            raise TickFormatError(lineno, f"price '{price_text}' is not finite")
        if price < 0:
            raise TickFormatError(lineno, f"negative price {price_text}")
        ids.append(collection_id)
        stamps.append(int(stamp))
        prices.append(price)

    return pd.DataFrame(
        {
            "collection_id": pd.Series(ids, dtype=object),
            "timestamp": pd.Series(stamps, dtype="int64"),
            "price": pd.Series(prices, dtype="float64"),
        }
    )


def _windowed_table(frame: pd.DataFrame, window: Window) -> TickTable:
    t_start, duration_days = window
    if duration_days <= 0:
        raise DomainError(f"duration_days must be positive, got {duration_days}")
    t_end = t_start + duration_days * SECONDS_PER_DAY
    inside = (frame["timestamp"] >= t_start) & (frame["timestamp"] < t_end)
    dropped = int((~inside).sum())
    if dropped:
        logger.warning("Dropped %d tick records outside the analysis window", dropped)

    frame = frame[inside].copy()
    if frame.empty:
        raise EmptyTickTableError("no tick records inside the analysis window")
    frame["_seq"] = range(len(frame))
    frame = frame.sort_values(["collection_id", "timestamp", "_seq"]).drop(columns="_seq")
    frame = frame.reset_index(drop=True)
    return TickTable(frame=frame, t_start=t_start, duration_days=duration_days, dropped=dropped)


def parse_ticks(source: ByteSource, window: Window) -> TickTable:
    """Parse a tick file and keep the records inside ``window = (t_start, duration_days)``."""
    frame = _parse_tick_lines(_decode(_read_bytes(source)))
    table = _windowed_table(frame, window)
    logger.info(
        "Parsed %d tick records for %d collections (%d dropped)",
        len(table), len(table.collections), table.dropped,
    )
    return table


def load_ticks(path: Union[str, Path], window: Window) -> TickTable:
    """Load one tick file, or every ``*.csv`` tick file of a directory."""
    path = Path(path)
    if not path.is_dir():
        return parse_ticks(path, window)

    files = sorted(path.glob("*.csv"))
    if not files:
        raise EmptyTickTableError(f"no tick files in {path}")
    frames = []
    for tick_file in files:
        try:
            frames.append(_parse_tick_lines(_decode(tick_file.read_bytes())))
        except TickFormatError as e:
            raise TickFormatError(e.line, f"{tick_file.name}: {e.reason}") from e
    table = _windowed_table(pd.concat(frames, ignore_index=True), window)
    logger.info("Loaded %d tick records from %d files in %s", len(table), len(files), path)
    return table


def read_ticks_dir(path: Union[str, Path], window: Window) -> TickTable:
    """Concatenate every ``*.csv`` tick file of a directory."""
    if not Path(path).is_dir():
        raise EmptyTickTableError(f"{path} is not a directory")
    return load_ticks(path, window)


def write_ticks(table: TickTable, target: Union[TextIO, str, Path]) -> None:
    """Write the canonical tick-file form of a table."""
    out = table.frame.rename(columns={"price": "price_usd"})
    out.to_csv(target, index=False, lineterminator="\n")


def parse_supplies(source: ByteSource) -> Dict[str, int]:
    """Parse ``collection_id,supply`` lines (header optional)."""
    supplies: Dict[str, int] = {}
    for lineno, line in enumerate(_decode(_read_bytes(source)).splitlines(), start=1):
        line = line.strip().lstrip("\ufeff")
        if not line or (lineno == 1 and line == SUPPLY_HEADER):
            continue
        parts = [part.strip() for part in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise TickFormatError(lineno, "expected 'collection_id,supply'")
        if not _INT_RE.fullmatch(parts[1]) or int(parts[1]) < 0:
            raise TickFormatError(lineno, f"supply '{parts[1]}' is not a nonnegative integer")
        supplies[parts[0]] = int(parts[1])
    return supplies


def liquidity_filter(table: TickTable, min_avg_tx_per_day: float) -> Set[str]:
    """Collections averaging at least ``min_avg_tx_per_day`` trades per calendar day."""
    counts = table.counts()
    keep = counts[counts / table.duration_days >= min_avg_tx_per_day]
    return set(keep.index.tolist())


def collection_metadata(
    table: TickTable,
    supplies: Mapping[str, int],
    panel_1h: "Panel",
) -> List[CollectionMeta]:
    """Per-collection summary: final capitalization, trade count, supply, inactive-hour fraction."""
    if panel_1h.dt != 3600 or panel_1h.observable.value != "tx_count":
        raise DomainError("collection_metadata needs an hourly transaction-count panel")

    counts = table.counts()
    last_price = table.frame.groupby("collection_id", sort=True)["price"].last()
    meta = []
    for collection_id in table.collections:
        if collection_id not in panel_1h.labels:
            raise DomainError(f"collection '{collection_id}' is missing from the hourly panel")
        supply = supplies.get(collection_id)
        if supply is None:
            logger.warning("No supply for collection '%s'; capitalization unknown", collection_id)
            capitalization = None
        else:
            capitalization = float(supply * last_price[collection_id])
        hourly = panel_1h.frame[collection_id].to_numpy()
        meta.append(
            CollectionMeta(
                collection_id=collection_id,
                capitalization_last_day=capitalization,
                n_total=int(counts[collection_id]),
                supply=supply,
                zero_fraction_1h=float((hourly == 0).mean()),
            )
        )
    return meta


def liquid_collections(meta: List[CollectionMeta], max_zero_fraction: float = 0.5) -> List[str]:
    """Collections with fewer than ``max_zero_fraction`` inactive hours, most active first."""
    liquid = [m for m in meta if m.zero_fraction_1h < max_zero_fraction]
    return [m.collection_id for m in sorted(liquid, key=lambda m: (m.zero_fraction_1h, m.collection_id))]


def metadata_frame(meta: List[CollectionMeta]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "collection_id": m.collection_id,
                "capitalization_last_day": m.capitalization_last_day,
                "n_total": m.n_total,
                "supply": m.supply,
                "zero_fraction_1h": m.zero_fraction_1h,
            }
            for m in meta
        ]
    )


def ticks_from_text(text: str, window: Window) -> TickTable:
    """Convenience wrapper for in-memory tick text."""
    return parse_ticks(io.BytesIO(text.encode("utf-8")), window)
