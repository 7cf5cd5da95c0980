"""Shared fixtures: tick-file builders, seeded panels and hand-built fluctuation grids."""

from pathlib import Path
from typing import Callable, Iterable, Sequence, Tuple

import numpy as np
import pytest

from detrendcorr.corrmat import CorrMatrix, write_matrix
from detrendcorr.ingest import TICK_HEADER
from detrendcorr.mfdfa import FluctuationGrid
from detrendcorr.series import DAILY, Panel
from detrendcorr.synthlab import gaussian_iid, one_factor, substream

# 2022-01-01T00:00:00Z
T0 = 1_640_995_200

TickRow = Tuple[str, int, float]


def tick_text(rows: Iterable[TickRow]) -> str:
    lines = [TICK_HEADER]
    lines.extend(f"{cid},{ts},{price}" for cid, ts, price in rows)
    return "\n".join(lines) + "\n"


def market_rows(
    collections: Sequence[str] = ("alpha", "beta", "gamma", "delta"),
    days: int = 60,
    trades_per_day: int = 6,
    seed: int = 3,
) -> list:
    """Random-walk trade prices for a few collections, several trades a day."""
    rng = substream(seed)
    common = rng.normal(0.0, 0.05, days)
    rows = []
    for k, cid in enumerate(collections):
        price = 10.0 * (k + 1)
        for day in range(days):
            price *= float(np.exp(0.6 * common[day] + rng.normal(0.0, 0.04)))
            for second in np.sort(rng.integers(0, DAILY, trades_per_day)):
                rows.append((cid, T0 + day * DAILY + int(second), round(price * (1 + rng.normal(0, 0.002)), 6)))
    return rows


@pytest.fixture
def window() -> Tuple[int, int]:
    return T0, 60


@pytest.fixture
def make_tick_file(tmp_path) -> Callable[..., Path]:
    def _make(rows: Iterable[TickRow], name: str = "ticks.csv") -> Path:
        path = tmp_path / name
        path.write_text(tick_text(rows), encoding="utf-8")
        return path

    return _make


@pytest.fixture
def market_dir(tmp_path) -> Path:
    """A directory with one tick file per collection plus a supplies file."""
    rows = market_rows()
    ticks = tmp_path / "ticks"
    ticks.mkdir()
    for cid in sorted({r[0] for r in rows}):
        (ticks / f"{cid}.csv").write_text(tick_text(r for r in rows if r[0] == cid), encoding="utf-8")
    (tmp_path / "supplies.csv").write_text(
        "collection_id,supply\nalpha,10000\nbeta,5000\ngamma,8888\ndelta,2500\n", encoding="utf-8"
    )
    return tmp_path


@pytest.fixture
def iid_panel() -> Panel:
    return gaussian_iid(512, 6, seed=7)


@pytest.fixture
def factor_panel() -> Panel:
    return one_factor(2000, 20, loading=0.6, seed=11)


@pytest.fixture
def grid_factory() -> Callable[..., FluctuationGrid]:
    """Grid with F_norm(q, s) = c * s^h(q) exactly."""

    def _make(h_of_q: Callable[[float], float], q=(-2.0, -1.0, 1.0, 2.0, 3.0), s=(8, 16, 32, 64, 128, 256), c: float = 0.5):
        q_arr = np.asarray(q, dtype=float)
        s_arr = np.asarray(s, dtype=np.int64)
        F_norm = np.array([[c * float(si) ** h_of_q(qi) for si in s_arr] for qi in q_arr])
        F = np.sign(F_norm) * np.abs(F_norm) ** q_arr[:, None]
        valid = np.ones(F.shape, dtype=bool)
        used = np.full(F.shape, 40, dtype=np.int64)
        return FluctuationGrid("auto_XX", q_arr, s_arr, F, F_norm, valid, used)

    return _make


@pytest.fixture
def flagged_matrix() -> CorrMatrix:
    """Detrended 4 x 4 matrix whose (a, b) coefficient was undefined and zero-filled."""
    entries = np.array([
        [1.0, 0.0, 0.3, 0.2],
        [0.0, 1.0, 0.25, 0.1],
        [0.3, 0.25, 1.0, 0.4],
        [0.2, 0.1, 0.4, 1.0],
    ])
    flagged = np.zeros((4, 4), dtype=bool)
    flagged[0, 1] = flagged[1, 0] = True
    return CorrMatrix(entries, ["a", "b", "c", "d"], "detrended", q=4.0, s=10, dt=86400, flagged=flagged)


@pytest.fixture
def flagged_matrix_path(tmp_path, flagged_matrix) -> Path:
    path = tmp_path / "flagged.csv"
    write_matrix(flagged_matrix, path)
    return path
