"""Run configuration, environment handling and unit parsing."""

import json
import logging
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

JOBS_ENV = "DETRENDCORR_JOBS"
OUTPUT_DIR_ENV = "DETRENDCORR_OUTPUT_DIR"

HOUR = 3600
DAY = 86400

_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([smhdw]?)\s*$")
_UNIT_SECONDS = {"": 1, "s": 1, "m": 60, "h": HOUR, "d": DAY, "w": 7 * DAY}


def configure_logging(verbosity: int = 0) -> None:
    """Send log records to stderr; stdout is reserved for data and the MCP transport."""
    level = logging.INFO
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_env_file(env_file: Union[str, Path] = ".env") -> Dict[str, str]:
    """Load KEY=VALUE lines from an env file without overriding the real environment."""
    env_file = Path(env_file)
    loaded: Dict[str, str] = {}
    if not env_file.exists():
        return loaded
    logger.info("Loading environment from %s", env_file)
    with open(env_file) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip().strip("\"'")
            if key in os.environ:
                continue
            os.environ[key] = value
            loaded[key] = value
            logger.debug("   Set %s=%s", key, value)
    return loaded


def parse_duration(text: Union[str, int, float]) -> int:
    """Seconds from `3600`, `1h`, `24h`, `7d`, `30m`."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    if isinstance(text, float):
        if not text.is_integer():
            raise ConfigError(f"duration must be a whole number of seconds: {text}")
        return int(text)
    match = _DURATION_RE.match(str(text).lower())
    if not match:
        raise ConfigError(f"cannot parse duration '{text}'")
    seconds = float(match.group(1)) * _UNIT_SECONDS[match.group(2)]
    if seconds <= 0 or not seconds.is_integer():
        raise ConfigError(f"duration must be a positive whole number of seconds: '{text}'")
    return int(seconds)


def parse_scale(text: Union[str, int], dt: int) -> int:
    """Scale in bins: plain integers are bins, durations are converted through dt."""
    if isinstance(text, (int, np.integer)):
        bins = int(text)
    else:
        raw = str(text).strip().lower()
        if raw.isdigit():
            bins = int(raw)
        else:
            seconds = parse_duration(raw)
            if seconds % dt:
                raise ConfigError(f"scale '{text}' is not a whole number of {dt}s bins")
            bins = seconds // dt
    if bins < 1:
        raise ConfigError(f"scale must be at least one bin: '{text}'")
    return bins


def parse_q_values(text: Union[str, List[float]]) -> Tuple[float, ...]:
    """q values from `-4:4:0.5` (inclusive range) or `1,2,4`."""
    if not isinstance(text, str):
        return tuple(float(q) for q in text)
    text = text.strip()
    if ":" in text:
        try:
            lo, hi, step = (float(part) for part in text.split(":"))
        except ValueError as e:
            raise ConfigError(f"cannot parse q range '{text}'") from e
        if step <= 0 or hi < lo:
            raise ConfigError(f"invalid q range '{text}'")
        count = int(round((hi - lo) / step)) + 1
        return tuple(float(round(lo + i * step, 10)) for i in range(count))
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise ConfigError(f"cannot parse q list '{text}'") from e


def parse_scale_grid(text: Union[str, List[Any]], dt: int = DAY) -> Tuple[int, ...]:
    """Scale grids: `10:1200:log20` (log-spaced), `10:100:10` (linear) or `7d,14d`."""
    if not isinstance(text, str):
        return tuple(sorted({parse_scale(s, dt) for s in text}))
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"cannot parse scale grid '{text}'")
        lo, hi = parse_scale(parts[0], dt), parse_scale(parts[1], dt)
        step = parts[2].strip().lower()
        if hi < lo:
            raise ConfigError(f"invalid scale grid '{text}'")
        if step.startswith("log"):
            count = int(step[3:] or 20)
            grid = np.unique(np.round(np.geomspace(lo, hi, count)).astype(int))
        else:
            grid = np.arange(lo, hi + 1, int(step))
        return tuple(int(s) for s in grid)
    return tuple(sorted({parse_scale(part, dt) for part in text.split(",") if part.strip()}))


def parse_instant(text: Union[str, int]) -> int:
    """Epoch seconds from an ISO-8601 instant; naive instants are UTC."""
    if isinstance(text, (int, np.integer)):
        return int(text)
    try:
        moment = datetime.fromisoformat(str(text).strip().replace("Z", "+00:00"))
    except ValueError as e:
        raise ConfigError(f"cannot parse instant '{text}'") from e
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return int(moment.timestamp())


def resolve_jobs(flag: Optional[int] = None, configured: Optional[int] = None) -> int:
    """Worker cap: --jobs flag, then DETRENDCORR_JOBS, then the config file, then 1."""
    if flag is not None:
        jobs = flag
    elif os.getenv(JOBS_ENV):
        try:
            jobs = int(os.environ[JOBS_ENV])
        except ValueError as e:
            raise ConfigError(f"{JOBS_ENV} must be an integer") from e
    elif configured is not None:
        jobs = configured
    else:
        jobs = 1
    if jobs == 0 or jobs < -1:
        raise ConfigError(f"jobs must be positive or -1 (all cores), got {jobs}")
    return jobs


@dataclass
class RunConfig:
    """Declarative description of one pipeline run.

    A run is fully determined by this configuration plus the input files it
    names. Either `ticks` (a tick file or a directory of tick files) or
    `synthetic` (a generator spec, see `synthlab.GeneratorSpec`) provides the
    data.
    """

    output_dir: str = "detrendcorr-out"
    ticks: Optional[str] = None
    supplies: Optional[str] = None
    start: Optional[str] = None
    days: int = 500
    dt: Union[str, int] = "24h"
    observable: str = "c"
    min_avg_tx_per_day: float = 2.0
    collections: Optional[List[str]] = None
    synthetic: Optional[Dict[str, Any]] = None
    kinds: List[str] = field(default_factory=lambda: ["pearson", "detrended"])
    q: List[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    scales: List[Union[str, int]] = field(default_factory=lambda: ["7d", "14d"])
    mfdfa_q: str = "-4:4:0.5"
    mfdfa_scales: Optional[str] = None
    order: int = 2
    hist_bins: int = 30
    max_lag: int = 100
    allow_flagged: bool = False
    full_graph: bool = False
    seed: int = 42
    jobs: int = 1
    render: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ticks is None and self.synthetic is None:
            raise ConfigError("either 'ticks' or 'synthetic' must be set")
        if self.observable not in ("c", "n"):
            raise ConfigError(f"observable must be 'c' or 'n', got '{self.observable}'")
        unknown = set(self.kinds) - {"pearson", "detrended"}
        if unknown or not self.kinds:
            raise ConfigError(f"unknown matrix kinds: {sorted(unknown)}")
        if self.days <= 0:
            raise ConfigError("days must be positive")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        parse_duration(self.dt)

    @property
    def dt_seconds(self) -> int:
        return parse_duration(self.dt)

    @property
    def scale_bins(self) -> Tuple[int, ...]:
        return tuple(parse_scale(s, self.dt_seconds) for s in self.scales)

    @property
    def window(self) -> Tuple[int, int]:
        if self.start is None:
            raise ConfigError("'start' is required when reading tick files")
        return parse_instant(self.start), self.days

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Copy with every non-None override applied (command-line flags win)."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)
