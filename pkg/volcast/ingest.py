"""
Bar Ingestion
Parses OHLCV bar files and reduces them to clean regular-session series:
weekends, holidays, pre-market and after-hours bars removed, incomplete sessions reported.
"""

import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time
from pathlib import Path

import numpy as np
import pandas as pd

from .config import CALENDAR_CONFIG
from .exceptions import (
    BarOrderError, BarParseError, BoundsError, IncompleteSessionError, SchemaError,
)
from .timeseries_core import VolumeSeries
from .utils.storage import load_holidays

logger = logging.getLogger(__name__)

PRICE_COLUMNS = ("open", "high", "low", "close")
REQUIRED_COLUMNS = ("timestamp",) + PRICE_COLUMNS + ("volume",)
DEFAULT_SCHEMA = {name: name for name in REQUIRED_COLUMNS}

_DATE_ONLY = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_HAS_OFFSET = re.compile(r"(?:Z|z|[+-]\d{2}:?\d{2})$")


@dataclass(frozen=True)
class Bar:
    timestamp: pd.Timestamp
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self):
        if min(self.open, self.high, self.low, self.close) <= 0:
            raise BarParseError("prices must be positive")
        if self.volume < 0:
            raise BarParseError("volume must be non-negative")
        if not self.low <= min(self.open, self.close) <= max(self.open, self.close) <= self.high:
            raise BarParseError("bar violates low <= open/close <= high")
        return self


@dataclass(frozen=True)
class BarSeries:
    """Ordered OHLCV bars indexed by UTC timestamps.

    `tz` is the exchange zone used to evaluate session membership and local
    dates. `granularity` is "intraday" when bars carry a clock time and
    "daily" when the source held dates only.
    """

    frame: pd.DataFrame
    tz: str = CALENDAR_CONFIG["TIMEZONE"]
    granularity: str = "intraday"

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_bars(cls, bars, tz=CALENDAR_CONFIG["TIMEZONE"], granularity="intraday"):
        records = [b.validate() for b in bars]
        index = pd.DatetimeIndex([pd.Timestamp(b.timestamp) for b in records])
        index = index.tz_localize(tz) if index.tz is None else index
        frame = pd.DataFrame(
            {col: [getattr(b, col) for b in records] for col in PRICE_COLUMNS + ("volume",)},
            index=index.tz_convert("UTC"),
            dtype=float,
        )
        frame.index.name = "timestamp"
        _check_order(frame.index)
        return cls(frame, tz, granularity)

    def with_frame(self, frame):
        return BarSeries(frame, self.tz, self.granularity)

    @property
    def local_index(self):
        return self.frame.index.tz_convert(self.tz)

    def session_dates(self):
        """Exchange-local calendar date of every bar"""
        return np.array(self.local_index.date)

    @property
    def close(self):
        return self.frame["close"].to_numpy(dtype=float)

    @property
    def high(self):
        return self.frame["high"].to_numpy(dtype=float)

    @property
    def low(self):
        return self.frame["low"].to_numpy(dtype=float)

    @property
    def volume(self):
        return self.frame["volume"].to_numpy(dtype=float)

    def volume_series(self):
        return VolumeSeries.from_bars(self)


@dataclass(frozen=True)
class SessionCalendar:
    """Exchange trading calendar; session membership is [open, close) in local time"""

    weekend_days: frozenset = CALENDAR_CONFIG["WEEKEND_DAYS"]
    holidays: frozenset = frozenset()
    session_open: time = CALENDAR_CONFIG["SESSION_OPEN"]
    session_close: time = CALENDAR_CONFIG["SESSION_CLOSE"]
    timezone: str = CALENDAR_CONFIG["TIMEZONE"]
    # None: infer as the most common per-date bar count
    bars_per_session: int = None

    def __post_init__(self):
        if not self.session_open < self.session_close:
            raise BoundsError(
                f"session open {self.session_open} must precede close {self.session_close}"
            )
        if self.bars_per_session is not None and self.bars_per_session < 1:
            raise BoundsError("bars_per_session must be positive")

    def is_trading_day(self, d):
        return d.weekday() not in self.weekend_days and d not in self.holidays


@dataclass
class CompletenessReport:
    expected: int
    complete: list = field(default_factory=list)
    incomplete: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "expected_bars_per_session": self.expected,
            "complete_sessions": len(self.complete),
            "incomplete_sessions": {str(d): n for d, n in sorted(self.incomplete.items())},
        }


def load_calendar(path=None, **overrides):
    """Build a SessionCalendar from a holiday list file plus keyword overrides"""
    path = Path(path) if path is not None else CALENDAR_CONFIG["HOLIDAYS_FILE"]
    holidays = load_holidays(path) if path.exists() else frozenset()
    if not path.exists():
        logger.warning(f"[INGEST] holiday file {path} not found; no holidays applied")
    return SessionCalendar(holidays=holidays, **overrides)


# ====================
# PARSING
# ====================

def parse_bars(source, schema=None, delimiter=",", tz=CALENDAR_CONFIG["TIMEZONE"]):
    """Parse delimited OHLCV text into a BarSeries.

    `source` is a path or a text stream with a header row. `schema` maps the
    canonical names (timestamp, open, high, low, close, volume) to the file's
    column names. Naive and date-only timestamps are read as exchange-local
    time in `tz`; timestamps with an offset are converted to UTC.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    try:
        raw = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise SchemaError("bar file is empty")
    raw.columns = [c.strip() for c in raw.columns]

    missing = [name for name, col in schema.items() if col not in raw.columns]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    # header is line 1, first data row is line 2
    def fail(exc, pos, message):
        raise exc(message, row=pos + 1, line=pos + 2)

    stamps = raw[schema["timestamp"]].str.strip()
    date_only = stamps.str.match(_DATE_ONLY.pattern)
    granularity = "daily" if len(stamps) and bool(date_only.all()) else "intraday"
    index = _parse_timestamps(stamps, tz, fail)

    values = {}
    for name in PRICE_COLUMNS + ("volume",):
        column = pd.to_numeric(raw[schema[name]].str.strip(), errors="coerce")
        bad = np.flatnonzero(column.isna().to_numpy() | ~np.isfinite(column.to_numpy()))
        if len(bad):
            fail(BarParseError, bad[0], f"{name} value {raw[schema[name]].iloc[bad[0]]!r} is not a number")
        values[name] = column.to_numpy(dtype=float)

    frame = pd.DataFrame(values, index=index)
    frame.index.name = "timestamp"
    _check_invariants(frame, fail)
    _check_order(frame.index, fail)
    logger.info(f"[INGEST] parsed {len(frame)} {granularity} bars")
    return BarSeries(frame, tz, granularity)


def _parse_timestamps(stamps, tz, fail):
    aware = stamps.str.contains(_HAS_OFFSET.pattern, regex=True)
    parsed = pd.Series(pd.NaT, index=stamps.index, dtype="datetime64[ns, UTC]")
    if aware.any():
        parsed[aware] = pd.to_datetime(stamps[aware], utc=True, format="ISO8601", errors="coerce")
    if (~aware).any():
        naive = pd.to_datetime(stamps[~aware], format="ISO8601", errors="coerce")
        try:
            parsed[~aware] = naive.dt.tz_localize(tz, ambiguous="raise", nonexistent="raise").dt.tz_convert("UTC")
        except Exception as e:
            # ambiguous or nonexistent local clock time around a DST switch
            pos = int(np.flatnonzero(~aware.to_numpy())[0])
            fail(BarParseError, pos, f"cannot localize naive timestamp: {e}")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if len(bad):
        fail(BarParseError, bad[0], f"unparseable timestamp {stamps.iloc[bad[0]]!r}")
    return pd.DatetimeIndex(parsed)


def _check_invariants(frame, fail):
    o, h, l, c, v = (frame[k].to_numpy() for k in ("open", "high", "low", "close", "volume"))
    checks = (
        (np.minimum.reduce([o, h, l, c]) <= 0, "prices must be positive"),
        (v < 0, "volume must be non-negative"),
        (h < l, "high is below low"),
        ((l > np.minimum(o, c)) | (np.maximum(o, c) > h), "open/close outside [low, high]"),
    )
    for mask, message in checks:
        bad = np.flatnonzero(mask)
        if len(bad):
            fail(BarParseError, bad[0], message)


def _check_order(index, fail=None):
    stamps = index.asi8
    bad = np.flatnonzero(stamps[1:] <= stamps[:-1])
    if len(bad):
        pos = int(bad[0]) + 1
        kind = "duplicate" if stamps[pos] == stamps[pos - 1] else "out-of-order"
        message = f"{kind} timestamp {index[pos]}"
        if fail is None:
            raise BarOrderError(message)
        fail(BarOrderError, pos, message)


def write_bars(bars, path):
    """Write normalized bars: RFC 3339 UTC timestamps (local dates for daily bars)"""
    frame = bars.frame.copy()
    if bars.granularity == "daily":
        stamps = [d.isoformat() for d in bars.session_dates()]
    else:
        stamps = frame.index.strftime("%Y-%m-%dT%H:%M:%SZ")
    frame.insert(0, "timestamp", stamps)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    logger.info(f"[INGEST] wrote {len(frame)} bars to {path}")
    return path


# ====================
# SESSION FILTERING
# ====================

def _regular_mask(bars, cal):
    local = bars.frame.index.tz_convert(cal.timezone)
    dates = np.array(local.date)
    mask = np.array([cal.is_trading_day(d) for d in dates], dtype=bool)
    if bars.granularity == "intraday":
        clock = np.array(local.time)
        mask &= (clock >= cal.session_open) & (clock < cal.session_close)
    return mask, dates


def session_completeness(bars, cal):
    """Count bars per local date and flag dates short of the expected count"""
    dates = np.array(bars.frame.index.tz_convert(cal.timezone).date)
    counts = pd.Series(dates).value_counts()
    if bars.granularity == "daily" or counts.empty:
        return CompletenessReport(expected=1, complete=sorted(counts.index))
    if cal.bars_per_session is not None:
        expected = cal.bars_per_session
    else:
        # modal bar count; ties go to the larger count
        freq = counts.value_counts()
        expected = max(n for n, k in freq.items() if k == freq.max())
    report = CompletenessReport(expected=int(expected))
    for d, n in sorted(counts.items()):
        if n == expected:
            report.complete.append(d)
        else:
            report.incomplete[d] = int(n)
    return report


def filter_regular_session(bars, cal, incomplete="drop"):
    """Keep regular-session bars on trading days.

    Intraday sessions whose bar count differs from the expected count are
    dropped (incomplete="drop") or raise IncompleteSessionError ("fail").
    """
    if incomplete not in ("drop", "fail"):
        raise BoundsError(f"unknown incomplete-session policy {incomplete!r}")
    mask, _ = _regular_mask(bars, cal)
    kept = bars.with_frame(bars.frame[mask])
    removed = int((~mask).sum())

    report = session_completeness(kept, cal)
    if report.incomplete:
        if incomplete == "fail":
            raise IncompleteSessionError(report)
        logger.warning(
            f"[INGEST] dropping {len(report.incomplete)} incomplete session(s): "
            + ", ".join(str(d) for d in sorted(report.incomplete))
        )
        dates = np.array(kept.frame.index.tz_convert(cal.timezone).date)
        keep = ~np.isin(dates, list(report.incomplete))
        kept = kept.with_frame(kept.frame[keep])
    logger.info(f"[INGEST] session filter removed {removed} bars, kept {len(kept)}")
    return kept


def restrict_window(bars, start, end):
    """Bars whose exchange-local date lies in [start, end]"""
    start, end = _as_date(start), _as_date(end)
    if start > end:
        raise BoundsError(f"window start {start} is after end {end}")
    dates = bars.session_dates()
    kept = bars.with_frame(bars.frame[(dates >= start) & (dates <= end)])
    if len(kept) == 0:
        logger.warning(f"[INGEST] window {start}..{end} contains no bars")
    return kept


def _as_date(value):
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))
