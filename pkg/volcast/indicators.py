"""
Technical Indicators
ADX, EMA, MOM, ROC, RSI and WPR computed from OHLCV bars, and the aligned
covariate matrix handed to the SARIMAX estimator.

Every indicator returns an array the length of its input; positions inside
the warm-up region are NaN, never a placeholder value.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .config import INDICATOR_WINDOWS
from .exceptions import BoundsError, IndicatorWarmupError, ShapeError

logger = logging.getLogger(__name__)

KINDS = ("ADX", "EMA", "MOM", "ROC", "RSI", "WPR")


def _check_window(window, minimum=1):
    if int(window) != window or window < minimum:
        raise BoundsError(f"indicator window must be an integer >= {minimum}, got {window}")
    return int(window)


def _seeded_recursive(x, window, alpha):
    """Recursive smoothing seeded with the simple mean of the first `window` values.

    Leading NaNs in `x` are skipped; the first output sits at the last value of
    the seed block. Returns NaN everywhere if there are fewer than `window` values.
    """
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    defined = np.flatnonzero(~np.isnan(x))
    if len(defined) < window:
        return out
    first = defined[0]
    seed_at = first + window - 1
    block = x[seed_at:].copy()
    block[0] = x[first:seed_at + 1].mean()
    smoothed = pd.Series(block).ewm(alpha=alpha, adjust=False).mean().to_numpy()
    out[seed_at:] = smoothed
    return out


def _wilder(x, window):
    return _seeded_recursive(x, window, 1.0 / window)


def ema(close, window):
    """Exponential moving average, alpha = 2/(window+1), defined from window-1"""
    window = _check_window(window)
    return _seeded_recursive(close, window, 2.0 / (window + 1))


def mom(close, window):
    """close_t - close_{t-window}"""
    window = _check_window(window)
    close = np.asarray(close, dtype=float)
    out = np.full(len(close), np.nan)
    if len(close) > window:
        out[window:] = close[window:] - close[:-window]
    return out


def roc(close, window):
    """Percent change over `window` bars; NaN where the past close is zero"""
    window = _check_window(window)
    close = np.asarray(close, dtype=float)
    out = np.full(len(close), np.nan)
    if len(close) > window:
        past = close[:-window]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[window:] = np.where(past != 0, 100.0 * (close[window:] - past) / past, np.nan)
    return out


def rsi(close, window):
    """Wilder's relative strength index, defined from index `window`"""
    window = _check_window(window, minimum=2)
    close = np.asarray(close, dtype=float)
    delta = np.concatenate([[np.nan], np.diff(close)])
    avg_gain = _wilder(np.where(np.isnan(delta), np.nan, np.maximum(delta, 0.0)), window)
    avg_loss = _wilder(np.where(np.isnan(delta), np.nan, np.maximum(-delta, 0.0)), window)

    out = np.full(len(close), np.nan)
    defined = ~np.isnan(avg_gain)
    gain, loss = avg_gain[defined], avg_loss[defined]
    with np.errstate(divide="ignore", invalid="ignore"):
        value = 100.0 - 100.0 / (1.0 + gain / loss)
    # no losses: 100 when there were gains, neutral 50 on a flat window
    value = np.where(loss == 0, np.where(gain > 0, 100.0, 50.0), value)
    out[defined] = value
    return out


def wpr(high, low, close, window):
    """Williams %R over a trailing window including t; a flat window gives -50"""
    window = _check_window(window)
    high, low, close = _aligned(high, low, close)
    hh = pd.Series(high).rolling(window).max().to_numpy()
    ll = pd.Series(low).rolling(window).min().to_numpy()
    span = hh - ll
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(span > 0, -100.0 * (hh - close) / span, -50.0)
    out[np.isnan(hh)] = np.nan
    return out


def adx(high, low, close, window):
    """Wilder's average directional index, defined from index 2*window-1"""
    window = _check_window(window, minimum=2)
    high, low, close = _aligned(high, low, close)
    n = len(close)
    tr = np.full(n, np.nan)
    plus_dm = np.full(n, np.nan)
    minus_dm = np.full(n, np.nan)
    if n > 1:
        prev_close = close[:-1]
        tr[1:] = np.maximum.reduce([
            high[1:] - low[1:],
            np.abs(high[1:] - prev_close),
            np.abs(low[1:] - prev_close),
        ])
        up = high[1:] - high[:-1]
        down = low[:-1] - low[1:]
        plus_dm[1:] = np.where((up > down) & (up > 0), up, 0.0)
        minus_dm[1:] = np.where((down > up) & (down > 0), down, 0.0)

    atr = _wilder(tr, window)
    with np.errstate(divide="ignore", invalid="ignore"):
        plus_di = np.where(atr > 0, 100.0 * _wilder(plus_dm, window) / atr, 0.0)
        minus_di = np.where(atr > 0, 100.0 * _wilder(minus_dm, window) / atr, 0.0)
        di_sum = plus_di + minus_di
        dx = np.where(di_sum > 0, 100.0 * np.abs(plus_di - minus_di) / di_sum, 0.0)
    dx[np.isnan(atr)] = np.nan
    return _wilder(dx, window)


def _aligned(*arrays):
    arrays = [np.asarray(a, dtype=float) for a in arrays]
    if len({len(a) for a in arrays}) != 1:
        raise ShapeError("high, low and close must have equal lengths")
    return arrays


# ====================
# SPECS AND COVARIATE MATRIX
# ====================

@dataclass(frozen=True)
class IndicatorSpec:
    kind: str
    window: int = None

    def __post_init__(self):
        kind = self.kind.upper()
        if kind == "ADI":
            kind = "ADX"
        if kind not in KINDS:
            raise BoundsError(f"unknown indicator {self.kind!r}; expected one of {', '.join(KINDS)}")
        window = INDICATOR_WINDOWS[kind] if self.window is None else self.window
        window = _check_window(window, minimum=2 if kind in ("ADX", "RSI") else 1)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "window", window)

    @property
    def label(self):
        if self.window == INDICATOR_WINDOWS[self.kind]:
            return self.kind
        return f"{self.kind}({self.window})"

    @property
    def warmup(self):
        """Index of the first defined value"""
        return {
            "ADX": 2 * self.window - 1,
            "EMA": self.window - 1,
            "MOM": self.window,
            "ROC": self.window,
            "RSI": self.window,
            "WPR": self.window - 1,
        }[self.kind]

    def compute(self, high, low, close):
        if self.kind == "ADX":
            return adx(high, low, close, self.window)
        if self.kind == "WPR":
            return wpr(high, low, close, self.window)
        return {"EMA": ema, "MOM": mom, "ROC": roc, "RSI": rsi}[self.kind](close, self.window)

    def __str__(self):
        return f"{self.kind.lower()}:{self.window}"

    @classmethod
    def parse(cls, text):
        """`name[:window]`, e.g. `adx:14` or `mom`"""
        name, _, window = text.strip().partition(":")
        if window:
            try:
                return cls(name, int(window))
            except ValueError:
                raise BoundsError(f"bad indicator window in {text!r}")
        return cls(name)

    @classmethod
    def parse_list(cls, text):
        specs = [cls.parse(part) for part in text.split(",") if part.strip()]
        if not specs:
            raise BoundsError("indicator list is empty")
        return specs


@dataclass(frozen=True)
class ExogMatrix:
    """Indicator columns aligned row-for-row with a volume series.

    Rows before `valid_from` contain NaN in at least one column.
    """

    names: tuple
    columns: np.ndarray
    valid_from: int = 0
    index: pd.DatetimeIndex = field(default=None, compare=False)

    def __post_init__(self):
        columns = np.asarray(self.columns, dtype=float)
        if columns.ndim == 1:
            columns = columns[:, None]
        if columns.shape[1] != len(self.names):
            raise ShapeError(f"{len(self.names)} names for {columns.shape[1]} columns")
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return self.columns.shape[0]

    @property
    def k(self):
        return len(self.names)

    def rows(self, start, stop):
        """Row slice; valid_from is re-expressed relative to `start`"""
        index = self.index[start:stop] if self.index is not None else None
        return ExogMatrix(
            self.names, self.columns[start:stop], max(0, self.valid_from - start), index
        )

    def select(self, names):
        names = tuple(names)
        missing = [n for n in names if n not in self.names]
        if missing:
            raise BoundsError(f"unknown covariate(s): {', '.join(missing)}")
        cols = [self.names.index(n) for n in names]
        selected = self.columns[:, cols]
        defined = np.flatnonzero(~np.isnan(selected).any(axis=1)) if names else np.array([0])
        valid_from = int(defined[0]) if len(defined) else len(self)
        return ExogMatrix(names, selected, valid_from, self.index)

    def to_frame(self):
        return pd.DataFrame(self.columns, columns=list(self.names), index=self.index)


def build_exog(bars, specs):
    """Compute each indicator on the bars and align them into an ExogMatrix"""
    if not specs:
        raise BoundsError("at least one indicator spec is required")
    n = len(bars)
    labels = [spec.label for spec in specs]
    if len(set(labels)) != len(labels):
        raise BoundsError(f"duplicate indicators in {', '.join(labels)}")
    columns = []
    for spec in specs:
        if n <= spec.warmup:
            raise IndicatorWarmupError(spec.label, spec.warmup, n)
        columns.append(spec.compute(bars.high, bars.low, bars.close))
    valid_from = max(spec.warmup for spec in specs)
    logger.info(f"[INDICATORS] built {', '.join(labels)} on {n} bars (valid from row {valid_from})")
    return ExogMatrix(tuple(labels), np.column_stack(columns), valid_from, bars.frame.index)
