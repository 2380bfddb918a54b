"""
Time Series Core
Volume series container and the (seasonal) differencing / integration operators
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DataError, SeriesLengthError, ShapeError


@dataclass(frozen=True)
class VolumeSeries:
    """Shares traded per session-hour or session-day.

    Timestamps are carried alongside the values, never interleaved, so the
    numeric kernels only ever see plain float arrays.
    """

    timestamps: pd.DatetimeIndex
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        timestamps = pd.DatetimeIndex(self.timestamps)
        if len(values) < 1:
            raise SeriesLengthError("volume series must contain at least one value")
        if len(values) != len(timestamps):
            raise ShapeError(f"{len(timestamps)} timestamps for {len(values)} values")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DataError("volume values must be finite and non-negative")
        if len(timestamps) > 1 and not np.all(timestamps[1:] > timestamps[:-1]):
            raise DataError("volume timestamps must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_bars(cls, bars):
        return cls(bars.frame.index, bars.frame["volume"].to_numpy(dtype=float))

    def slice(self, start, stop):
        return VolumeSeries(self.timestamps[start:stop], self.values[start:stop])


@dataclass(frozen=True)
class DifferenceSpec:
    """Orders of (1-B)^d (1-B^s)^D"""

    d: int = 0
    D: int = 0
    s: int = 1

    def __post_init__(self):
        if self.d < 0 or self.D < 0:
            raise DataError("differencing orders must be non-negative")
        if self.s < 1:
            raise DataError("seasonal period must be at least 1")

    @property
    def lost(self):
        """Number of leading observations consumed by differencing"""
        return self.d + self.D * self.s


def _as_values(y):
    if isinstance(y, VolumeSeries):
        return y.values
    return np.asarray(y, dtype=float)


def difference_polynomial(spec):
    """Coefficients c_0..c_L (c_0 = 1) of (1-B)^d (1-B^s)^D in powers of B"""
    poly = np.array([1.0])
    seasonal = np.zeros(spec.s + 1)
    seasonal[0], seasonal[-1] = 1.0, -1.0
    for _ in range(spec.D):
        poly = np.convolve(poly, seasonal)
    for _ in range(spec.d):
        poly = np.convolve(poly, [1.0, -1.0])
    return poly


def difference(y, spec):
    """Apply (1-B)^d (1-B^s)^D; output length is n - d - D*s"""
    values = _as_values(y)
    if len(values) <= spec.lost:
        raise SeriesLengthError(
            f"series of length {len(values)} is too short for d={spec.d}, D={spec.D}, s={spec.s}"
        )
    out = values
    # seasonal first, then ordinary; the operators commute
    for _ in range(spec.D):
        out = out[spec.s:] - out[:-spec.s]
    for _ in range(spec.d):
        out = np.diff(out)
    return out


def integrate(diffed, spec, initial, include_initial=False):
    """Invert difference().

    `initial` holds the last d + D*s values preceding the differenced block.
    Returns the reconstructed extension; with include_initial=True the
    initial values are prepended, so an empty `diffed` gives `initial` back.
    """
    diffed = np.asarray(diffed, dtype=float)
    initial = np.asarray(initial, dtype=float)
    lost = spec.lost
    if len(initial) != lost:
        raise ShapeError(f"integration needs {lost} initial values, got {len(initial)}")

    poly = difference_polynomial(spec)
    levels = np.concatenate([initial, np.empty(len(diffed))])
    for i, w in enumerate(diffed):
        t = lost + i
        # y_t = w_t - sum_{k>=1} c_k y_{t-k}
        levels[t] = w - np.dot(poly[1:], levels[t - 1::-1][:lost]) if lost else w
    if include_initial:
        return levels
    return levels[lost:]
