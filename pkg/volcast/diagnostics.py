"""
Diagnostics
Correlograms, moving-average decomposition and the stationarity / seasonality
measures behind the differencing choice.
"""

import logging
import warnings
from typing import NamedTuple

import numpy as np
import pandas as pd
from statsmodels.tools.sm_exceptions import InterpolationWarning
from statsmodels.tsa.seasonal import seasonal_decompose
from statsmodels.tsa.stattools import kpss

from .exceptions import BoundsError, DegenerateSeriesError, SeriesLengthError

logger = logging.getLogger(__name__)


class CorrelogramResult(NamedTuple):
    lags: np.ndarray
    values: np.ndarray
    band: float

    def to_frame(self):
        return pd.DataFrame({
            "lag": self.lags,
            "value": self.values,
            "lower": -self.band,
            "upper": self.band,
        })


class Decomposition(NamedTuple):
    trend: np.ndarray
    seasonal: np.ndarray
    irregular: np.ndarray

    def to_frame(self, observed=None):
        frame = pd.DataFrame({"trend": self.trend, "seasonal": self.seasonal, "irregular": self.irregular})
        if observed is not None:
            frame.insert(0, "observed", observed)
        return frame


def _centered(y):
    y = np.asarray(y, dtype=float)
    centered = y - y.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0 or not np.isfinite(denom):
        raise DegenerateSeriesError("series has zero variance; correlations are undefined beyond lag 0")
    return centered, denom


def _autocorrelations(y, max_lag):
    centered, denom = _centered(y)
    n = len(centered)
    if max_lag < 0 or max_lag >= n:
        raise BoundsError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    return np.array([np.dot(centered[k:], centered[:n - k]) / denom for k in range(max_lag + 1)])


def acf(y, max_lag, z=1.96):
    """Sample autocorrelations with the biased 1/n normalization"""
    values = _autocorrelations(y, max_lag)
    return CorrelogramResult(np.arange(max_lag + 1), values, z / np.sqrt(len(y)))


def durbin_levinson(rho, order):
    """Partial autocorrelations 1..order from autocorrelations rho[0..order]"""
    partial = np.zeros(order)
    coefs = np.empty(0)
    var = rho[0]
    for m in range(1, order + 1):
        if var <= 0:
            break
        k = (rho[m] - np.dot(coefs, rho[m - 1:0:-1])) / var
        coefs = np.concatenate([coefs - k * coefs[::-1], [k]])
        var *= 1.0 - k * k
        partial[m - 1] = k
    return partial


def pacf(y, max_lag, z=1.96):
    """Partial autocorrelations via the Durbin-Levinson recursion on the sample ACF; lag 0 is 1"""
    rho = _autocorrelations(y, max_lag)
    values = np.concatenate([[1.0], durbin_levinson(rho, max_lag)])
    return CorrelogramResult(np.arange(max_lag + 1), values, z / np.sqrt(len(y)))


def decompose_moving_average(y, period):
    """Additive classical decomposition y = trend + seasonal + irregular.

    Trend is the centered moving average over one period (half weights at the
    ends for an even period) and is NaN where the window does not fit.
    Seasonal repeats the per-phase mean of the detrended values, shifted to
    sum to zero over a period.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if period < 2:
        raise BoundsError(f"decomposition period must be at least 2, got {period}")
    if n < 2 * period:
        raise SeriesLengthError(f"decomposition with period {period} needs at least {2 * period} values, got {n}")

    parts = seasonal_decompose(y, model="additive", period=period)
    trend, seasonal = np.asarray(parts.trend), np.asarray(parts.seasonal)
    return Decomposition(trend, seasonal, y - trend - seasonal)


def seasonal_strength(y, period):
    """max(0, 1 - Var(irregular) / Var(seasonal + irregular)) over the region where the trend is defined"""
    parts = decompose_moving_average(y, period)
    defined = ~np.isnan(parts.trend)
    irregular = parts.irregular[defined]
    detrended = parts.seasonal[defined] + irregular
    denom = np.var(detrended)
    if denom <= 0:
        return 0.0
    return float(max(0.0, 1.0 - np.var(irregular) / denom))


def kpss_statistic(y, lags=None):
    """KPSS level-stationarity statistic with a Bartlett-kernel long-run variance.

    Bandwidth defaults to floor(4 (n/100)^(1/4)).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise SeriesLengthError(f"KPSS needs at least 3 values, got {n}")
    if np.ptp(y) == 0:
        raise DegenerateSeriesError("series has zero variance; KPSS is undefined")
    if lags is None:
        lags = int(np.floor(4.0 * (n / 100.0) ** 0.25))
    lags = min(lags, n - 1)
    with warnings.catch_warnings():
        # statistics outside the tabulated range only clip the p-value
        warnings.simplefilter("ignore", InterpolationWarning)
        statistic, *_ = kpss(y, regression="c", nlags=lags)
    return float(statistic)
