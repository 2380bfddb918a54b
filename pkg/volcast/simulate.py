"""
Simulation
Synthetic ARMA / SARIMA series and synthetic OHLCV bars for demos and tests
"""

import logging
from datetime import date, datetime, time

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .config import CALENDAR_CONFIG
from .exceptions import BoundsError, ShapeError
from .ingest import BarSeries
from .sarimax import exog_array
from .timeseries_core import difference, integrate

logger = logging.getLogger(__name__)


def simulate_arma(phi, theta, n, rng, sigma2=1.0, mean=0.0, burn=200):
    """n draws of a Gaussian ARMA with AR coefficients phi and MA coefficients theta"""
    if n < 1:
        raise BoundsError("n must be positive")
    shocks = rng.normal(0.0, np.sqrt(sigma2), n + burn)
    ar = np.concatenate([[1.0], -np.asarray(phi, dtype=float)])
    ma = np.concatenate([[1.0], np.asarray(theta, dtype=float)])
    return lfilter(ma, ar, shocks)[burn:] + mean


def simulate_sarima(order, params, n, rng, X=None, start=0.0, burn=200):
    """n draws of y from (order, params): ARMA errors around mu + x'beta on the differenced scale.

    The first d + D*s values are set to `start`; X rows align with y.
    """
    spec = order.diff_spec
    lost = spec.lost
    if n <= lost:
        raise BoundsError(f"n must exceed the {lost} values consumed by differencing")
    shocks = rng.normal(0.0, np.sqrt(params.sigma2), n - lost + burn)
    w = lfilter(params.ma_poly(order.s), params.ar_poly(order.s), shocks)[burn:] + params.mean()
    _, values = exog_array(X, n)
    if values is not None:
        if values.shape[1] != len(params.beta):
            raise ShapeError(f"{values.shape[1]} regressors for {len(params.beta)} coefficients")
        Xd = np.column_stack([difference(values[:, j], spec) for j in range(values.shape[1])])
        w = w + Xd @ np.asarray(params.beta)
    if not lost:
        return w
    return integrate(w, spec, np.full(lost, float(start)), include_initial=True)


def _trading_days(first, count, holidays, weekend_days):
    days, current = [], pd.Timestamp(first).date()
    while len(days) < count:
        if current.weekday() not in weekend_days and current not in holidays:
            days.append(current)
        current = (pd.Timestamp(current) + pd.Timedelta(days=1)).date()
    return days


def _ohlc(close, rng, open_first, wick):
    opens = np.concatenate([[open_first], close[:-1]])
    top = np.maximum(opens, close) * (1.0 + np.abs(rng.normal(0.0, wick, len(close))))
    bottom = np.minimum(opens, close) * (1.0 - np.abs(rng.normal(0.0, wick, len(close))))
    return opens, top, bottom


def u_shape_profile(bars_per_session, depth=1.5):
    """Relative volume per bar: heavy at the open and close, light mid-session, mean 1"""
    if bars_per_session == 1:
        return np.ones(1)
    k = np.arange(bars_per_session)
    mid = (bars_per_session - 1) / 2.0
    profile = 1.0 + depth * ((k - mid) / mid) ** 2
    return profile / profile.mean()


def synthetic_intraday_bars(sessions, rng, first_day=date(2024, 1, 2), bars_per_session=8,
                            session_open=time(9, 0), tz=CALENDAR_CONFIG["TIMEZONE"],
                            base_volume=1e6, noise=0.15, price=100.0, volatility=0.004,
                            holidays=frozenset(), weekend_days=CALENDAR_CONFIG["WEEKEND_DAYS"]):
    """Hourly bars with a U-shaped intraday volume profile, session-level
    AR(1) volume drift and multiplicative lognormal noise; closes follow a
    geometric random walk.
    """
    if sessions < 1 or bars_per_session < 1:
        raise BoundsError("sessions and bars_per_session must be positive")
    days = _trading_days(first_day, sessions, holidays, weekend_days)
    stamps = [
        pd.Timestamp(datetime.combine(d, session_open), tz=tz) + pd.Timedelta(hours=k)
        for d in days for k in range(bars_per_session)
    ]
    n = len(stamps)
    level = np.repeat(np.exp(simulate_arma([0.5], [], sessions, rng, sigma2=0.02)), bars_per_session)
    profile = np.tile(u_shape_profile(bars_per_session), sessions)
    volume = np.round(base_volume * level * profile * np.exp(rng.normal(0.0, noise, n)))
    close = price * np.exp(np.cumsum(rng.normal(0.0, volatility, n)))
    opens, high, low = _ohlc(close, rng, price, volatility / 2)
    frame = pd.DataFrame(
        {"open": opens, "high": high, "low": low, "close": close, "volume": volume},
        index=pd.DatetimeIndex(stamps).tz_convert("UTC"),
    )
    frame.index.name = "timestamp"
    logger.info(f"[SYNTH] generated {sessions} session(s) of {bars_per_session} bars")
    return BarSeries(frame, tz, "intraday")


def synthetic_daily_bars(days, rng, first_day=date(2023, 1, 3), tz=CALENDAR_CONFIG["TIMEZONE"],
                         base_volume=8e7, price=400.0, volatility=0.01,
                         holidays=frozenset(), weekend_days=CALENDAR_CONFIG["WEEKEND_DAYS"]):
    """Daily bars whose log-volume follows an ARIMA(1,1,1) around a weekday pattern"""
    if days < 2:
        raise BoundsError("need at least two days")
    dates = _trading_days(first_day, days, holidays, weekend_days)
    weekday = np.array([[1.1, 0.95, 0.95, 1.0, 1.05][d.weekday() % 5] for d in dates])
    log_level = np.cumsum(simulate_arma([0.3], [-0.6], days, rng, sigma2=0.01))
    volume = np.round(base_volume * weekday * np.exp(log_level - log_level.mean()))
    close = price * np.exp(np.cumsum(rng.normal(0.0, volatility, days)))
    opens, high, low = _ohlc(close, rng, price, volatility / 2)
    index = pd.DatetimeIndex([pd.Timestamp(d, tz=tz) for d in dates]).tz_convert("UTC")
    frame = pd.DataFrame(
        {"open": opens, "high": high, "low": low, "close": close, "volume": volume}, index=index)
    frame.index.name = "timestamp"
    logger.info(f"[SYNTH] generated {days} daily bar(s)")
    return BarSeries(frame, tz, "daily")
