"""
Volcast
Trading-volume forecasting with seasonal ARIMA(X) models, technical-indicator
covariates and periodogram-driven harmonic regression, evaluated by
rolling-origin cross validation and VWAP tracking error.
"""

from .exceptions import DataError, ModelError, VolcastError
from .ingest import BarSeries, SessionCalendar, load_calendar, parse_bars
from .sarimax import FittedModel, ModelOrder, SarimaxParams, auto_order_search, fit, forecast

__version__ = "0.1.0"

__all__ = [
    "BarSeries", "DataError", "FittedModel", "ModelError", "ModelOrder", "SarimaxParams",
    "SessionCalendar", "VolcastError", "auto_order_search", "fit", "forecast", "load_calendar",
    "parse_bars",
]
