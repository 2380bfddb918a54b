"""
Forecasters
Fit/predict wrappers handed to the rolling-origin harness.

Every forecaster exposes fit(y, X=None, origin=None) returning a fitted
object with predict(h, X_future=None). `origin` is the index of the first
forecast step in the full series; only the oracle looks at it.
"""

import logging

import numpy as np

from .exceptions import BoundsError
from .sarimax import ModelOrder, auto_order_search, choose_differencing, exhaustive_order_search, fit, forecast
from .spectral import fit_harmonics, forecast_harmonics, periodogram, top_m_frequencies

logger = logging.getLogger(__name__)


class FittedSarimax:
    def __init__(self, model, y, X=None):
        self.model = model
        self.label = model.label
        self._y = y
        self._X = X

    def predict(self, h, X_future=None):
        return forecast(self.model, self._y, self._X if self.model.exog_names else None, h, X_future).mean


class SarimaxForecaster:
    """Fixed-order (S)ARIMA(X)"""

    def __init__(self, order, options=None):
        self.order = ModelOrder.parse(order) if isinstance(order, str) else order
        self.options = options
        self.label = self.order.label

    def fit(self, y, X=None, origin=None):
        return FittedSarimax(fit(self.order, y, X, self.options), y, X)


class AutoSarimaxForecaster:
    """Order chosen by the stepwise (or exhaustive) search on each fit.

    With per_fold=False the order found on the first fit is reused for every
    later fit and only the coefficients are re-estimated.
    """

    def __init__(self, s=1, bounds=None, search="stepwise", per_fold=True, d=None, D=None,
                 criterion="aic", options=None):
        if search not in ("stepwise", "exhaustive"):
            raise BoundsError(f"unknown search {search!r}")
        self.s = s
        self.bounds = bounds
        self.search = search
        self.per_fold = per_fold
        self.d, self.D = d, D
        self.criterion = criterion
        self.options = options
        self.chosen = None
        self.label = "auto (per fold)" if per_fold else "auto"

    def _search(self, y, X):
        if self.search == "exhaustive":
            d, D = self.d, self.D
            if d is None or D is None:
                auto_d, auto_D = choose_differencing(y, self.s, self.bounds)
                d = auto_d if d is None else d
                D = auto_D if D is None else D
            return exhaustive_order_search(y, X, self.bounds, self.s, d, D, self.criterion, options=self.options)
        return auto_order_search(y, X, self.bounds, self.s, self.d, self.D, self.criterion, options=self.options)

    def fit(self, y, X=None, origin=None):
        if self.per_fold or self.chosen is None:
            model = self._search(y, X)
            if not self.per_fold:
                self.chosen = model.order
                logger.info(f"[SEARCH] fixing order {model.label} for the remaining folds")
        else:
            model = fit(self.chosen, y, X, self.options)
        return FittedSarimax(model, y, X)


class FittedHarmonics:
    def __init__(self, model, label):
        self.model = model
        self.label = label

    def predict(self, h, X_future=None):
        return forecast_harmonics(self.model, self.model.origin + self.model.n_train, h)


class FdprForecaster:
    """Top-m periodogram frequencies, re-selected on every fit, extrapolated by harmonic regression"""

    def __init__(self, m):
        if m < 1:
            raise BoundsError(f"m must be positive, got {m}")
        self.m = int(m)
        self.label = f"FDPR m={self.m}"

    def fit(self, y, X=None, origin=None):
        freqs = top_m_frequencies(periodogram(y), self.m)
        return FittedHarmonics(fit_harmonics(y, freqs), self.label)


class _Constant:
    def __init__(self, value, label, start=None, truth=None):
        self.value = value
        self.label = label
        self._start = start
        self._truth = truth

    def predict(self, h, X_future=None):
        if self._truth is not None:
            return np.asarray(self._truth[self._start:self._start + h], dtype=float)
        return np.full(h, self.value)


class MeanForecaster:
    """Training-window mean"""

    label = "mean"

    def fit(self, y, X=None, origin=None):
        return _Constant(float(np.mean(y)), self.label)


class OracleForecaster:
    """Returns the true future values; used to self-test the harness"""

    label = "oracle"

    def __init__(self, truth):
        self.truth = np.asarray(truth, dtype=float)

    def fit(self, y, X=None, origin=None):
        if origin is None:
            raise BoundsError("the oracle needs the forecast origin")
        return _Constant(np.nan, self.label, origin, self.truth)


def parse_model(text, s=1, per_fold=False, search="stepwise", options=None):
    """Forecaster for a model argument: an order string, `auto`, `fdpr:<m>` or `mean`"""
    text = text.strip()
    if text == "auto":
        return AutoSarimaxForecaster(s=s, search=search, per_fold=per_fold, options=options)
    if text == "mean":
        return MeanForecaster()
    if text.startswith("fdpr:"):
        try:
            return FdprForecaster(int(text.split(":", 1)[1]))
        except ValueError:
            raise BoundsError(f"bad FDPR model {text!r}")
    return SarimaxForecaster(text, options)
