"""
Evaluation
Rolling-origin cross validation, error metrics (MSE, MAPE, VWAP tracking
error), naive VWAP baselines and forward stepwise covariate selection.
"""

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import CV_CONFIG, RUNTIME_CONFIG
from .exceptions import (
    BoundsError, MapeUndefinedError, ModelError, SeriesLengthError, ShapeError,
    VolcastError, ZeroVolumeError,
)
from .indicators import ExogMatrix, build_exog

logger = logging.getLogger(__name__)

WINDOW_POLICIES = ("expanding", "sliding")
EXOG_POLICIES = ("freeze", "lag")


# ====================
# METRICS
# ====================

def _pair(pred, actual):
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ShapeError(f"{len(pred)} predictions for {len(actual)} actual values")
    if len(pred) < 1:
        raise SeriesLengthError("metrics need at least one value")
    return pred, actual


def mse(pred, actual):
    pred, actual = _pair(pred, actual)
    return float(np.mean((pred - actual) ** 2))


def mape(pred, actual):
    """Mean absolute percentage error as a fraction (0.1 means 10%)"""
    pred, actual = _pair(pred, actual)
    zero = np.flatnonzero(actual == 0)
    if len(zero):
        raise MapeUndefinedError(int(zero[0]))
    return float(np.mean(np.abs(pred - actual) / np.abs(actual)))


def vwap(prices, volumes):
    prices, volumes = _pair(prices, volumes)
    total = volumes.sum()
    if not total > 0:
        raise ZeroVolumeError(f"total volume is {total:g}; VWAP undefined")
    return float(np.dot(prices, volumes) / total)


def vwap_error(pred_volumes, actual_volumes, actual_prices):
    """Signed relative VWAP tracking error with realized prices as the execution prices"""
    realized = vwap(actual_prices, actual_volumes)
    return (vwap(actual_prices, pred_volumes) - realized) / realized


# ====================
# VWAP BY PERIOD
# ====================

def _period_keys(bars, by):
    dates = bars.session_dates()
    if by == "session":
        return pd.Index(dates, name="session")
    if by == "week":
        return pd.Index([f"{y}-W{w:02d}" for y, w, _ in (d.isocalendar() for d in dates)], name="week")
    raise BoundsError(f"unknown period {by!r}; expected session or week")


def period_vwaps(bars, by="session"):
    """Realized VWAP of each session (or ISO week), close prices weighted by volume"""
    frame = pd.DataFrame({"pv": bars.close * bars.volume, "volume": bars.volume})
    frame.index = _period_keys(bars, by)
    grouped = frame.groupby(level=0, sort=True).sum()
    empty = grouped.index[grouped["volume"] <= 0]
    if len(empty):
        raise ZeroVolumeError(f"zero total volume in period(s): {', '.join(map(str, empty))}")
    return (grouped["pv"] / grouped["volume"]).rename("vwap")


def _baseline_frame(vwaps, predicted):
    frame = pd.DataFrame({"predicted": predicted, "actual": vwaps}).dropna(subset=["predicted"])
    frame["error"] = (frame["predicted"] - frame["actual"]) / frame["actual"]
    return frame


def baseline_vwap_no_change(vwaps):
    """Predict each period's VWAP as the previous period's; the first period is skipped"""
    vwaps = pd.Series(vwaps, dtype=float)
    return _baseline_frame(vwaps, vwaps.shift(1))


def baseline_vwap_rolling(vwaps, k=3):
    """Predict each period's VWAP as the mean of the k before it; the first k periods are skipped"""
    if k < 1:
        raise BoundsError(f"rolling window must be positive, got {k}")
    vwaps = pd.Series(vwaps, dtype=float)
    return _baseline_frame(vwaps, vwaps.rolling(k).mean().shift(1))


def _forecast_frame(bars, forecasts):
    if isinstance(forecasts, pd.Series):
        predicted = forecasts.reindex(bars.frame.index).to_numpy(dtype=float)
    else:
        predicted = np.asarray(forecasts, dtype=float)
        if len(predicted) != len(bars):
            raise ShapeError(f"{len(predicted)} forecasts for {len(bars)} bars")
    return pd.DataFrame({
        "close": bars.close,
        "actual": bars.volume,
        "predicted": predicted,
        "session": bars.session_dates(),
    })


def _grouped_errors(frame, key, min_rows):
    rows, excluded = [], []
    for period, group in frame.groupby(key, sort=True):
        covered = group.dropna(subset=["predicted"])
        if len(covered) < min_rows or len(covered) < len(group):
            excluded.append({key: period, "rows": len(covered)})
            continue
        try:
            error = vwap_error(covered["predicted"], covered["actual"], covered["close"])
        except ZeroVolumeError as e:
            logger.warning(f"[VWAP] {key} {period} skipped: {e}")
            excluded.append({key: period, "rows": len(covered)})
            continue
        rows.append({
            key: period,
            "rows": len(covered),
            "vwap_predicted": vwap(covered["close"], covered["predicted"]),
            "vwap_actual": vwap(covered["close"], covered["actual"]),
            "error": error,
        })
    columns = [key, "rows", "vwap_predicted", "vwap_actual", "error"]
    return pd.DataFrame(rows, columns=columns), excluded


def session_vwap_errors(bars, forecasts):
    """VWAP tracking error of intraday volume forecasts, one row per fully forecast session"""
    frame = _forecast_frame(bars, forecasts)
    forecast_sessions = frame.loc[frame["predicted"].notna(), "session"].unique()
    frame = frame[frame["session"].isin(forecast_sessions)]
    errors, excluded = _grouped_errors(frame, "session", 1)
    for item in excluded:
        logger.warning(f"[VWAP] session {item['session']} only partly forecast; excluded")
    return errors


def weekly_vwap_grouping(bars, forecasts):
    """VWAP tracking error of daily volume forecasts grouped by ISO week.

    Returns (per-week errors, excluded weeks). Weeks with fewer than two
    forecast trading days are excluded.
    """
    frame = _forecast_frame(bars, forecasts).dropna(subset=["predicted"]).copy()
    frame["week"] = [f"{y}-W{w:02d}" for y, w, _ in (d.isocalendar() for d in frame["session"])]
    errors, excluded = _grouped_errors(frame, "week", 2)
    if excluded:
        logger.info(f"[VWAP] excluded {len(excluded)} week(s) with fewer than 2 trading days")
    return errors, excluded


# ====================
# ROLLING-ORIGIN CROSS VALIDATION
# ====================

@dataclass(frozen=True)
class CvConfig:
    horizon: int
    initial_window: int
    window_policy: str = CV_CONFIG["WINDOW_POLICY"]
    step: int = None
    exog_policy: str = "freeze"

    def __post_init__(self):
        if self.horizon < 1 or self.initial_window < 1:
            raise BoundsError("horizon and initial window must be positive")
        if self.window_policy not in WINDOW_POLICIES:
            raise BoundsError(f"unknown window policy {self.window_policy!r}")
        if self.exog_policy not in EXOG_POLICIES:
            raise BoundsError(f"unknown exogenous policy {self.exog_policy!r}")
        if self.step is None:
            object.__setattr__(self, "step", self.horizon)
        if self.step < 1:
            raise BoundsError("step must be positive")

    @classmethod
    def default(cls, n, granularity="intraday", period=8, **overrides):
        """Half the sample as the initial window, whole sessions for intraday data"""
        horizon = overrides.pop("horizon", None) or (
            CV_CONFIG["INTRADAY_HORIZON"] if granularity == "intraday" else CV_CONFIG["DAILY_HORIZON"])
        initial = overrides.pop("initial_window", None)
        if initial is None:
            initial = int(n * CV_CONFIG["INITIAL_FRACTION"])
            if granularity == "intraday" and period > 1:
                initial -= initial % period
            initial = max(initial, 1)
        return cls(horizon, initial, **overrides)

    def origins(self, n):
        if self.initial_window + self.horizon > n:
            raise SeriesLengthError(
                f"initial window {self.initial_window} plus horizon {self.horizon} exceeds {n} observations")
        return list(range(self.initial_window, n - self.horizon + 1, self.step))

    def to_dict(self):
        return asdict(self)


@dataclass
class FoldRecord:
    origin: int
    train_start: int
    forecasts: np.ndarray = None
    actuals: np.ndarray = None
    mse: float = float("nan")
    mape: float = float("nan")
    vwap_error: float = None
    status: str = "ok"
    message: str = ""
    model: str = ""

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {
            "origin": self.origin,
            "train_start": self.train_start,
            "forecasts": None if self.forecasts is None else self.forecasts.tolist(),
            "actuals": None if self.actuals is None else self.actuals.tolist(),
            "mse": None if np.isnan(self.mse) else self.mse,
            "mape": None if np.isnan(self.mape) else self.mape,
            "vwap_error": self.vwap_error,
            "status": self.status,
            "message": self.message,
            "model": self.model,
        }


@dataclass
class CvReport:
    label: str
    config: CvConfig
    folds: list = field(default_factory=list)
    covariates: tuple = ()

    @property
    def successful(self):
        return [f for f in self.folds if f.ok]

    @property
    def failed(self):
        return len(self.folds) - len(self.successful)

    @property
    def failures(self):
        return [{"model": self.label, "origin": f.origin, "message": f.message} for f in self.folds if not f.ok]

    def _mean(self, attr):
        values = np.array([getattr(f, attr) for f in self.successful], dtype=float)
        values = values[~np.isnan(values)]
        return float(values.mean()) if len(values) else float("nan")

    @property
    def mean_mse(self):
        return self._mean("mse")

    @property
    def mean_mape(self):
        return self._mean("mape")

    @property
    def mean_vwap_error(self):
        values = [f.vwap_error for f in self.successful if f.vwap_error is not None]
        return float(np.mean(values)) if values else None

    def order_tally(self):
        """How often each fitted model label was used across successful folds"""
        return dict(Counter(f.model for f in self.successful).most_common())

    def forecast_series(self, index):
        """Successful fold forecasts placed on `index` (the series' timestamps)"""
        out = pd.Series(np.nan, index=index, name="forecast")
        for f in self.successful:
            out.iloc[f.origin:f.origin + len(f.forecasts)] = f.forecasts
        return out

    def to_frame(self):
        return pd.DataFrame([
            {"origin": f.origin, "train_start": f.train_start, "status": f.status, "model": f.model,
             "mse": f.mse, "mape": f.mape, "vwap_error": f.vwap_error}
            for f in self.folds
        ])

    def to_dict(self):
        return {
            "label": self.label,
            "config": self.config.to_dict(),
            "covariates": list(self.covariates),
            "aggregates": {
                "mean_mse": self.mean_mse,
                "mean_mape": self.mean_mape,
                "mean_vwap_error": self.mean_vwap_error,
                "folds": len(self.folds),
                "failed": self.failed,
            },
            "order_tally": self.order_tally(),
            "folds": [f.to_dict() for f in self.folds],
        }


def lag_exog(X, h):
    """Shift every column down by h rows so the values needed over a horizon are already observed"""
    lagged = np.full_like(X.columns, np.nan)
    if h < len(X):
        lagged[h:] = X.columns[:len(X) - h]
    return ExogMatrix(X.names, lagged, min(X.valid_from + h, len(X)), X.index)


def _as_exog(X, n):
    if X is None:
        return None
    if not isinstance(X, ExogMatrix):
        values = np.asarray(X, dtype=float)
        values = values[:, None] if values.ndim == 1 else values
        defined = np.flatnonzero(~np.isnan(values).any(axis=1))
        X = ExogMatrix(tuple(f"x{i + 1}" for i in range(values.shape[1])), values,
                       int(defined[0]) if len(defined) else len(values))
    if len(X) != n:
        raise ShapeError(f"exogenous matrix has {len(X)} rows for {n} observations")
    return X


def _run_fold(forecaster, y, X, origin, offset, cfg, prices):
    h = cfg.horizon
    start = 0 if cfg.window_policy == "expanding" else max(0, origin - cfg.initial_window)
    record = FoldRecord(origin=origin + offset, train_start=start + offset)
    actual = y[origin:origin + h]
    try:
        X_train = X_future = None
        if X is not None:
            X_train = X.rows(start, origin)
            if cfg.exog_policy == "lag":
                X_future = X.columns[origin:origin + h]
            else:
                X_future = np.repeat(X.columns[origin - 1:origin], h, axis=0)
            X_future = ExogMatrix(X.names, X_future)
        fitted = forecaster.fit(y[start:origin], X_train, origin=origin + offset)
        predicted = np.asarray(fitted.predict(h, X_future), dtype=float)
        if predicted.shape != actual.shape or not np.all(np.isfinite(predicted)):
            raise ModelError(f"forecast of shape {predicted.shape} is not finite or has the wrong length")
    except (VolcastError, np.linalg.LinAlgError, FloatingPointError) as e:
        record.status, record.message = "failed", str(e)
        logger.warning(f"[CV] fold at origin {record.origin} failed: {e}")
        return record

    record.forecasts, record.actuals = predicted, actual
    record.model = getattr(fitted, "label", getattr(forecaster, "label", ""))
    record.mse = mse(predicted, actual)
    try:
        record.mape = mape(predicted, actual)
    except MapeUndefinedError as e:
        record.message = str(e)
    if prices is not None:
        try:
            record.vwap_error = vwap_error(predicted, actual, prices[origin:origin + h])
        except ZeroVolumeError as e:
            record.message = str(e)
    return record


def rolling_origin_cv(y, forecaster, cfg, X=None, prices=None, n_jobs=None, label=None):
    """Fit on the window ending at each origin and forecast the next `horizon` values.

    Rows before the exogenous matrix's valid_from (after lagging, under the
    lag policy) are dropped first; reported origins stay on the original
    index. A fold whose fit or forecast fails is recorded as failed and left
    out of the aggregates.
    """
    y = np.asarray(getattr(y, "values", y), dtype=float)
    n = len(y)
    X = _as_exog(X, n)
    if X is not None and cfg.exog_policy == "lag":
        X = lag_exog(X, cfg.horizon)
    offset = X.valid_from if X is not None else 0
    if prices is not None:
        prices = np.asarray(prices, dtype=float)
        if len(prices) != n:
            raise ShapeError(f"{len(prices)} prices for {n} observations")
        prices = prices[offset:]
    if offset:
        y = y[offset:]
        X = X.rows(offset, n)
    return _cross_validate(y, forecaster, cfg, X, offset, prices, n_jobs, label)


def _cross_validate(y, forecaster, cfg, X, offset, prices, n_jobs, label):
    origins = cfg.origins(len(y))
    n_jobs = RUNTIME_CONFIG["N_JOBS"] if n_jobs is None else n_jobs
    label = label or getattr(forecaster, "label", type(forecaster).__name__)
    logger.info(f"[CV] {label}: {len(origins)} fold(s), horizon {cfg.horizon}, {cfg.window_policy} window")

    folds = []
    if getattr(forecaster, "per_fold", True) is False:
        # the order chosen on the first fold is reused, so it has to run first
        folds.append(_run_fold(forecaster, y, X, origins[0], offset, cfg, prices))
        origins = origins[1:]
    if n_jobs == 1 or len(origins) < 2:
        folds += [_run_fold(forecaster, y, X, o, offset, cfg, prices) for o in origins]
    else:
        folds += Parallel(n_jobs=n_jobs)(
            delayed(_run_fold)(forecaster, y, X, o, offset, cfg, prices) for o in origins
        )
    folds.sort(key=lambda f: f.origin)
    report = CvReport(label, cfg, folds, tuple(X.names) if X is not None else ())
    logger.info(
        f"[CV] {label}: mean MSE {report.mean_mse:.3e}, mean MAPE {report.mean_mape:.3f}, {report.failed} failed"
    )
    return report


# ====================
# FORWARD STEPWISE COVARIATE SELECTION
# ====================

def forward_stepwise(candidates, forecaster, bars, cfg, y=None, n_jobs=None):
    """Greedy covariate selection by average CV MSE.

    Every round tries adding each remaining indicator and keeps the best;
    selection stops as soon as no addition lowers the average MSE. All
    rounds, the covariate-free one included, use the rows where every
    candidate is defined. Within a round the incumbent and every candidate
    are scored on the folds all of them completed; folds that failed for any
    of them are left out and counted.
    Returns (selected labels, trail DataFrame).
    """
    if not candidates:
        raise BoundsError("forward stepwise needs at least one candidate")
    y = bars.volume if y is None else np.asarray(y, dtype=float)
    full = build_exog(bars, candidates)
    n = len(y)
    if len(full) != n:
        raise ShapeError(f"{len(full)} bars for {n} observations")
    if cfg.exog_policy == "lag":
        full = lag_exog(full, cfg.horizon)
    offset = full.valid_from
    y = y[offset:]
    full = full.rows(offset, n)
    prices = bars.close[offset:]

    def evaluate(names):
        X = full.select(names) if names else None
        label = " + ".join(names) if names else "None"
        return _cross_validate(y, forecaster, cfg, X, offset, prices, n_jobs, label)

    trail = []
    selected = []
    current = evaluate(())
    trail.append(_trail_row(0, "None", current, {f.origin for f in current.successful}, True))
    remaining = [spec.label for spec in candidates]
    step = 1
    while remaining:
        tried = [(name, evaluate(tuple(selected + [name]))) for name in remaining]
        shared = _shared_origins([current] + [r for _, r in tried])
        excluded = len(current.folds) - len(shared)
        if excluded:
            logger.warning(f"[STEPWISE] round {step}: {excluded} fold(s) failed for some candidate; "
                           f"scoring on the {len(shared)} shared fold(s)")
        incumbent = _scores_on(current, shared)[0]
        scored = [(name, _scores_on(r, shared)[0]) for name, r in tried]
        scored = [(name, value) for name, value in scored if not np.isnan(value)]
        best = min(scored, key=lambda item: item[1], default=None)
        improves = best is not None and not np.isnan(incumbent) and best[1] < incumbent
        for name, report in tried:
            trail.append(_trail_row(step, " + ".join(selected + [name]), report, shared,
                                    improves and name == best[0]))
        if not improves:
            logger.info(f"[STEPWISE] no candidate improves on {incumbent:.3e}; stopping")
            break
        selected.append(best[0])
        remaining.remove(best[0])
        current = dict(tried)[best[0]]
        logger.info(f"[STEPWISE] round {step}: added {best[0]} (mse {best[1]:.3e})")
        step += 1

    columns = ["round", "covariates", "mse", "mape", "folds", "failed", "selected"]
    return selected, pd.DataFrame(trail, columns=columns)


def _shared_origins(reports):
    return set.intersection(*({f.origin for f in r.successful} for r in reports))


def _scores_on(report, origins):
    """Mean MSE and MAPE over the successful folds whose origin is in `origins`"""
    folds = [f for f in report.successful if f.origin in origins]
    mses = np.array([f.mse for f in folds], dtype=float)
    mapes = np.array([f.mape for f in folds], dtype=float)
    mapes = mapes[~np.isnan(mapes)]
    return (float(mses.mean()) if len(mses) else float("nan"),
            float(mapes.mean()) if len(mapes) else float("nan"))


def _trail_row(step, covariates, report, origins, selected):
    mse_value, mape_value = _scores_on(report, origins)
    return {
        "round": step,
        "covariates": covariates,
        "mse": mse_value,
        "mape": mape_value,
        "folds": len(origins),
        "failed": report.failed,
        "selected": selected,
    }
