"""
Volcast Command Line
Entry point wiring ingestion, indicators, models and evaluation into the
intraday and daily experiment pipelines.

Exit codes: 0 ok, 1 usage, 2 data, 3 model convergence or failed folds.
"""

import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, time, timedelta
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .config import (
    CALENDAR_CONFIG, REPLICATE_M_GRIDS, REPLICATE_MODELS, REPLICATE_VWAP_MODELS, RUNTIME_CONFIG,
    configure_logging,
)
from .diagnostics import acf, decompose_moving_average, kpss_statistic, pacf, seasonal_strength
from .evaluation import (
    CvConfig, baseline_vwap_no_change, baseline_vwap_rolling, forward_stepwise, period_vwaps,
    rolling_origin_cv, session_vwap_errors, weekly_vwap_grouping,
)
from .exceptions import BoundsError, DataError, SeriesLengthError, VolcastError
from .forecasters import AutoSarimaxForecaster, OracleForecaster, SarimaxForecaster, parse_model
from .indicators import KINDS, IndicatorSpec, build_exog
from .ingest import filter_regular_session, load_calendar, parse_bars, restrict_window, session_completeness, write_bars
from .reporting import (
    correlogram_chart, forecast_chart, line_chart, write_failures, write_frame, write_report, write_table,
)
from .sarimax import choose_differencing
from .simulate import synthetic_daily_bars, synthetic_intraday_bars
from .spectral import periodogram, select_m

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Resolved settings of one command; embedded in every report"""

    data: Path = None
    calendar: Path = None
    start: str = None
    end: str = None
    granularity: str = None
    period: int = None
    session_open: time = None
    session_close: time = None
    bars_per_session: int = None
    models: tuple = ()
    indicators: tuple = ()
    search: str = "stepwise"
    per_fold: bool = False
    oracle_self_test: bool = False
    horizon: int = None
    initial_window: int = None
    window_policy: str = "expanding"
    exog_policy: str = "freeze"
    m_grid: tuple = ()
    max_lag: int = None
    seed: int = RUNTIME_CONFIG["SEED"]
    out: Path = Path("reports")
    n_jobs: int = RUNTIME_CONFIG["N_JOBS"]
    timestamp: bool = True
    cv: dict = field(default_factory=dict)

    def to_dict(self):
        payload = asdict(self)
        payload.pop("timestamp")
        return payload

    @property
    def options(self):
        return {"SEED": self.seed}


# ====================
# SHARED PLUMBING
# ====================

def _load(run, allow_empty=False):
    """Parse, window and session-filter the bars; resolve granularity and period"""
    if run.data is None:
        raise click.UsageError("--data is required")
    overrides = {k: v for k, v in (("session_open", run.session_open), ("session_close", run.session_close),
                                   ("bars_per_session", run.bars_per_session)) if v is not None}
    cal = load_calendar(run.calendar, **overrides)
    bars = parse_bars(run.data, tz=cal.timezone)
    if run.start or run.end:
        dates = bars.session_dates()
        if len(dates):
            bars = restrict_window(bars, run.start or dates[0], run.end or dates[-1])
    bars = filter_regular_session(bars, cal)

    if run.granularity and run.granularity != bars.granularity:
        raise click.BadParameter(
            f"file holds {bars.granularity} bars but --granularity {run.granularity} was given",
            param_hint="--granularity")
    if len(bars) == 0:
        if not allow_empty:
            raise SeriesLengthError("no bars left after windowing and session filtering")
        # nothing to infer a period from
        run = replace(run, granularity=bars.granularity, period=run.period or cal.bars_per_session)
        logger.warning("[CLI] no bars left after windowing and session filtering")
        return bars, cal, run
    period = run.period
    if period is None:
        period = session_completeness(bars, cal).expected if bars.granularity == "intraday" else 1
    if bars.granularity == "intraday" and period < 2:
        raise click.BadParameter("intraday data needs a seasonal period of at least 2", param_hint="--period")
    run = replace(run, granularity=bars.granularity, period=int(period))
    logger.info(f"[CLI] {len(bars)} {run.granularity} bars, period {run.period}")
    return bars, cal, run


def _cv_config(run, n):
    horizon = run.horizon or (run.period if run.granularity == "intraday" else 1)
    cfg = CvConfig.default(n, run.granularity, run.period, horizon=horizon, initial_window=run.initial_window,
                           window_policy=run.window_policy, exog_policy=run.exog_policy)
    return cfg, replace(run, cv=cfg.to_dict())


def _season(run):
    return run.period if run.granularity == "intraday" else 1


def _model(text, run):
    try:
        return parse_model(text, s=_season(run), per_fold=run.per_fold, search=run.search, options=run.options)
    except BoundsError as e:
        raise click.BadParameter(str(e), param_hint="--model")


def _forecasters(run, y):
    models = run.models or REPLICATE_MODELS[run.granularity]
    forecasters = [_model(m, run) for m in models]
    if run.oracle_self_test:
        forecasters.append(OracleForecaster(y))
    return forecasters


def _exog(run, bars):
    if not run.indicators:
        return None
    return build_exog(bars, [IndicatorSpec.parse(text) for text in run.indicators])


def _finish(run, failures):
    write_failures(run.out, failures)
    if failures:
        logger.warning(f"[CLI] {len(failures)} failure(s); see {Path(run.out) / 'failures.json'}")
        return 3
    return 0


def _evaluate_models(run, bars, cfg, X=None):
    y = bars.volume
    prices = bars.close
    reports = []
    for forecaster in _forecasters(run, y):
        report = rolling_origin_cv(y, forecaster, cfg, X=X, prices=prices, n_jobs=run.n_jobs)
        # only the state-space models regress on covariates
        if X is not None and isinstance(forecaster, (SarimaxForecaster, AutoSarimaxForecaster)):
            report.label = f"{report.label} + " + " + ".join(X.names)
        reports.append(report)
    return reports


# ====================
# PIPELINES
# ====================

def run_ingest(run):
    bars, cal, run = _load(run, allow_empty=True)
    out = Path(run.out)
    write_bars(bars, out / "bars.csv")
    report = session_completeness(bars, cal)
    write_report(out, "completeness", {"bars": len(bars), "completeness": report.to_dict()},
                 run.to_dict(), run.timestamp)
    click.echo(f"{len(bars)} bars written to {out / 'bars.csv'}")
    return 0


def run_backtest(run):
    bars, _, run = _load(run)
    cfg, run = _cv_config(run, len(bars))
    reports = _evaluate_models(run, bars, cfg, _exog(run, bars))

    out = Path(run.out)
    write_report(out, "backtest", {"reports": [r.to_dict() for r in reports]}, run.to_dict(), run.timestamp)
    folds = pd.concat([r.to_frame().assign(model=r.label) for r in reports], ignore_index=True)
    write_frame(out, "backtest_folds", folds)
    text = write_table(out, "backtest", [(r.label, r.mean_mse, r.mean_mape) for r in reports], "Model")
    click.echo(text, nl=False)
    for r in reports:
        tally = r.order_tally()
        if len(tally) > 1:
            click.echo(f"{r.label} orders used: " + ", ".join(f"{k} x{v}" for k, v in tally.items()))

    index = bars.local_index
    forecast_chart(out / "backtest_forecasts.svg", index, bars.volume,
                   {r.label: r.forecast_series(bars.frame.index).to_numpy() for r in reports},
                   f"Rolling-origin forecasts ({run.granularity})")
    return _finish(run, [f for r in reports for f in r.failures])


def run_select(run):
    return _select(run)[0]


def _select(run):
    """Runs the stepwise selection; returns (exit code, selected indicators as `kind:window` texts)."""
    bars, _, run = _load(run)
    cfg, run = _cv_config(run, len(bars))
    model = (run.models or REPLICATE_MODELS[run.granularity])[0]
    if model == "auto":
        raise click.BadParameter("stepwise selection needs a fixed order", param_hint="--model")
    forecaster = _model(model, run)
    candidates = [IndicatorSpec.parse(text) for text in (run.indicators or KINDS)]
    selected, trail = forward_stepwise(candidates, forecaster, bars, cfg, n_jobs=run.n_jobs)

    out = Path(run.out)
    write_frame(out, "select_trail", trail)
    write_report(out, "select", {"model": forecaster.label, "selected": selected,
                                 "trail": trail.to_dict(orient="records")}, run.to_dict(), run.timestamp)
    text = write_table(out, "select", list(trail[["covariates", "mse", "mape"]].itertuples(index=False)),
                       "Covariates Used")
    click.echo(text, nl=False)
    click.echo("Selected: " + (", ".join(selected) or "none"))
    failures = [{"covariates": row.covariates, "failed_folds": int(row.failed)}
                for row in trail.itertuples() if row.failed]
    by_label = {spec.label: str(spec) for spec in candidates}
    return _finish(run, failures), tuple(by_label[label] for label in selected)


def run_spectral(run):
    bars, _, run = _load(run)
    cfg, run = _cv_config(run, len(bars))
    grid = run.m_grid or REPLICATE_M_GRIDS[run.granularity]
    best, table = select_m(bars.volume, grid, cfg, n_jobs=run.n_jobs)

    out = Path(run.out)
    write_frame(out, "spectral", table)
    write_frame(out, "periodogram", periodogram(bars.volume).to_frame())
    write_report(out, "spectral", {"best_m": best, "table": table.to_dict(orient="records")},
                 run.to_dict(), run.timestamp)
    text = write_table(out, "spectral", list(table[["m", "mse", "mape"]].itertuples(index=False)), "m")
    click.echo(text, nl=False)
    click.echo(f"Best m: {best}")
    failures = [{"m": int(row.m), "failed_folds": int(row.failed)} for row in table.itertuples() if row.failed]
    return _finish(run, failures)


def _model_vwap_errors(bars, report, granularity):
    series = report.forecast_series(bars.frame.index)
    if granularity == "intraday":
        frame = session_vwap_errors(bars, series)
        return frame.rename(columns={"session": "period"})
    frame, _ = weekly_vwap_grouping(bars, series)
    return frame.rename(columns={"week": "period"})


def run_vwap_report(run):
    bars, _, run = _load(run)
    cfg, run = _cv_config(run, len(bars))
    if not run.models:
        run = replace(run, models=REPLICATE_VWAP_MODELS[run.granularity])
    reports = _evaluate_models(run, bars, cfg, _exog(run, bars))

    frames = []
    for report in reports:
        errors = _model_vwap_errors(bars, report, run.granularity)
        frames.append(errors[["period", "error"]].assign(series=report.label))
    evaluated = set().union(*(set(f["period"]) for f in frames)) if frames else set()

    vwaps = period_vwaps(bars, by="session" if run.granularity == "intraday" else "week")
    for label, baseline in (("no change", baseline_vwap_no_change(vwaps)),
                            ("3-period rolling", baseline_vwap_rolling(vwaps, 3))):
        baseline = baseline.rename_axis("period").reset_index()
        if evaluated:
            baseline = baseline[baseline["period"].isin(evaluated)]
        frames.append(baseline[["period", "error"]].assign(series=label))

    errors = pd.concat(frames, ignore_index=True)
    errors["period"] = errors["period"].astype(str)
    out = Path(run.out)
    write_frame(out, "vwap_errors", errors[["series", "period", "error"]])
    summary = {
        label: {"periods": int(len(g)), "mean_abs_error": float(g["error"].abs().mean()),
                "max_abs_error": float(g["error"].abs().max())}
        for label, g in errors.groupby("series", sort=True) if len(g)
    }
    write_report(out, "vwap", {"summary": summary, "reports": [r.to_dict() for r in reports]},
                 run.to_dict(), run.timestamp)

    wide = errors.pivot_table(index="period", columns="series", values="error", aggfunc="first").sort_index()
    x = np.arange(len(wide))
    line_chart(out / "vwap_errors.svg", {c: (x, wide[c].to_numpy()) for c in wide.columns},
               "VWAP tracking error: models vs naive baselines",
               xlabel="session" if run.granularity == "intraday" else "week", ylabel="relative error",
               zero_line=True)
    for label, stats in summary.items():
        click.echo(f"{label}: max |error| {stats['max_abs_error']:.4%} over {stats['periods']} period(s)")
    return _finish(run, [f for r in reports for f in r.failures])


def run_diagnose(run):
    bars, _, run = _load(run)
    y = bars.volume
    out = Path(run.out)
    max_lag = run.max_lag or min(len(y) - 1, max(3 * run.period, 40))
    results = {"acf": acf(y, max_lag), "pacf": pacf(y, max_lag)}
    for name, result in results.items():
        write_frame(out, name, result.to_frame())
        correlogram_chart(out / f"{name}.svg", result, f"{name.upper()} of volume ({run.granularity})")
    write_frame(out, "periodogram", periodogram(y).to_frame())

    summary = {"n": len(y), "kpss": kpss_statistic(y)}
    if run.period >= 2 and len(y) >= 2 * run.period:
        parts = decompose_moving_average(y, run.period)
        write_frame(out, "decomposition", parts.to_frame(observed=y))
        index = bars.local_index
        line_chart(out / "decomposition.svg",
                   {"observed": (index, y), "trend": (index, parts.trend), "seasonal": (index, parts.seasonal)},
                   f"Moving-average decomposition (period {run.period})", ylabel="volume")
        summary["seasonal_strength"] = seasonal_strength(y, run.period)
    d, D = choose_differencing(y, _season(run))
    summary["suggested_differencing"] = {"d": d, "D": D}
    write_report(out, "diagnose", summary, run.to_dict(), run.timestamp)
    click.echo(f"KPSS {summary['kpss']:.3f}; suggested d={d}, D={D}")
    return 0


# ====================
# COMMANDS
# ====================

class VolcastGroup(click.Group):
    """Maps library errors and click usage errors onto the volcast exit codes"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else 0
        except click.UsageError as e:
            e.show()
            code = 1
        except click.ClickException as e:
            e.show()
            code = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        except VolcastError as e:
            logger.error(f"[CLI] {type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            code = e.exit_code
        if standalone_mode:
            sys.exit(code)
        return code


def _time(ctx, param, value):
    if value is None:
        return None
    try:
        return time.fromisoformat(value)
    except ValueError:
        raise click.BadParameter(f"expected HH:MM, got {value!r}")


def _int_list(ctx, param, value):
    if not value:
        return ()
    try:
        return tuple(int(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")


def _indicator_list(ctx, param, value):
    if not value:
        return ()
    try:
        return tuple(str(spec) for spec in IndicatorSpec.parse_list(value))
    except DataError as e:
        raise click.BadParameter(str(e))


DATA_OPTIONS = [
    click.option("--data", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="OHLCV bar CSV"),
    click.option("--calendar", type=click.Path(dir_okay=False, path_type=Path),
                 help="Holiday list (default: bundled US market holidays)"),
    click.option("--from", "start", help="First local date kept (YYYY-MM-DD)"),
    click.option("--to", "end", help="Last local date kept (YYYY-MM-DD)"),
    click.option("--granularity", type=click.Choice(["intraday", "daily"]), help="Expected bar granularity"),
    click.option("--period", type=click.IntRange(min=1), help="Seasonal period (default: bars per session)"),
    click.option("--session-open", callback=_time, help=f"Session open, default {CALENDAR_CONFIG['SESSION_OPEN']:%H:%M}"),
    click.option("--session-close", callback=_time, help=f"Session close, default {CALENDAR_CONFIG['SESSION_CLOSE']:%H:%M}"),
    click.option("--bars-per-session", type=click.IntRange(min=1), help="Expected bars per complete session"),
    click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=Path("reports"),
                 show_default=True, help="Output directory"),
    click.option("--seed", type=int, default=RUNTIME_CONFIG["SEED"], show_default=True),
    click.option("--jobs", "n_jobs", type=int, default=RUNTIME_CONFIG["N_JOBS"], show_default=True,
                 help="Parallel workers for folds and candidates"),
    click.option("--no-timestamp", "no_timestamp", is_flag=True, help="Omit generation time from reports"),
]

CV_OPTIONS = [
    click.option("--horizon", type=click.IntRange(min=1), help="Forecast horizon (default: one session / one day)"),
    click.option("--initial-window", type=click.IntRange(min=1), help="Initial training rows (default: half)"),
    click.option("--window-policy", type=click.Choice(["expanding", "sliding"]), default="expanding", show_default=True),
    click.option("--exog-policy", type=click.Choice(["freeze", "lag"]), default="freeze", show_default=True,
                 help="How covariates are supplied over the forecast horizon"),
]

MODEL_OPTIONS = [
    click.option("--model", "models", multiple=True,
                 help="Order like '(1,0,3)(0,1,2)[8]', 'auto', 'fdpr:<m>' or 'mean'; repeatable"),
    click.option("--indicators", callback=_indicator_list, help="Covariates, e.g. 'adx,ema:10,mom'"),
    click.option("--search", type=click.Choice(["stepwise", "exhaustive"]), default="stepwise", show_default=True),
    click.option("--per-fold", is_flag=True, help="Re-run the auto order search on every fold"),
]


def with_options(*groups):
    def decorate(f):
        for group in groups:
            for option in reversed(group):
                f = option(f)
        return f
    return decorate


def _run_config(**kwargs):
    kwargs["timestamp"] = not kwargs.pop("no_timestamp", False)
    for key in ("models", "indicators", "m_grid"):
        if key in kwargs and kwargs[key] is None:
            kwargs[key] = ()
    if "models" in kwargs:
        kwargs["models"] = tuple(kwargs["models"])
    return RunConfig(**kwargs)


@click.group(cls=VolcastGroup)
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="Override VOLCAST_LOG_LEVEL")
def cli(log_level):
    """Trading-volume forecasting: SARIMA(X), harmonic regression and VWAP evaluation."""
    configure_logging(log_level)


@cli.command()
@with_options(DATA_OPTIONS)
def ingest(**kwargs):
    """Clean a bar file: drop weekends, holidays, off-session and incomplete sessions."""
    return run_ingest(_run_config(**kwargs))


@cli.command()
@with_options(DATA_OPTIONS, CV_OPTIONS, MODEL_OPTIONS)
@click.option("--oracle-self-test", is_flag=True, help="Add a forecaster that returns the truth")
def backtest(**kwargs):
    """Rolling-origin cross validation of one or more models."""
    return run_backtest(_run_config(**kwargs))


@cli.command()
@with_options(DATA_OPTIONS, CV_OPTIONS, MODEL_OPTIONS)
def select(**kwargs):
    """Forward stepwise selection of technical-indicator covariates."""
    return run_select(_run_config(**kwargs))


@cli.command()
@with_options(DATA_OPTIONS, CV_OPTIONS)
@click.option("--m-grid", callback=_int_list, help="Candidate numbers of frequencies, e.g. 2,3,5,10")
def spectral(**kwargs):
    """Choose the number of harmonic frequencies by cross validation."""
    return run_spectral(_run_config(**kwargs))


@cli.command("vwap-report")
@with_options(DATA_OPTIONS, CV_OPTIONS, MODEL_OPTIONS)
def vwap_report(**kwargs):
    """VWAP tracking errors of model forecasts against naive baselines."""
    return run_vwap_report(_run_config(**kwargs))


@cli.command()
@with_options(DATA_OPTIONS)
@click.option("--max-lag", type=click.IntRange(min=1), help="Correlogram length")
def diagnose(**kwargs):
    """ACF, PACF, decomposition and periodogram of the volume series."""
    return run_diagnose(_run_config(**kwargs))


@cli.command()
@with_options(DATA_OPTIONS, CV_OPTIONS)
def replicate(**kwargs):
    """Run select, backtest, spectral and vwap-report with the study settings.

    The covariates chosen by select feed the backtest and vwap-report runs.
    """
    run = _run_config(**kwargs)
    click.echo("== select")
    code, selected = _select(replace(run, out=Path(run.out) / "select"))
    codes = [code]
    logger.info(f"[CLI] covariates carried forward: {', '.join(selected) or 'none'}")
    chosen = replace(run, indicators=selected)
    for name, step, base in (("backtest", run_backtest, chosen), ("spectral", run_spectral, run),
                             ("vwap", run_vwap_report, chosen)):
        click.echo(f"== {name}")
        codes.append(step(replace(base, out=Path(run.out) / name)))
    return max(codes)


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Bars CSV to write")
@click.option("--granularity", type=click.Choice(["intraday", "daily"]), default="intraday", show_default=True)
@click.option("--sessions", type=click.IntRange(min=2), default=120, show_default=True,
              help="Trading sessions (days for daily bars)")
@click.option("--bars-per-session", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--session-open", callback=_time, default="09:00", show_default=True)
@click.option("--seed", type=int, default=RUNTIME_CONFIG["SEED"], show_default=True)
def synth(out, granularity, sessions, bars_per_session, session_open, seed):
    """Write a synthetic bar file with a U-shaped intraday volume profile."""
    rng = np.random.default_rng(seed)
    if granularity == "intraday":
        bars = synthetic_intraday_bars(sessions, rng, bars_per_session=bars_per_session, session_open=session_open)
    else:
        bars = synthetic_daily_bars(sessions, rng)
    write_bars(bars, out)
    click.echo(f"{len(bars)} synthetic {granularity} bars written to {out}")
    if granularity == "intraday":
        close = (datetime.combine(date.min, session_open) + timedelta(hours=bars_per_session)).time()
        click.echo(f"read it back with --session-open {session_open:%H:%M} --session-close {close:%H:%M}")
    return 0


def main():
    return cli.main(prog_name="volcast")


if __name__ == "__main__":
    main()
