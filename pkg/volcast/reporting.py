"""
Reporting
Report files for the command-line pipelines: self-describing JSON, per-fold
CSV, plain-text metric tables and SVG charts.
"""

import logging
from datetime import datetime, timezone
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .utils.storage import save_json, write_csv, write_text  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no creation date so reruns give identical SVG files
plt.rcParams["svg.hashsalt"] = "volcast"
SVG_METADATA = {"Date": None, "Creator": "volcast"}


def write_report(out_dir, name, payload, run_config, timestamp=True):
    """JSON report embedding the resolved run configuration"""
    document = {"run_config": run_config, **payload}
    if timestamp:
        document["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return save_json(document, Path(out_dir) / f"{name}.json")


def write_failures(out_dir, failures):
    """failures.json manifest; written even when empty so a run always leaves one"""
    return save_json({"count": len(failures), "failures": failures}, Path(out_dir) / "failures.json")


def _cell(value, fmt):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "n/a"
    return fmt % value


def metric_table(rows, label_header):
    """Plain-text table: label | Average MSE | Average MAPE.

    `rows` holds (label, mse, mape) triples.
    """
    headers = (label_header, "Average MSE", "Average MAPE")
    body = [(str(label), _cell(m, "%.3e"), _cell(p, "%.3f")) for label, m, p in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]

    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(headers), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in body]
    return "\n".join(out) + "\n"


def write_table(out_dir, name, rows, label_header):
    text = metric_table(rows, label_header)
    write_text(text, Path(out_dir) / f"{name}.txt")
    return text


def write_frame(out_dir, name, frame):
    return write_csv(frame, Path(out_dir) / f"{name}.csv")


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"[REPORT] wrote {path}")
    return path


def line_chart(path, series, title, xlabel="", ylabel="", zero_line=False):
    """One line per entry of `series` ({label: (x, y)})"""
    fig, ax = plt.subplots(figsize=(9, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label, linewidth=1.2)
    if zero_line:
        ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(loc="best", fontsize="small")
    fig.autofmt_xdate()
    fig.tight_layout()
    return _save(fig, path)


def forecast_chart(path, index, actual, forecasts, title):
    """Actual volume with each model's stitched CV forecasts"""
    series = {"actual": (index, actual)}
    for label, values in forecasts.items():
        series[label] = (index, values)
    return line_chart(path, series, title, ylabel="volume")


def correlogram_chart(path, result, title):
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.vlines(result.lags, 0.0, result.values, linewidth=1.5)
    ax.axhline(0.0, color="black", linewidth=0.8)
    for bound in (result.band, -result.band):
        ax.axhline(bound, color="tab:blue", linestyle="--", linewidth=0.8)
    ax.set_title(title)
    ax.set_xlabel("lag")
    fig.tight_layout()
    return _save(fig, path)
