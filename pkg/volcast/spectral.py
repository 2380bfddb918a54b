"""
Spectral Forecasting
Periodogram, top-m Fourier frequency selection and the harmonic regression
used to extrapolate volume (frequency domain process representation, FDPR).
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import fft

from .exceptions import BoundsError, CollinearityError, FoldFailureError, SeriesLengthError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Periodogram:
    """Ordinates at the Fourier frequencies j/n, j = 1..floor(n/2)"""

    frequencies: np.ndarray
    power: np.ndarray
    n: int

    def __len__(self):
        return len(self.frequencies)

    def to_frame(self):
        return pd.DataFrame({"frequency": self.frequencies, "power": self.power})


@dataclass(frozen=True)
class HarmonicModel:
    frequencies: tuple
    cos_amplitudes: np.ndarray
    sin_amplitudes: np.ndarray
    intercept: float
    origin: int = 0
    n_train: int = 0

    @property
    def m(self):
        return len(self.frequencies)

    @property
    def amplitudes(self):
        """(cos, sin) pairs, one per frequency"""
        return np.column_stack([self.cos_amplitudes, self.sin_amplitudes])

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(len(t), self.intercept)
        for f, a, b in zip(self.frequencies, self.cos_amplitudes, self.sin_amplitudes):
            out += a * np.cos(2 * np.pi * f * t) + b * np.sin(2 * np.pi * f * t)
        return out


def periodogram(y):
    """I(j/n) = |sum_t (y_t - mean) e^{-2 pi i j t / n}|^2 / n for j = 1..floor(n/2)"""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 4:
        raise SeriesLengthError(f"periodogram needs at least 4 values, got {n}")
    coefs = fft.rfft(y - y.mean())
    j = np.arange(1, n // 2 + 1)
    power = np.abs(coefs[j]) ** 2 / n
    return Periodogram(j / n, power, n)


def top_m_frequencies(pg, m):
    """The m strongest frequencies (ties toward the lower frequency), ascending"""
    if m < 1 or m > len(pg):
        raise BoundsError(f"m must lie in [1, {len(pg)}], got {m}")
    # lexsort keys run last-to-first: power descending, then frequency ascending
    ranked = np.lexsort((pg.frequencies, -pg.power))[:m]
    return tuple(float(f) for f in np.sort(pg.frequencies[ranked]))


def _design(freqs, t):
    columns, labels = [np.ones(len(t))], ["intercept"]
    for f in freqs:
        columns.append(np.cos(2 * np.pi * f * t))
        labels.append(f"cos({f:g})")
        columns.append(np.sin(2 * np.pi * f * t))
        labels.append(f"sin({f:g})")
    return np.column_stack(columns), labels


def fit_harmonics(y, freqs, origin=0):
    """Least squares of y on {1, cos(2 pi f t), sin(2 pi f t)} with t = origin, origin+1, ...

    The sine column at the Nyquist frequency vanishes on the integer grid; its
    amplitude is pinned at 0.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    freqs = tuple(float(f) for f in freqs)
    for f in freqs:
        if not 0.0 < f <= 0.5:
            raise BoundsError(f"frequency {f} outside (0, 0.5]")
    seen = set()
    for f in freqs:
        if f in seen:
            raise CollinearityError(f"cos({f:g})")
        seen.add(f)
    if 2 * len(freqs) + 1 > n:
        raise SeriesLengthError(f"{len(freqs)} frequencies need at least {2 * len(freqs) + 1} values, got {n}")

    t = origin + np.arange(n)
    A, labels = _design(freqs, t)
    keep = np.flatnonzero(np.any(np.abs(A) > 1e-9, axis=0))
    reduced = A[:, keep]
    if np.linalg.matrix_rank(reduced) < reduced.shape[1]:
        raise CollinearityError(labels[keep[-1]])
    coef, *_ = np.linalg.lstsq(reduced, y, rcond=None)
    full = np.zeros(A.shape[1])
    full[keep] = coef
    return HarmonicModel(
        frequencies=freqs,
        cos_amplitudes=full[1::2].copy(),
        sin_amplitudes=full[2::2].copy(),
        intercept=float(full[0]),
        origin=origin,
        n_train=n,
    )


def forecast_harmonics(model, start, h):
    """Evaluate the fitted harmonics at t = start..start+h-1 on the training time axis"""
    if h < 0:
        raise BoundsError("forecast horizon must be non-negative")
    if start < model.origin + model.n_train:
        raise BoundsError(f"forecast start {start} lies inside the training window")
    return model.evaluate(start + np.arange(h))


def select_m(y, candidate_ms, cv_config, n_jobs=1):
    """Rolling-origin CV of the FDPR forecaster for each m.

    Frequencies are re-selected from each fold's training window, so a
    sinusoid only sits on a Fourier frequency when the training length is a
    multiple of its period. Keep initial_window and step multiples of the
    slowest period of interest; otherwise leakage spreads its power over
    neighbouring ordinates and larger m tends to win.

    Returns (best m by average MSE, table of m / mse / mape / failed folds).
    """
    from .evaluation import rolling_origin_cv
    from .forecasters import FdprForecaster

    candidate_ms = list(candidate_ms)
    if not candidate_ms:
        raise BoundsError("no candidate m values")
    rows = []
    for m in candidate_ms:
        report = rolling_origin_cv(y, FdprForecaster(m), cv_config, n_jobs=n_jobs)
        rows.append({"m": m, "mse": report.mean_mse, "mape": report.mean_mape, "failed": report.failed})
        logger.info(f"[SPECTRAL] m={m}: mse={report.mean_mse:.3e} mape={report.mean_mape:.3f}")
    table = pd.DataFrame(rows, columns=["m", "mse", "mape", "failed"])
    scored = table.dropna(subset=["mse"])
    if scored.empty:
        raise FoldFailureError([f"m={m}: every fold failed" for m in candidate_ms])
    best = int(scored.loc[scored["mse"].idxmin(), "m"])
    logger.info(f"[SPECTRAL] selected m={best}")
    return best, table
