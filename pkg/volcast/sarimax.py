"""
SARIMAX Estimation
Seasonal ARIMA with exogenous regressors: orders, exact Gaussian
likelihood, maximum-likelihood fitting, forecasting and automatic order search.

Model, with w_t = (1-B)^d (1-B^s)^D y_t and x_t differenced the same way:

    phi(B) Phi(B^s) (w_t - mu - x_t'beta) = theta(B) Theta(B^s) Z_t,   Z_t ~ N(0, sigma2)

The reported drift is delta = mu * phi(1) * Phi(1), the constant of the
differenced model equation.
"""

import itertools
import logging
import re
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import LinAlgWarning, solve_discrete_lyapunov
from scipy.optimize import minimize
from scipy.signal import lfilter

from .config import KPSS_CRITICAL, OPTIMIZER_CONFIG, RUNTIME_CONFIG, SEARCH_BOUNDS, SEASONAL_STRENGTH_THRESHOLD
from .diagnostics import kpss_statistic, seasonal_strength
from .exceptions import (
    BoundsError, CollinearityError, ConvergenceError, DataError, ExogHorizonError,
    ModelDomainError, ModelError, OrderSearchError, SeriesLengthError, ShapeError,
)
from .timeseries_core import DifferenceSpec, difference, difference_polynomial, integrate
from .utils.storage import load_json, save_json

logger = logging.getLogger(__name__)

_ORDER_RE = re.compile(
    r"^\s*\((\d+),(\d+),(\d+)\)\s*(?:\((\d+),(\d+),(\d+)\)\s*\[(\d+)\])?\s*(drift)?\s*$"
)
PARTIAL_LIMIT = 1.0 - 1e-8


# ====================
# ORDERS AND PARAMETERS
# ====================

@dataclass(frozen=True)
class ModelOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 1
    with_drift: bool = False

    def __post_init__(self):
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0:
            raise BoundsError("model orders must be non-negative")
        if self.s < 1:
            raise BoundsError("seasonal period must be at least 1")
        if self.P + self.D + self.Q > 0 and self.s < 2:
            raise BoundsError("seasonal terms need a period s >= 2")
        if self.with_drift and self.d + self.D > 1:
            raise BoundsError("drift is only defined when d + D <= 1")

    @classmethod
    def parse(cls, text, with_drift=None):
        """Parse `(p,d,q)(P,D,Q)[s]` or `(p,d,q)`, optionally suffixed with `drift`"""
        match = _ORDER_RE.match(re.sub(r"(?<=[(,\d])\s+|\s+(?=[,)\]])", "", text))
        if not match:
            raise BoundsError(f"cannot parse model order {text!r}")
        p, d, q, P, D, Q, s, drift = match.groups()
        seasonal = (int(P), int(D), int(Q), int(s)) if P is not None else (0, 0, 0, 1)
        drift = bool(drift) if with_drift is None else with_drift
        return cls(int(p), int(d), int(q), *seasonal, with_drift=drift)

    @property
    def seasonal(self):
        return self.P + self.D + self.Q > 0

    @property
    def diff_spec(self):
        return DifferenceSpec(self.d, self.D, self.s)

    @property
    def n_arma(self):
        return self.p + self.q + self.P + self.Q

    def n_params(self, k_exog=0):
        """Estimated parameters including sigma2"""
        return self.n_arma + int(self.with_drift) + k_exog + 1

    def __str__(self):
        text = f"({self.p},{self.d},{self.q})"
        if self.seasonal:
            text += f"({self.P},{self.D},{self.Q})[{self.s}]"
        return text

    @property
    def label(self):
        return str(self) + (" drift" if self.with_drift else "")


@dataclass(frozen=True)
class SarimaxParams:
    phi: tuple = ()
    theta: tuple = ()
    Phi: tuple = ()
    Theta: tuple = ()
    delta: float = 0.0
    beta: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        for name in ("phi", "theta", "Phi", "Theta", "beta"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def ar_poly(self, s):
        return np.convolve(_lag_poly(self.phi, -1.0), _lag_poly(self.Phi, -1.0, s))

    def ma_poly(self, s):
        return np.convolve(_lag_poly(self.theta, 1.0), _lag_poly(self.Theta, 1.0, s))

    def mean(self):
        """mu = delta / (phi(1) Phi(1))"""
        return self.delta / ((1.0 - sum(self.phi)) * (1.0 - sum(self.Phi)))

    def check(self, order, k_exog=None):
        """Raise ModelDomainError unless the params fit `order` and lie in the admissible region"""
        sizes = {"phi": order.p, "theta": order.q, "Phi": order.P, "Theta": order.Q}
        for name, size in sizes.items():
            if len(getattr(self, name)) != size:
                raise ModelDomainError(f"{name} has {len(getattr(self, name))} values, order needs {size}")
        if k_exog is not None and len(self.beta) != k_exog:
            raise ModelDomainError(f"beta has {len(self.beta)} values for {k_exog} regressors")
        if not self.sigma2 > 0:
            raise ModelDomainError("sigma2 must be positive")
        if not order.with_drift and self.delta != 0:
            raise ModelDomainError("delta is non-zero but the order has no drift term")
        for name, coefs, sign in (("AR", self.phi, -1), ("seasonal AR", self.Phi, -1),
                                  ("MA", self.theta, 1), ("seasonal MA", self.Theta, 1)):
            if not _roots_outside(_lag_poly(coefs, sign)):
                kind = "stationary" if "AR" == name[-2:] else "invertible"
                raise ModelDomainError(f"{name} polynomial is not {kind}")
        return self

    def to_dict(self):
        return {
            "phi": list(self.phi), "theta": list(self.theta),
            "Phi": list(self.Phi), "Theta": list(self.Theta),
            "delta": self.delta, "beta": list(self.beta), "sigma2": self.sigma2,
        }


@dataclass
class FittedModel:
    order: ModelOrder
    params: SarimaxParams
    loglik: float
    aic: float
    n_obs: int
    exog_names: tuple = ()
    n_params: int = 1
    fit_diagnostics: dict = field(default_factory=dict)

    @property
    def label(self):
        return self.order.label

    @property
    def bic(self):
        return self.n_params * np.log(self.n_obs) - 2.0 * self.loglik

    def to_dict(self):
        return {
            "order": str(self.order),
            "with_drift": self.order.with_drift,
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "aic": self.aic,
            "n_obs": self.n_obs,
            "n_params": self.n_params,
            "exog_names": list(self.exog_names),
            "fit_diagnostics": {k: v for k, v in self.fit_diagnostics.items() if k != "search_trace"},
        }

    @classmethod
    def from_dict(cls, payload):
        order = ModelOrder.parse(payload["order"], with_drift=payload.get("with_drift", False))
        return cls(
            order=order,
            params=SarimaxParams(**payload["params"]),
            loglik=payload["loglik"],
            aic=payload["aic"],
            n_obs=payload["n_obs"],
            exog_names=tuple(payload.get("exog_names", ())),
            n_params=payload.get("n_params", order.n_params(len(payload.get("exog_names", ())))),
            fit_diagnostics=payload.get("fit_diagnostics", {}),
        )


@dataclass(frozen=True)
class Forecast:
    mean: np.ndarray
    se: np.ndarray


def save_model(model, path):
    return save_json(model.to_dict(), path)


def load_model(path):
    payload = load_json(path)
    if not payload:
        raise DataError(f"no model found in {path}")
    return FittedModel.from_dict(payload)


# ====================
# POLYNOMIALS AND REPARAMETERIZATION
# ====================

def _lag_poly(coefs, sign, step=1):
    """1 + sign * sum_j coefs[j] B^{(j+1) step}"""
    coefs = np.asarray(coefs, dtype=float)
    poly = np.zeros(len(coefs) * step + 1)
    poly[0] = 1.0
    if len(coefs):
        poly[step::step] = sign * coefs
    return poly


def _roots_outside(poly):
    poly = np.trim_zeros(np.asarray(poly, dtype=float), "b")
    if len(poly) <= 1:
        return True
    return bool(np.all(np.abs(np.roots(poly[::-1])) > 1.0))


def constrain_pacf(x):
    """Unconstrained reals -> coefficients c with 1 - sum c_j B^j stationary.

    tanh maps each value to a partial autocorrelation in (-1, 1), and the
    Durbin-Levinson recursion turns the partials into coefficients.
    """
    # tanh rounds to +-1 for large inputs; keep the partials strictly inside
    partial = np.clip(np.tanh(np.asarray(x, dtype=float)), -PARTIAL_LIMIT, PARTIAL_LIMIT)
    coefs = np.empty(0)
    for r in partial:
        coefs = np.concatenate([coefs - r * coefs[::-1], [r]])
    return coefs


def unconstrain_pacf(coefs, limit=0.99):
    """Inverse of constrain_pacf (step-down recursion); partials are clipped to +-limit"""
    coefs = np.asarray(coefs, dtype=float).copy()
    partial = np.empty(len(coefs))
    for k in range(len(coefs) - 1, -1, -1):
        r = float(np.clip(coefs[-1], -limit, limit))
        partial[k] = r
        head = coefs[:-1]
        coefs = (head + r * head[::-1]) / (1.0 - r * r)
    return np.arctanh(partial)


class _Layout:
    """Positions of each parameter block in the optimizer vector"""

    def __init__(self, order, k_exog):
        self.order = order
        sizes = [("phi", order.p), ("Phi", order.P), ("theta", order.q), ("Theta", order.Q),
                 ("mu", int(order.with_drift)), ("beta", k_exog)]
        self.slices, start = {}, 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def unpack(self, x):
        sl = self.slices
        return (
            constrain_pacf(x[sl["phi"]]),
            constrain_pacf(x[sl["Phi"]]),
            -constrain_pacf(x[sl["theta"]]),
            -constrain_pacf(x[sl["Theta"]]),
            float(x[sl["mu"]][0]) if self.order.with_drift else 0.0,
            np.asarray(x[sl["beta"]], dtype=float),
        )

    def pack(self, phi, Phi, theta, Theta, mu, beta):
        x = np.zeros(self.size)
        sl = self.slices
        x[sl["phi"]] = unconstrain_pacf(phi)
        x[sl["Phi"]] = unconstrain_pacf(Phi)
        x[sl["theta"]] = unconstrain_pacf(-np.asarray(theta))
        x[sl["Theta"]] = unconstrain_pacf(-np.asarray(Theta))
        if self.order.with_drift:
            x[sl["mu"]] = mu
        x[sl["beta"]] = beta
        return x


# ====================
# STATE SPACE FILTER
# ====================

def _state_space(ar_poly, ma_poly):
    """Harvey representation of an ARMA(r, r-1) with r = max(p, q+1)"""
    p_tot, q_tot = len(ar_poly) - 1, len(ma_poly) - 1
    r = max(p_tot, q_tot + 1)
    phi = np.zeros(r)
    phi[:p_tot] = -ar_poly[1:]
    theta = np.zeros(r - 1)
    theta[:q_tot] = ma_poly[1:]
    T = np.zeros((r, r))
    T[:, 0] = phi
    T[:-1, 1:] = np.eye(r - 1)
    R = np.concatenate([[1.0], theta])
    return phi, theta, T, R


def kalman_innovations(u, ar_poly, ma_poly, gain_tol=OPTIMIZER_CONFIG["GAIN_TOL"]):
    """Innovations e_t and their variances f_t (in units of sigma2) for a zero-mean ARMA.

    Starts from the stationary state covariance. Once the state covariance has
    converged to R R' the remaining innovations follow the steady-state
    recursion, which is evaluated in one pass with a linear filter.
    Returns (e, f, a_next, P_next): the one-step-ahead state after the last
    observation and its covariance.
    """
    u = np.asarray(u, dtype=float)
    phi, theta, T, R = _state_space(ar_poly, ma_poly)
    r = len(phi)
    RR = np.outer(R, R)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            P = solve_discrete_lyapunov(T, RR)
    except (np.linalg.LinAlgError, ValueError):
        P = np.full((r, r), np.nan)
    a = np.zeros(r)
    n = len(u)
    e = np.empty(n)
    f = np.empty(n)
    for t in range(n):
        F = P[0, 0]
        if not (np.isfinite(F) and F > 0):
            # degenerate state covariance; the likelihood is undefined from here on
            e[t:], f[t:] = np.nan, np.nan
            return e, f, a, P
        v = u[t] - a[0]
        e[t], f[t] = v, F
        K = P[:, 0] / F
        filtered = a + K * v
        P_filtered = P - np.outer(K, P[0, :])
        a = T @ filtered
        P = T @ P_filtered @ T.T + RR
        if np.max(np.abs(P - RR)) < gain_tol:
            rest = u[t + 1:]
            if len(rest):
                # transposed direct form II state of phi(B)/theta(B) equals -a
                b = np.concatenate([[1.0], -phi])
                den = np.concatenate([[1.0], theta, [0.0]])
                e[t + 1:], zf = lfilter(b, den, rest, zi=-a)
                f[t + 1:] = 1.0
                a = -zf
            return e, f, a, RR.copy()
    return e, f, a, P


def _gaussian_loglik(e, f, sigma2):
    n = len(e)
    return -0.5 * (n * np.log(2.0 * np.pi) + np.sum(np.log(sigma2 * f)) + np.sum(e * e / f) / sigma2)


# ====================
# REGRESSION
# ====================

@dataclass(frozen=True)
class ExogRegression:
    residuals: np.ndarray
    beta: np.ndarray
    intercept: float
    pruned: tuple = ()


def exog_array(X, n=None):
    """(names, float matrix or None) from an ExogMatrix, ndarray or None"""
    if X is None:
        return (), None
    if hasattr(X, "columns") and hasattr(X, "names"):
        names, values = tuple(X.names), np.asarray(X.columns, dtype=float)
    else:
        values = np.asarray(X, dtype=float)
        values = values[:, None] if values.ndim == 1 else values
        names = tuple(f"x{i + 1}" for i in range(values.shape[1]))
    if values.shape[1] == 0:
        return (), None
    if n is not None and values.shape[0] != n:
        raise ShapeError(f"exogenous matrix has {values.shape[0]} rows for {n} observations")
    if np.isnan(values).any():
        raise DataError("exogenous matrix contains undefined (warm-up) rows")
    return names, values


def _zero_columns(values, tol=0.0):
    return np.all(np.abs(values) <= tol, axis=0)


def regress_out_exog(y, X, intercept=True):
    """Ordinary least squares of y on X (plus intercept).

    Identically-zero columns are pruned with beta pinned at 0. A column that
    adds no rank to the columns before it raises CollinearityError.
    """
    y = np.asarray(y, dtype=float)
    names, values = exog_array(X, len(y))
    k = len(names)
    beta = np.zeros(k)
    if values is None:
        mean = float(y.mean()) if intercept else 0.0
        return ExogRegression(y - mean, beta, mean, ())

    zero = _zero_columns(values)
    pruned = tuple(n for n, z in zip(names, zero) if z)
    design = [np.ones(len(y))] if intercept else []
    labels = ["intercept"] if intercept else []
    for j, name in enumerate(names):
        if zero[j]:
            continue
        candidate = np.column_stack(design + [values[:, j]])
        if np.linalg.matrix_rank(candidate) < candidate.shape[1]:
            raise CollinearityError(name)
        design.append(values[:, j])
        labels.append(name)

    if not design:
        return ExogRegression(y.copy(), beta, 0.0, pruned)
    A = np.column_stack(design)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted_intercept = float(coef[0]) if intercept else 0.0
    kept = [j for j in range(k) if not zero[j]]
    beta[kept] = coef[1:] if intercept else coef
    return ExogRegression(y - A @ coef, beta, fitted_intercept, pruned)


# ====================
# LIKELIHOOD
# ====================

def _differenced(order, y, X):
    spec = order.diff_spec
    y = np.asarray(y, dtype=float)
    w = difference(y, spec)
    names, values = exog_array(X, len(y))
    Xd = None
    if values is not None:
        Xd = np.column_stack([difference(values[:, j], spec) for j in range(values.shape[1])])
    return w, names, Xd


def log_likelihood(order, params, y, X=None):
    """Exact Gaussian log-likelihood of y under (order, params).

    y is differenced internally; X rows align with y.
    """
    w, names, Xd = _differenced(order, y, X)
    params.check(order, k_exog=len(names))
    u = w - params.mean()
    if Xd is not None:
        u = u - Xd @ np.asarray(params.beta)
    e, f, _, _ = kalman_innovations(u, params.ar_poly(order.s), params.ma_poly(order.s))
    value = float(_gaussian_loglik(e, f, params.sigma2))
    return value if np.isfinite(value) else -np.inf


# ====================
# ESTIMATION
# ====================

def _minimize(objective, x0, options):
    start = objective(x0)
    fatol = options["REL_TOL"] * (max(1.0, abs(start)) if np.isfinite(start) else 1.0)
    return minimize(
        objective, x0, method=options["METHOD"],
        options={
            "maxiter": options["MAX_ITER"],
            "xatol": 1e-4,
            "fatol": fatol,
            "adaptive": len(x0) > 4,
        },
    )


def fit(order, y, X=None, options=None):
    """Maximum-likelihood fit of a (S)ARIMA(X) model.

    Starting values come from OLS (mean and regressors) followed by a
    conditional-sum-of-squares fit of the ARMA coefficients. The exact
    likelihood (sigma2 profiled out) is then maximized by Nelder-Mead with
    jittered restarts.
    """
    options = {**OPTIMIZER_CONFIG, **(options or {})}
    rng = np.random.default_rng(options.get("SEED", RUNTIME_CONFIG["SEED"]))
    w, names, Xd = _differenced(order, y, X)
    n = len(w)

    kept = []
    if Xd is not None:
        zero = _zero_columns(Xd)
        kept = [j for j in range(len(names)) if not zero[j]]
        if len(kept) < len(names):
            logger.info(f"[SARIMAX] pruned zero regressor(s): {', '.join(names[j] for j in range(len(names)) if zero[j])}")
    k = len(kept)
    n_params = order.n_params(k)
    if n <= n_params + 1:
        raise SeriesLengthError(f"{n} differenced observations cannot support {n_params} parameters for {order.label}")

    # work in standardized units
    scale = float(np.std(w)) or float(np.sqrt(np.mean(w * w))) or 1.0
    ws = w / scale
    Xs, xscale = None, np.ones(k)
    if k:
        Xk = Xd[:, kept]
        xscale = np.std(Xk, axis=0)
        xscale[xscale == 0] = np.sqrt(np.mean(Xk * Xk, axis=0))[xscale == 0]
        Xs = Xk / xscale

    layout = _Layout(order, k)
    s = order.s
    floor = options["SIGMA2_FLOOR"] / (scale * scale)

    def residual(x):
        phi, Phi, theta, Theta, mu, beta = layout.unpack(x)
        u = ws - mu
        if k:
            u = u - Xs @ beta
        ar = np.convolve(_lag_poly(phi, -1.0), _lag_poly(Phi, -1.0, s))
        ma = np.convolve(_lag_poly(theta, 1.0), _lag_poly(Theta, 1.0, s))
        return u, ar, ma

    def neg_profile_loglik(x):
        u, ar, ma = residual(x)
        e, f, _, _ = kalman_innovations(u, ar, ma)
        sigma2 = float(np.mean(e * e / f))
        sigma2 = sigma2 if sigma2 > floor else floor
        value = -_gaussian_loglik(e, f, sigma2)
        return value if np.isfinite(value) else np.inf

    def css(x):
        u, ar, ma = residual(x)
        e = lfilter(ar, ma, u)[len(ar) - 1:]
        value = float(np.mean(e * e)) if len(e) else float(np.mean(u * u))
        return value if np.isfinite(value) else np.inf

    # starting values
    reg = regress_out_exog(ws, Xs, intercept=order.with_drift)
    x0 = np.zeros(layout.size)
    if order.with_drift:
        x0[layout.slices["mu"]] = reg.intercept
    x0[layout.slices["beta"]] = reg.beta

    iterations, converged, runs = 0, True, 0
    if layout.size:
        start = _minimize(css, x0, options)
        iterations += start.nit
        # a CSS optimum on the edge of the admissible region can leave the exact likelihood undefined
        x_start = start.x if np.isfinite(neg_profile_loglik(start.x)) else x0
        best = _minimize(neg_profile_loglik, x_start, options)
        iterations += best.nit
        runs, converged = 1, bool(best.success)
        values = [best.fun]
        for _ in range(options["RESTARTS"]):
            jittered = best.x + rng.normal(0.0, options["JITTER"], layout.size)
            result = _minimize(neg_profile_loglik, jittered, options)
            iterations += result.nit
            runs += 1
            values.append(result.fun)
            converged = converged or bool(result.success)
            if result.fun < best.fun:
                best = result
        # runs that stopped on the iteration cap but agree on the optimum count as converged
        values = np.sort(values)
        if not converged and len(values) > 1:
            converged = bool(values[1] - values[0] <= options["REL_TOL"] * 1e2 * max(1.0, abs(values[0])))
        x_best = best.x
    else:
        x_best = x0

    # back to original units
    phi, Phi, theta, Theta, mu_s, beta_s = layout.unpack(x_best)
    u, ar, ma = residual(x_best)
    e, f, _, _ = kalman_innovations(u, ar, ma)
    sigma2 = float(np.mean(e * e / f)) * scale * scale
    sigma2 = sigma2 if np.isfinite(sigma2) and sigma2 > options["SIGMA2_FLOOR"] else options["SIGMA2_FLOOR"]
    beta = np.zeros(len(names))
    if k:
        beta[kept] = beta_s * scale / xscale
    mu = mu_s * scale
    delta = mu * (1.0 - phi.sum()) * (1.0 - Phi.sum()) if order.with_drift else 0.0
    params = SarimaxParams(phi, theta, Phi, Theta, delta, beta, sigma2)
    loglik = log_likelihood(order, params, y, X)
    model = FittedModel(
        order=order,
        params=params,
        loglik=loglik,
        aic=2.0 * n_params - 2.0 * loglik,
        n_obs=n,
        exog_names=names,
        n_params=n_params,
        fit_diagnostics={"iterations": int(iterations), "converged": converged, "runs": runs},
    )
    if not converged:
        raise ConvergenceError(f"{order.label} did not converge after {runs} run(s)", best=model)
    logger.debug(f"[SARIMAX] fitted {order.label}: loglik={loglik:.4f} aic={model.aic:.4f}")
    return model


# ====================
# FORECASTING
# ====================

def psi_weights(order, params, h):
    """First h MA(infinity) weights of the integrated model"""
    if h <= 0:
        return np.empty(0)
    ar = np.convolve(params.ar_poly(order.s), difference_polynomial(order.diff_spec))
    impulse = np.zeros(h)
    impulse[0] = 1.0
    return lfilter(params.ma_poly(order.s), ar, impulse)


def forecast(model, y, X_past=None, h=1, X_future=None):
    """h-step point forecasts in volume units with standard errors from the psi-weights"""
    order, params = model.order, model.params
    if h < 0:
        raise BoundsError("forecast horizon must be non-negative")
    if h == 0:
        return Forecast(np.empty(0), np.empty(0))
    y = np.asarray(y, dtype=float)
    k = len(model.exog_names)

    u_future = np.full(h, params.mean())
    if k:
        if X_past is None or X_future is None:
            raise ExogHorizonError(f"model uses {', '.join(model.exog_names)}; past and future regressors required")
        _, past = exog_array(X_past, len(y))
        _, future = exog_array(X_future, h)
        if past.shape[1] != k or future.shape[1] != k:
            raise ShapeError(f"model has {k} regressors")
        combined = np.vstack([past, future])
        spec = order.diff_spec
        Xd = np.column_stack([difference(combined[:, j], spec) for j in range(k)])
        beta = np.asarray(params.beta)
        u_future = u_future + Xd[-h:] @ beta
        w, _, _ = _differenced(order, y, None)
        u = w - params.mean() - Xd[:-h] @ beta
    else:
        w, _, _ = _differenced(order, y, None)
        u = w - params.mean()

    ar, ma = params.ar_poly(order.s), params.ma_poly(order.s)
    _, _, a, _ = kalman_innovations(u, ar, ma)
    _, _, T, _ = _state_space(ar, ma)
    w_hat = np.empty(h)
    for j in range(h):
        w_hat[j] = u_future[j] + a[0]
        a = T @ a

    spec = order.diff_spec
    mean = integrate(w_hat, spec, y[len(y) - spec.lost:]) if spec.lost else w_hat
    psi = psi_weights(order, params, h)
    se = np.sqrt(params.sigma2 * np.cumsum(psi * psi))
    return Forecast(mean, se)


# ====================
# ORDER SELECTION
# ====================

def choose_differencing(y, s=1, bounds=None):
    """(d, D): D=1 when the seasonal strength exceeds the threshold, then KPSS repeated differencing for d"""
    bounds = {**SEARCH_BOUNDS, **(bounds or {})}
    x = np.asarray(y, dtype=float)
    D = 0
    if s > 1 and bounds["max_D"] >= 1 and len(x) >= 3 * s:
        if seasonal_strength(x, s) > SEASONAL_STRENGTH_THRESHOLD:
            D = 1
            x = difference(x, DifferenceSpec(0, 1, s))
    d = 0
    while d < bounds["max_d"] and len(x) > 10 and np.std(x) > 0 and kpss_statistic(x) > KPSS_CRITICAL:
        x = np.diff(x)
        d += 1
    logger.info(f"[SEARCH] differencing chosen: d={d}, D={D} (s={s})")
    return d, D


def _score(model, criterion):
    return model.aic if criterion == "aic" else model.bic


def _try_fit(order, y, X, options):
    try:
        return fit(order, y, X, options), None
    except (ModelError, DataError, np.linalg.LinAlgError, FloatingPointError) as e:
        return None, f"{order.label}: {e}"


def _within(order, bounds):
    return (order.p <= bounds["max_p"] and order.q <= bounds["max_q"]
            and order.P <= bounds["max_P"] and order.Q <= bounds["max_Q"])


def _make_order(p, d, q, P, D, Q, s, drift):
    if s < 2:
        P, Q = 0, 0
    try:
        return ModelOrder(p, d, q, P, D, Q, s if (P + D + Q) else 1, with_drift=drift)
    except BoundsError:
        return None


def _fit_many(orders, y, X, options, n_jobs):
    if n_jobs == 1 or len(orders) < 2:
        return [_try_fit(o, y, X, options) for o in orders]
    return Parallel(n_jobs=n_jobs)(delayed(_try_fit)(o, y, X, options) for o in orders)


def auto_order_search(y, X=None, bounds=None, s=1, d=None, D=None, criterion="aic",
                      allow_drift=True, options=None, n_jobs=1):
    """Stepwise neighbourhood search minimizing AIC (or BIC).

    Starts from (1,d,1)(1,D,1) and a few small seeds, then repeatedly moves to
    the best neighbour (each order +-1, p and q together, P and Q together,
    drift toggled) until no neighbour improves the criterion.
    """
    bounds = {**SEARCH_BOUNDS, **(bounds or {})}
    if criterion not in ("aic", "bic"):
        raise BoundsError(f"unknown criterion {criterion!r}")
    if d is None or D is None:
        auto_d, auto_D = choose_differencing(y, s, bounds)
        d = auto_d if d is None else d
        D = (auto_D if s > 1 else 0) if D is None else D
    drift_ok = allow_drift and d + D <= 1

    fitted, failures, trace = {}, [], []

    def evaluate(orders):
        fresh = [o for o in dict.fromkeys(orders) if o is not None and o not in fitted and _within(o, bounds)]
        for o, (model, error) in zip(fresh, _fit_many(fresh, y, X, options, n_jobs)):
            fitted[o] = model
            if model is None:
                failures.append(error)
                logger.debug(f"[SEARCH] {error}")
            else:
                trace.append((o.label, _score(model, criterion)))

    seeds = [(1, 1, 1, 1), (0, 0, 0, 0), (1, 0, 1, 0), (0, 1, 0, 1)]
    evaluate([_make_order(p, d, q, P, D, Q, s, drift_ok) for p, q, P, Q in seeds])
    candidates = [o for o, m in fitted.items() if m is not None]
    if not candidates:
        raise OrderSearchError(failures)
    current = min(candidates, key=lambda o: _score(fitted[o], criterion))

    for _ in range(100):
        moves = []
        for dp, dq, dP, dQ in [(1, 0, 0, 0), (-1, 0, 0, 0), (0, 1, 0, 0), (0, -1, 0, 0),
                               (0, 0, 1, 0), (0, 0, -1, 0), (0, 0, 0, 1), (0, 0, 0, -1),
                               (1, 1, 0, 0), (-1, -1, 0, 0), (0, 0, 1, 1), (0, 0, -1, -1)]:
            p, q, P, Q = current.p + dp, current.q + dq, current.P + dP, current.Q + dQ
            if min(p, q, P, Q) >= 0:
                moves.append(_make_order(p, d, q, P, D, Q, s, current.with_drift))
        if drift_ok:
            moves.append(replace(current, with_drift=not current.with_drift))
        evaluate(moves)
        neighbours = [o for o in moves if o is not None and fitted.get(o) is not None]
        if not neighbours:
            break
        best = min(neighbours, key=lambda o: _score(fitted[o], criterion))
        if _score(fitted[best], criterion) < _score(fitted[current], criterion):
            current = best
        else:
            break

    model = fitted[current]
    model.fit_diagnostics["search_trace"] = trace
    model.fit_diagnostics["search_failures"] = list(failures)
    logger.info(f"[SEARCH] selected {model.label} ({criterion}={_score(model, criterion):.3f}) after {len(trace)} fits")
    return model


def exhaustive_order_search(y, X=None, bounds=None, s=1, d=0, D=0, criterion="aic",
                            allow_drift=True, options=None, n_jobs=1):
    """Fit every order inside the bounds and return the best"""
    bounds = {**SEARCH_BOUNDS, **(bounds or {})}
    drift_ok = allow_drift and d + D <= 1
    seasonal_P = range(bounds["max_P"] + 1) if s > 1 else [0]
    seasonal_Q = range(bounds["max_Q"] + 1) if s > 1 else [0]
    orders = [
        _make_order(p, d, q, P, D, Q, s, drift)
        for p, q, P, Q, drift in itertools.product(
            range(bounds["max_p"] + 1), range(bounds["max_q"] + 1), seasonal_P, seasonal_Q,
            (False, True) if drift_ok else (False,),
        )
    ]
    orders = list(dict.fromkeys(o for o in orders if o is not None))
    results = _fit_many(orders, y, X, options, n_jobs)
    fitted = [m for m, _ in results if m is not None]
    if not fitted:
        raise OrderSearchError([err for _, err in results])
    best = min(fitted, key=lambda m: _score(m, criterion))
    best.fit_diagnostics["search_trace"] = [(m.label, _score(m, criterion)) for m in fitted]
    logger.info(f"[SEARCH] exhaustive grid of {len(orders)} orders selected {best.label}")
    return best
