import warnings

import numpy as np
import pytest
from scipy.linalg import toeplitz
from scipy.signal import lfilter
from scipy.stats import multivariate_normal

from volcast.exceptions import (
    BoundsError, CollinearityError, ConvergenceError, ExogHorizonError, ModelDomainError,
    SeriesLengthError,
)
from volcast.sarimax import (
    FittedModel, ModelOrder, SarimaxParams, auto_order_search, choose_differencing, constrain_pacf,
    exhaustive_order_search, fit, forecast, load_model, log_likelihood, regress_out_exog, save_model,
    kalman_innovations, unconstrain_pacf, _lag_poly, _roots_outside,
)
from volcast.simulate import simulate_arma, simulate_sarima


def _dense_loglik(y, order, params, terms=4000):
    """Exact likelihood from the autocovariances of the truncated MA(infinity) expansion"""
    impulse = np.zeros(terms)
    impulse[0] = 1.0
    psi = lfilter(params.ma_poly(order.s), params.ar_poly(order.s), impulse)
    n = len(y)
    gamma = params.sigma2 * np.array([np.dot(psi[:terms - k], psi[k:]) for k in range(n)])
    return multivariate_normal(np.zeros(n), toeplitz(gamma)).logpdf(y)


# ====================
# ORDERS AND PARAMETERS
# ====================

@pytest.mark.parametrize("text, expected", [
    ("(1,0,3)(0,1,2)[8]", ModelOrder(1, 0, 3, 0, 1, 2, 8)),
    ("( 1, 0, 3 ) ( 0, 1, 2 ) [8]", ModelOrder(1, 0, 3, 0, 1, 2, 8)),
    ("(3,1,2)", ModelOrder(3, 1, 2)),
    ("(0,1,1) drift", ModelOrder(0, 1, 1, with_drift=True)),
])
def test_order_parsing(text, expected):
    assert ModelOrder.parse(text) == expected


def test_order_text_and_bounds():
    order = ModelOrder(1, 0, 3, 0, 1, 2, 8)
    assert str(order) == "(1,0,3)(0,1,2)[8]"
    assert ModelOrder.parse(str(order)) == order
    assert ModelOrder(0, 1, 1, with_drift=True).label == "(0,1,1) drift"
    assert order.n_arma == 6 and order.n_params(2) == 9
    for text in ("(1,0)", "1,0,1", "(1,0,1)(1,0,1)", "(a,0,1)"):
        with pytest.raises(BoundsError):
            ModelOrder.parse(text)
    with pytest.raises(BoundsError):
        ModelOrder(1, 1, 0, 0, 1, 0, 8, with_drift=True)
    with pytest.raises(BoundsError):
        ModelOrder(1, 0, 0, 1, 0, 0, 1)


def test_params_domain_checks():
    order = ModelOrder(1, 0, 1)
    SarimaxParams(phi=(0.5,), theta=(0.3,)).check(order)
    with pytest.raises(ModelDomainError, match="stationary"):
        SarimaxParams(phi=(1.2,), theta=(0.3,)).check(order)
    with pytest.raises(ModelDomainError, match="invertible"):
        SarimaxParams(phi=(0.5,), theta=(-1.5,)).check(order)
    with pytest.raises(ModelDomainError):
        SarimaxParams(phi=(0.5,), theta=(0.3,), sigma2=0.0).check(order)
    with pytest.raises(ModelDomainError):
        SarimaxParams(phi=(0.5,), theta=(0.3,), delta=1.0).check(order)
    with pytest.raises(ModelDomainError):
        SarimaxParams(phi=(0.5, 0.1), theta=(0.3,)).check(order)
    assert SarimaxParams(phi=(0.5,), delta=1.0).mean() == pytest.approx(2.0)


def test_pacf_reparameterization_is_invertible_and_stationary():
    x = np.array([0.3, -0.5, 0.2])
    coefs = constrain_pacf(x)
    assert _roots_outside(_lag_poly(coefs, -1.0))
    np.testing.assert_allclose(unconstrain_pacf(coefs), x, atol=1e-10)
    assert len(constrain_pacf([])) == 0


def test_saturated_partials_stay_inside_the_unit_interval():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        coefs = constrain_pacf([40.0, -60.0])
    assert np.all(np.isfinite(coefs))
    # the last coefficient is the last partial autocorrelation
    assert abs(coefs[-1]) < 1.0
    assert abs(constrain_pacf([40.0])[0]) < 1.0


# ====================
# LIKELIHOOD
# ====================

@pytest.mark.parametrize("order, params, n", [
    (ModelOrder(1, 0, 1), SarimaxParams(phi=(0.5,), theta=(0.4,), sigma2=2.0), 40),
    (ModelOrder(0, 0, 1), SarimaxParams(theta=(0.6,), sigma2=0.5), 150),
    (ModelOrder(2, 0, 0), SarimaxParams(phi=(0.5, -0.3)), 60),
    (ModelOrder(1, 0, 1, 1, 0, 0, 4), SarimaxParams(phi=(0.3,), theta=(-0.2,), Phi=(0.6,), sigma2=1.5), 50),
])
def test_likelihood_matches_dense_gaussian(order, params, n, rng):
    y = simulate_sarima(order, params, n, rng)
    assert log_likelihood(order, params, y) == pytest.approx(_dense_loglik(y, order, params), rel=1e-7)


def _random_params(rng):
    p, q = rng.integers(0, 4, size=2)
    while p + q > 3:
        p, q = rng.integers(0, 4, size=2)
    phi = constrain_pacf(rng.uniform(-1.5, 1.5, p))
    theta = -constrain_pacf(rng.uniform(-1.5, 1.5, q))
    return ModelOrder(int(p), 0, int(q)), SarimaxParams(phi=phi, theta=theta, sigma2=rng.uniform(0.5, 2.0))


def test_likelihood_matches_dense_gaussian_on_random_draws(rng):
    for _ in range(50):
        order, params = _random_params(rng)
        y = simulate_sarima(order, params, int(rng.integers(10, 51)), rng)
        assert log_likelihood(order, params, y) == pytest.approx(_dense_loglik(y, order, params), rel=1e-6)


def test_white_noise_likelihood(rng):
    n = 25
    assert log_likelihood(ModelOrder(), SarimaxParams(), np.zeros(n)) == pytest.approx(-n / 2 * np.log(2 * np.pi))
    y = rng.normal(0.0, 2.0, n)
    model = fit(ModelOrder(), y)
    sigma2 = np.mean(y * y)
    assert model.params.sigma2 == pytest.approx(sigma2)
    assert model.loglik == pytest.approx(-n / 2 * (np.log(2 * np.pi) + np.log(sigma2) + 1))


def test_unit_root_leaves_innovations_undefined():
    e, f, _, _ = kalman_innovations(np.ones(5), np.array([1.0, -1.0]), np.array([1.0]))
    assert np.isnan(e).all() and np.isnan(f).all()


def test_likelihood_differences_internally(rng):
    y = rng.normal(size=80).cumsum()
    params = SarimaxParams(phi=(0.4,))
    assert log_likelihood(ModelOrder(1, 1, 0), params, y) == pytest.approx(
        log_likelihood(ModelOrder(1, 0, 0), params, np.diff(y)))


def test_likelihood_rejects_inadmissible_params(rng):
    with pytest.raises(ModelDomainError):
        log_likelihood(ModelOrder(1, 0, 0), SarimaxParams(phi=(1.0,)), rng.normal(size=20))


# ====================
# ESTIMATION
# ====================

def test_fit_recovers_ar1(rng):
    y = simulate_arma([0.6], [], 1500, rng)
    model = fit(ModelOrder(1, 0, 0), y)
    assert model.params.phi[0] == pytest.approx(0.6, abs=0.06)
    assert model.params.sigma2 == pytest.approx(1.0, rel=0.15)
    assert model.n_params == 2
    assert model.aic == pytest.approx(2 * 2 - 2 * model.loglik)
    assert model.bic == pytest.approx(2 * np.log(1500) - 2 * model.loglik)
    assert model.fit_diagnostics["converged"]
    assert model.loglik == pytest.approx(log_likelihood(model.order, model.params, y))


def test_fit_recovers_arma11(rng):
    y = simulate_arma([0.5], [0.3], 3000, rng)
    model = fit(ModelOrder(1, 0, 1), y)
    assert model.params.phi[0] == pytest.approx(0.5, abs=0.1)
    assert model.params.theta[0] == pytest.approx(0.3, abs=0.1)


def test_fit_with_drift(rng):
    y = np.cumsum(0.5 + rng.normal(size=400))
    model = fit(ModelOrder(0, 1, 0, with_drift=True), y)
    assert model.params.delta == pytest.approx(0.5, abs=0.15)
    assert model.n_params == 2
    fc = forecast(model, y, h=5)
    assert fc.mean[0] == pytest.approx(y[-1] + model.params.delta)
    np.testing.assert_allclose(np.diff(fc.mean), model.params.delta)


def test_fit_with_regressor_and_zero_column(rng):
    n = 500
    x = rng.normal(size=n)
    y = 3.0 * x + simulate_arma([0.5], [], n, rng)
    model = fit(ModelOrder(1, 0, 0), y, x)
    assert model.params.beta[0] == pytest.approx(3.0, abs=0.15)
    assert model.exog_names == ("x1",)

    padded = fit(ModelOrder(1, 0, 0), y, np.column_stack([x, np.zeros(n)]))
    assert padded.params.beta[1] == 0.0
    assert padded.loglik == pytest.approx(model.loglik)
    assert padded.aic == pytest.approx(model.aic)
    future = rng.normal(size=3)
    np.testing.assert_allclose(
        forecast(padded, y, np.column_stack([x, np.zeros(n)]), 3, np.column_stack([future, np.zeros(3)])).mean,
        forecast(model, y, x, 3, future).mean,
    )
    with pytest.raises(ExogHorizonError):
        forecast(model, y, h=3)


def test_fit_recovers_seasonal_ar(rng):
    order = ModelOrder(0, 0, 0, 1, 0, 0, 8)
    y = simulate_sarima(order, SarimaxParams(Phi=(0.5,)), 800, rng)
    model = fit(order, y)
    assert model.params.Phi[0] == pytest.approx(0.5, abs=0.1)


def test_fit_recovers_two_regression_coefficients(rng):
    n = 500
    X = rng.normal(size=(n, 2))
    y = X @ [2.0, -3.0] + simulate_arma([0.5], [], n, rng)
    model = fit(ModelOrder(1, 0, 0), y, X)
    # three standard errors of the GLS estimate
    np.testing.assert_allclose(model.params.beta, [2.0, -3.0], atol=0.15)
    assert model.params.phi[0] == pytest.approx(0.5, abs=0.1)


def test_fit_uses_the_configured_optimizer(rng, monkeypatch):
    import volcast.sarimax as sarimax

    methods = []
    real = sarimax.minimize

    def recording(objective, x0, method=None, options=None):
        methods.append(method)
        return real(objective, x0, method="Nelder-Mead", options=options)

    monkeypatch.setattr(sarimax, "minimize", recording)
    fit(ModelOrder(1, 0, 0), simulate_arma([0.5], [], 200, rng), options={"METHOD": "Powell", "RESTARTS": 1})
    assert methods and set(methods) == {"Powell"}


def test_collinear_regressors():
    x = np.arange(1.0, 11.0)
    with pytest.raises(CollinearityError):
        regress_out_exog(np.ones(10), np.column_stack([x, 2 * x]))
    reg = regress_out_exog(2 + 3 * x, x)
    assert reg.intercept == pytest.approx(2.0)
    assert reg.beta[0] == pytest.approx(3.0)


def test_fit_rejects_short_series():
    with pytest.raises(SeriesLengthError):
        fit(ModelOrder(2, 0, 2), np.arange(6.0))


def test_non_convergence_carries_best_model(rng):
    y = simulate_arma([0.5, -0.2], [0.4, 0.2], 300, rng)
    with pytest.raises(ConvergenceError) as info:
        fit(ModelOrder(2, 0, 2), y, options={"MAX_ITER": 2, "RESTARTS": 1})
    assert info.value.best is not None
    assert info.value.best.fit_diagnostics["converged"] is False
    assert info.value.exit_code == 3


def test_fit_is_reproducible_with_a_seed(rng):
    y = simulate_arma([0.5], [0.3], 300, rng)
    first = fit(ModelOrder(1, 0, 1), y, options={"SEED": 7})
    second = fit(ModelOrder(1, 0, 1), y, options={"SEED": 7})
    assert first.params == second.params


def test_saved_model_loads_back(rng, tmp_path):
    y = simulate_arma([0.6], [], 200, rng)
    model = fit(ModelOrder(1, 0, 0, with_drift=True), y + 10)
    path = save_model(model, tmp_path / "model.json")
    loaded = load_model(path)
    assert loaded.order == model.order
    assert loaded.params == model.params
    assert loaded.aic == pytest.approx(model.aic)
    assert isinstance(FittedModel.from_dict(model.to_dict()), FittedModel)


# ====================
# FORECASTING
# ====================

def test_ar1_forecast_and_standard_errors():
    order = ModelOrder(1, 0, 0)
    model = FittedModel(order, SarimaxParams(phi=(0.8,), sigma2=1.0), 0.0, 0.0, 50)
    y = np.linspace(-1.0, 2.0, 50)
    fc = forecast(model, y, h=3)
    np.testing.assert_allclose(fc.mean, [0.8 * 2.0, 0.64 * 2.0, 0.512 * 2.0])
    np.testing.assert_allclose(fc.se, np.sqrt([1.0, 1.64, 1.64 + 0.4096]))
    assert len(forecast(model, y, h=0).mean) == 0


def test_seasonal_random_walk_repeats_last_season():
    order = ModelOrder(0, 0, 0, 0, 1, 0, 4)
    model = FittedModel(order, SarimaxParams(), 0.0, 0.0, 12)
    y = np.array([5.0, 1.0, 2.0, 8.0] * 2 + [6.0, 2.0, 3.0, 9.0])
    np.testing.assert_allclose(forecast(model, y, h=8).mean, [6.0, 2.0, 3.0, 9.0] * 2)


def test_forecast_standard_errors_grow(rng):
    y = simulate_arma([0.5], [0.2], 300, rng).cumsum()
    model = fit(ModelOrder(1, 1, 1), y)
    fc = forecast(model, y, h=10)
    assert np.all(np.diff(fc.se) > 0)
    assert fc.se[0] == pytest.approx(np.sqrt(model.params.sigma2))


# ====================
# ORDER SELECTION
# ====================

def test_choose_differencing(rng):
    assert choose_differencing(np.cos(2 * np.pi * np.arange(400) / 50))[0] == 0
    assert choose_differencing(rng.normal(size=400).cumsum())[0] == 1
    seasonal = np.tile([5.0, 1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 6.0], 40) + rng.normal(0, 0.2, 320)
    assert choose_differencing(seasonal, s=8)[1] == 1


def test_stepwise_search_improves_on_its_seeds(rng):
    y = simulate_arma([0.6], [0.3], 300, rng) + 5
    bounds = {"max_p": 2, "max_q": 2}
    model = auto_order_search(y, bounds=bounds, d=0, D=0)
    seed = fit(ModelOrder(1, 0, 0, with_drift=True), y)
    assert model.aic <= seed.aic + 1e-9
    assert model.order.p <= 2 and model.order.q <= 2
    assert len(model.fit_diagnostics["search_trace"]) >= 4


@pytest.mark.slow
def test_exhaustive_search_is_never_worse_than_stepwise(rng):
    y = simulate_arma([0.6], [0.3], 250, rng) + 5
    bounds = {"max_p": 2, "max_q": 2}
    stepwise = auto_order_search(y, bounds=bounds, d=0, D=0)
    exhaustive = exhaustive_order_search(y, bounds=bounds, d=0, D=0)
    assert exhaustive.aic <= stepwise.aic + 1e-6
    assert len(exhaustive.fit_diagnostics["search_trace"]) <= 18


def test_search_rejects_unknown_criterion(rng):
    with pytest.raises(BoundsError):
        auto_order_search(rng.normal(size=50), criterion="hqic", d=0, D=0)


@pytest.mark.slow
def test_stepwise_search_lands_near_the_grid_optimum():
    bounds = {"max_p": 2, "max_q": 2}
    for seed in range(10):
        rng = np.random.default_rng(seed)
        y = simulate_arma([0.5, 0.3], [], 400, rng) + 5
        stepwise = auto_order_search(y, bounds=bounds, d=0, D=0)
        exhaustive = exhaustive_order_search(y, bounds=bounds, d=0, D=0)
        assert stepwise.aic <= exhaustive.aic + 2.0
