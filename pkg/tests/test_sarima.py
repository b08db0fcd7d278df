"""Seasonal ARIMA: conditional-sum-of-squares fitting and order search.

Generator recovery uses fixed seed blocks; the rates asserted here were
measured once and are deterministic thereafter.
"""

import numpy as np
import pytest

from pricebench.exceptions import NumericError
from pricebench.models.base import TrainConfig, build_series_data
from pricebench.models.sarima import (
    SarimaForecaster,
    SarimaOrder,
    css_residuals,
    difference,
    expand_poly,
    fit_css,
    sarima_forecast,
    select_differencing,
    select_orders,
)



def ar1(seed, n=500, phi=0.7, c=0.0):
    rng = np.random.default_rng(seed)
    y = np.empty(n)
    y[0] = c
    e = rng.normal(size=n)
    for t in range(1, n):
        y[t] = c + phi * y[t - 1] + e[t]
    return y


def seasonal_ma(seed, n=600, m=7, theta_s=0.8):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + m)
    return e[m:] + theta_s * e[:-m] + 5.0


class TestExpandPoly:
    def test_regular_only(self):
        # (1 - 0.5B)(1) -> [1, -0.5]
        out = expand_poly(np.array([0.5]), np.array([]), 7, sign=-1.0)
        assert np.allclose(out, [1.0, -0.5])

    def test_seasonal_product(self):
        # (1 + 0.3B)(1 + 0.2B^2) -> 1 + 0.3B + 0.2B^2 + 0.06B^3
        out = expand_poly(np.array([0.3]), np.array([0.2]), 2, sign=+1.0)
        assert np.allclose(out, [1.0, 0.3, 0.2, 0.06])

    def test_empty_is_unit(self):
        assert np.allclose(expand_poly(np.array([]), np.array([]), 7, 1.0), [1.0])


class TestCssResiduals:
    def test_pure_ar_matches_recursion(self):
        y = ar1(0, n=60)
        order = SarimaOrder(1, 0, 0, 0, 0, 0)
        params = np.array([0.1, 0.6])  # constant, phi
        e = css_residuals(y, order, params, include_const=True)
        # manual: e_t = y_t - c - phi y_{t-1}; output starts at t=1
        want = y[1:] - 0.1 - 0.6 * y[:-1]
        assert e.shape == want.shape
        assert np.allclose(e, want, atol=1e-12)

    def test_pure_ma_recursion(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=40)
        order = SarimaOrder(0, 0, 1, 0, 0, 0)
        theta = 0.5
        e = css_residuals(y, order, np.array([0.0, theta]), include_const=True)
        want = np.empty_like(y)
        for t in range(len(y)):
            want[t] = y[t] - (theta * want[t - 1] if t > 0 else 0.0)
        assert np.allclose(e, want, atol=1e-10)


class TestDifference:
    def test_regular_then_seasonal_orders_compose(self):
        y = np.arange(40.0) ** 2
        out = difference(y, d=1, D=1, m=7)
        want = np.diff(y[7:] - y[:-7])
        assert np.allclose(out, want)

    def test_linear_trend_killed_by_one_difference(self):
        y = 3.0 * np.arange(50) + 2.0
        out = difference(y, d=1, D=0, m=7)
        assert np.allclose(out, 3.0)


class TestSelectDifferencing:
    def test_stationary_series_needs_none(self):
        d, D = select_differencing(ar1(3, n=600), m=7)
        assert (d, D) == (0, 0)

    def test_random_walk_needs_one(self):
        rng = np.random.default_rng(8)
        y = np.cumsum(rng.normal(size=600))
        d, D = select_differencing(y, m=7)
        assert d == 1 and D == 0

    def test_strong_weekly_pattern_triggers_seasonal(self):
        t = np.arange(700)
        rng = np.random.default_rng(9)
        y = 10 + 4 * np.sin(2 * np.pi * t / 7) + rng.normal(0, 0.3, 700)
        _, D = select_differencing(y, m=7)
        assert D == 1


class TestFitCss:
    def test_ar1_coefficient_close(self):
        y = ar1(42)
        fit = fit_css(y, SarimaOrder(1, 0, 0, 0, 0, 0), include_const=True)
        assert fit is not None
        phi = fit.params[1]
        assert abs(phi - 0.7) < 0.08

    def test_matches_reference_css_fit(self):
        from statsmodels.tsa.arima.model import ARIMA

        y = ar1(42)
        mine = fit_css(y, SarimaOrder(1, 0, 0, 0, 0, 0), include_const=True)
        ref = ARIMA(y, order=(1, 0, 0)).fit(method="statespace")
        assert mine.params[1] == pytest.approx(ref.arparams[0], abs=0.02)

    def test_nonstationary_candidate_rejected(self):
        y = np.cumsum(np.random.default_rng(5).normal(size=300))
        fit = fit_css(y, SarimaOrder(1, 0, 0, 0, 0, 0), include_const=True)
        # random walk drives phi toward 1; either rejected or inside the circle
        if fit is not None:
            assert abs(fit.params[1]) < 1.0 + 1e-9


class TestSelectOrders:
    def test_ar1_recovery_rate(self):
        hits = 0
        for seed in range(104, 114):
            fit = select_orders(ar1(seed), m=7)
            o = fit.order
            if o.p >= 1 and o.d == 0:
                phi = fit.params[1 if fit.include_const else 0]
                hits += abs(phi - 0.7) < 0.1
        assert hits >= 8

    def test_white_noise_selects_parsimonious_model(self):
        # AIC occasionally admits a spurious near-cancelling ARMA pair on
        # pure noise, so the frozen bar is "at most one coefficient" rather
        # than "exactly empty"; differencing must never be triggered.
        small = 0
        for seed in range(200, 210):
            fit = select_orders(np.random.default_rng(seed).normal(size=400), m=7)
            o = fit.order
            assert (o.d, o.D) == (0, 0)
            small += o.n_coeffs <= 1
        assert small >= 8

    def test_seasonal_ma_picks_seasonal_terms(self):
        hits = 0
        for seed in range(300, 310):
            fit = select_orders(seasonal_ma(seed), m=7)
            hits += fit.order.Q >= 1
        assert hits >= 8

    def test_grid_search_agrees_or_beats_stepwise(self):
        y = ar1(110, n=300)
        step = select_orders(y, m=7, search="stepwise")
        grid = select_orders(y, m=7, search="grid")
        assert grid.aic <= step.aic + 1e-9

    def test_all_fits_failing_raises(self):
        # two points per candidate is hopeless
        with pytest.raises((NumericError, Exception)):
            select_orders(np.array([1.0, 2.0] * 3), m=7)


class TestForecast:
    def test_ar1_decays_toward_mean(self):
        y = ar1(7, n=400, phi=0.7, c=1.5)  # mean = c/(1-phi) = 5
        fit = fit_css(y, SarimaOrder(1, 0, 0, 0, 0, 0), include_const=True)
        horizon = 50
        f = sarima_forecast(fit, y, horizon)
        mean = fit.params[0] / (1 - fit.params[1])
        assert abs(f[-1] - mean) < abs(f[0] - mean)
        assert f[-1] == pytest.approx(mean, abs=0.3)

    def test_differenced_forecast_continues_trend(self):
        y = 3.0 * np.arange(200) + np.random.default_rng(2).normal(0, 0.01, 200)
        # fit_css sees the differenced series; the order's d only matters
        # when sarima_forecast integrates the levels back
        fit = fit_css(difference(y, 1, 0, 7), SarimaOrder(0, 1, 0, 0, 0, 0),
                      include_const=True)
        f = sarima_forecast(fit, y, 5)
        # first differences average 3, so the level keeps climbing by ~3
        assert np.allclose(np.diff(f), 3.0, atol=0.1)
        assert f[0] == pytest.approx(y[-1] + 3.0, abs=0.1)

    def test_seasonal_pattern_repeats(self):
        y = seasonal_ma(301)
        fit = select_orders(y, m=7)
        f = sarima_forecast(fit, y, 14)
        assert f.shape == (14,)
        assert np.isfinite(f).all()


class TestForecasterInterface:
    def _data(self):
        return build_series_data(ar1(11, n=420) + 50.0, commodity="x")

    def test_fit_predict_shapes(self):
        data = self._data()
        model = SarimaForecaster()
        model.fit(data, TrainConfig())
        pred = model.predict(data, data.windows["test"])
        assert pred.shape == data.windows["test"].targets.shape
        assert np.isfinite(pred).all()

    def test_rolling_origin_uses_only_past(self):
        data = self._data()
        model = SarimaForecaster()
        model.fit(data, TrainConfig())
        test = data.windows["test"]
        pred_full = model.predict(data, test)
        # each row must be reproducible from the history prefix alone:
        # nothing after the forecast origin may leak in
        for i in (0, test.count - 1):
            cut = int(test.origins[i]) + test.seq_len
            direct = sarima_forecast(model.result, data.scaled[:cut], test.horizon)
            assert np.array_equal(pred_full[i], direct)

    def test_state_round_trip(self):
        data = self._data()
        model = SarimaForecaster()
        model.fit(data, TrainConfig())
        clone = SarimaForecaster()
        clone.load_state_values(model.state_values())
        a = model.predict(data, data.windows["test"])
        b = clone.predict(data, data.windows["test"])
        assert np.array_equal(a, b)

    def test_predict_before_fit(self):
        data = self._data()
        with pytest.raises(Exception):
            SarimaForecaster().predict(data, data.windows["test"])
