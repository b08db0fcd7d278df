"""Stationarity and seasonal-structure diagnostics.

Two tools: an augmented Dickey-Fuller unit-root test (constant-only
regression, AIC lag selection, response-surface p-values) and an
additive seasonal-trend decomposition built on locally weighted linear
regression, from which a residual-to-seasonal variability ratio is
derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .exceptions import DataError, NumericError

MIN_ADF_LENGTH = 30

# Response-surface coefficients for the constant-only Dickey-Fuller
# t-distribution, single-series case. Source: MacKinnon (1994, 2010),
# "Approximate asymptotic distribution functions for unit-root and
# cointegration tests"; values as tabulated in common econometrics
# libraries. p = Phi(c0 + c1*tau + c2*tau^2 [+ c3*tau^3]), with the
# cubic form used to the right of TAU_STAR and the quadratic to the
# left; beyond [TAU_MIN, TAU_MAX] the p-value saturates at 0 or 1.
_TAU_MAX_C = 2.74
_TAU_MIN_C = -18.83
_TAU_STAR_C = -1.61
_TAU_C_SMALLP = (2.1659, 1.4412, 0.038269)
_TAU_C_LARGEP = (1.7339, 0.93202, -0.12745, -0.010368)


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lags_used: int
    nobs: int
    regression: str = "c"

    @property
    def stationary(self) -> bool:
        """Conventional 5% call: reject the unit root when p < 0.05."""
        return self.p_value < 0.05


def mackinnon_p(statistic: float) -> float:
    """Map a constant-only ADF t-statistic to an approximate p-value."""
    if statistic > _TAU_MAX_C:
        return 1.0
    if statistic < _TAU_MIN_C:
        return 0.0
    coefs = _TAU_C_SMALLP if statistic <= _TAU_STAR_C else _TAU_C_LARGEP
    z = sum(c * statistic**k for k, c in enumerate(coefs))
    return float(norm.cdf(z))


def _ols_tstat_first(x_mat: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """OLS of y on x_mat; returns (t-stat of column 0, sse)."""
    n, k = x_mat.shape
    if n <= k:
        raise DataError(f"not enough observations ({n}) for {k} regressors")
    xtx = x_mat.T @ x_mat
    try:
        xtx_inv = np.linalg.inv(xtx)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular regressor matrix in ADF regression: {exc}") from exc
    beta = xtx_inv @ (x_mat.T @ y)
    resid = y - x_mat @ beta
    sse = float(resid @ resid)
    sigma2 = sse / (n - k)
    se0 = math.sqrt(sigma2 * xtx_inv[0, 0])
    if se0 == 0.0:
        raise NumericError("zero standard error in ADF regression")
    return float(beta[0] / se0), sse


def _adf_design(x: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressor matrix [level, dlag_1..dlag_k, const] and response.

    Rows cover t = lag+1 .. n-1 of the original series, i.e. every
    observation with a full set of difference lags.
    """
    dx = np.diff(x)
    n1 = len(dx)
    y = dx[lag:]
    cols = [x[lag : n1]]
    for i in range(1, lag + 1):
        cols.append(dx[lag - i : n1 - i])
    cols.append(np.ones_like(y))
    return np.column_stack(cols), y


def default_max_lag(n: int) -> int:
    """Schwert-style lag ceiling: floor(12 * (n/100)^(1/4))."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(values: np.ndarray, max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with constant, AIC lag selection.

    The lag order is chosen by AIC over 0..max_lag on a common sample
    (trimmed to the largest candidate lag), then the statistic is
    re-estimated at the chosen lag on all usable observations.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("ADF expects a 1-D series")
    n = len(x)
    if n < MIN_ADF_LENGTH:
        raise DataError(f"series too short for ADF: n={n} < {MIN_ADF_LENGTH}")
    if not np.isfinite(x).all():
        raise DataError("ADF input contains non-finite values")
    if np.ptp(x) == 0.0:
        raise DataError("constant series: unit-root test undefined")

    if max_lag is None:
        max_lag = default_max_lag(n)
    max_lag = min(max_lag, n // 2 - 2)
    if max_lag < 0:
        raise DataError(f"series too short for any ADF regression: n={n}")

    # Common-sample AIC: every candidate drops the same max_lag rows.
    full_x, full_y = _adf_design(x, max_lag)
    nobs_sel = len(full_y)
    best = (math.inf, 0)
    for lag in range(max_lag + 1):
        keep = [0] + list(range(1, lag + 1)) + [max_lag + 1]
        x_mat = full_x[:, keep]
        _, sse = _ols_tstat_first(x_mat, full_y)
        k = x_mat.shape[1]
        aic = nobs_sel * math.log(sse / nobs_sel) + 2 * k
        if aic < best[0]:
            best = (aic, lag)
    lag = best[1]

    x_mat, y = _adf_design(x, lag)
    tstat, _ = _ols_tstat_first(x_mat, y)
    return AdfResult(
        statistic=tstat,
        p_value=mackinnon_p(tstat),
        lags_used=lag,
        nobs=len(y),
    )


# ---------------------------------------------------------------------------
# Seasonal-trend decomposition via locally weighted regression.


@dataclass(frozen=True)
class StlResult:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.residual


def _tricube(u: np.ndarray) -> np.ndarray:
    w = np.clip(1.0 - u**3, 0.0, None)
    return w**3


def _loess_fit_at(y: np.ndarray, idx: np.ndarray, at: float, span: float, degree: int) -> float:
    """Weighted local fit of y (observed at idx) evaluated at ``at``."""
    d = np.abs(idx - at)
    lam = max(span, 1e-12)
    w = _tricube(d / lam)
    s0 = w.sum()
    if s0 <= 0.0:
        return float(y.mean())
    if degree == 0:
        return float((w @ y) / s0)
    t = idx - at
    s1 = w @ t
    s2 = w @ (t * t)
    sy = w @ y
    sty = w @ (t * y)
    denom = s0 * s2 - s1 * s1
    if abs(denom) < 1e-12 * max(s0 * s2, 1.0):
        return float(sy / s0)
    return float((s2 * sy - s1 * sty) / denom)


def _loess(y: np.ndarray, window: int, degree: int = 1) -> np.ndarray:
    """Loess curve over an evenly spaced series using ``window`` neighbors."""
    n = len(y)
    q = max(int(window), 2)
    out = np.empty(n, dtype=np.float64)
    take = min(q, n)
    for i in range(n):
        left = min(max(i - (take - 1) // 2, 0), n - take)
        idx = np.arange(left, left + take, dtype=np.float64)
        span = max(abs(left - i), abs(left + take - 1 - i))
        if q > n:
            # fewer points than the window: widen the kernel as if the
            # missing neighbors existed, per the usual loess convention
            span = span * q / n
        out[i] = _loess_fit_at(y[left : left + take], idx, float(i), float(span), degree)
    return out


def _loess_with_ends(y: np.ndarray, window: int, degree: int = 1) -> np.ndarray:
    """Loess over y plus extrapolated values one step before and after."""
    n = len(y)
    core = _loess(y, window, degree)
    q = max(int(window), 2)
    take = min(q, n)
    idx_head = np.arange(take, dtype=np.float64)
    span_head = (take) if q <= n else take * q / n
    before = _loess_fit_at(y[:take], idx_head, -1.0, float(span_head), degree)
    idx_tail = np.arange(n - take, n, dtype=np.float64)
    after = _loess_fit_at(y[n - take :], idx_tail, float(n), float(span_head), degree)
    return np.concatenate(([before], core, [after]))


def _moving_average(y: np.ndarray, window: int) -> np.ndarray:
    kernel = np.full(window, 1.0 / window)
    return np.convolve(y, kernel, mode="valid")


def _next_odd(value: float) -> int:
    k = int(math.ceil(value))
    return k if k % 2 == 1 else k + 1


def stl_decompose(
    values: np.ndarray,
    period: int,
    seasonal_smoother: int = 7,
    trend_smoother: int | None = None,
    lowpass_smoother: int | None = None,
    inner_iterations: int = 2,
) -> StlResult:
    """Additive seasonal-trend decomposition.

    Each pass smooths the detrended cycle-subseries (one per phase of
    the period) with a loess window of ``seasonal_smoother`` points,
    removes the low-frequency leakage with a moving-average cascade plus
    loess low-pass, and re-estimates the trend from the deseasonalized
    series. The residual is whatever the trend and seasonal components
    do not explain, so the three parts always sum to the input exactly.

    ``seasonal_smoother`` counts points of a cycle-subseries, i.e. a
    value of 7 spans seven periods of the original series. The trend
    window defaults to the smallest odd integer not below
    1.5*period / (1 - 1.5/seasonal_smoother).
    """
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1:
        raise DataError("decomposition expects a 1-D series")
    if not np.isfinite(y).all():
        raise DataError("decomposition input contains non-finite values")
    n = len(y)
    if period < 2:
        raise DataError(f"period must be at least 2, got {period}")
    if n < 2 * period:
        raise DataError(f"need at least two full periods: n={n}, period={period}")
    ns = _next_odd(max(seasonal_smoother, 3))
    nl = lowpass_smoother if lowpass_smoother is not None else _next_odd(period)
    nt = (
        trend_smoother
        if trend_smoother is not None
        else _next_odd(1.5 * period / (1.0 - 1.5 / ns))
    )
    if nl % 2 == 0 or nt % 2 == 0:
        raise DataError("trend and low-pass windows must be odd")

    trend = np.zeros(n)
    seasonal = np.zeros(n)
    for _ in range(max(inner_iterations, 1)):
        detrended = y - trend
        # cycle-subseries smoothing, extended one period on each side
        extended = np.empty(n + 2 * period, dtype=np.float64)
        for phase in range(period):
            sub = detrended[phase::period]
            smoothed = _loess_with_ends(sub, ns, degree=1)
            extended[phase :: period][: len(smoothed)] = smoothed
        lowpass_in = _moving_average(
            _moving_average(_moving_average(extended, period), period), 3
        )
        lowfreq = _loess(lowpass_in, nl, degree=1)
        seasonal = extended[period : period + n] - lowfreq
        trend = _loess(y - seasonal, nt, degree=1)

    residual = y - seasonal - trend
    return StlResult(trend=trend, seasonal=seasonal, residual=residual, period=period)


def rs_ratio(result: StlResult) -> float:
    """Residual-to-seasonal variability: std(residual) / std(seasonal).

    Values below 1 mean the seasonal component dominates the remainder;
    values above 1 mean irregular variation swamps the seasonal cycle.
    """
    s = float(np.std(result.seasonal))
    if s == 0.0:
        raise NumericError("seasonal component has zero variance; ratio undefined")
    return float(np.std(result.residual)) / s


def seasonal_strength(result: StlResult) -> float:
    """Share of detrended variance explained by the seasonal component."""
    resid_var = float(np.var(result.residual))
    total = float(np.var(result.seasonal + result.residual))
    if total == 0.0:
        return 0.0
    return max(0.0, 1.0 - resid_var / total)
