"""Seasonal ARIMA with automatic order selection.

Estimation is conditional sum of squares: the seasonal and non-seasonal
lag polynomials are expanded into one AR and one MA polynomial, the AR
part is applied by convolution, and the MA recursion runs with zero
initial residuals. A quasi-Newton pass (L-BFGS-B) refines the
coefficients; candidates whose fitted polynomials have roots on or
inside the unit circle are discarded.

Order selection works the way auto-ARIMA tools do: the differencing
orders are fixed first (seasonal strength for D, then repeated
unit-root tests for d), and the remaining (p, q, P, Q) grid is searched
stepwise from a small start set, moving one order at a time while the
AIC improves. A full-grid search is available as a fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from ..diagnostics import adf_test, seasonal_strength, stl_decompose
from ..exceptions import DataError, NumericError
from ..splitting import HORIZON, WindowSet
from .base import EpochStats, ForecastModel, SeriesData, TrainConfig

P_MAX, Q_MAX = 3, 3
SP_MAX, SQ_MAX = 2, 2
D_MAX, SD_MAX = 2, 1

# seasonal strength above this keeps one round of seasonal differencing
SEASONAL_STRENGTH_THRESHOLD = 0.64

_ROOT_MARGIN = 1.0 + 1e-6
_BAD_OBJECTIVE = 1e12


@dataclass(frozen=True)
class SarimaOrder:
    p: int
    d: int
    q: int
    P: int
    D: int
    Q: int
    m: int = 7

    def __post_init__(self) -> None:
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0:
            raise ValueError("orders must be nonnegative")
        if self.m < 1:
            raise ValueError("seasonal period must be at least 1")

    @property
    def n_coeffs(self) -> int:
        return self.p + self.q + self.P + self.Q

    def label(self) -> str:
        return (
            f"({self.p},{self.d},{self.q})"
            f"({self.P},{self.D},{self.Q})[{self.m}]"
        )


@dataclass
class SarimaFit:
    order: SarimaOrder
    params: np.ndarray  # [c?, phi..., theta..., Phi..., Theta...]
    include_const: bool
    aic: float
    sse: float
    n_obs: int
    n_fits: int = 0
    search: str = "stepwise"


def expand_poly(coeffs: np.ndarray, seasonal: np.ndarray, m: int, sign: float) -> np.ndarray:
    """Lag-polynomial product, coefficient 0 fixed at one.

    ``sign`` is -1 for AR style (1 - c1 B - ...) and +1 for MA style
    (1 + c1 B + ...); seasonal terms sit at multiples of ``m``.
    """
    reg = np.zeros(len(coeffs) + 1)
    reg[0] = 1.0
    if len(coeffs):
        reg[1:] = sign * np.asarray(coeffs, dtype=np.float64)
    sea = np.zeros(m * len(seasonal) + 1)
    sea[0] = 1.0
    for j, c in enumerate(seasonal, start=1):
        sea[j * m] = sign * c
    return np.convolve(reg, sea)


def unpack_params(params: np.ndarray, order: SarimaOrder, include_const: bool):
    params = np.asarray(params, dtype=np.float64)
    expected = int(include_const) + order.n_coeffs
    if params.size != expected:
        raise ValueError(f"expected {expected} parameters for {order.label()}, got {params.size}")
    pos = 0
    c = 0.0
    if include_const:
        c = float(params[0])
        pos = 1
    phi = params[pos : pos + order.p]
    pos += order.p
    theta = params[pos : pos + order.q]
    pos += order.q
    sphi = params[pos : pos + order.P]
    pos += order.P
    stheta = params[pos : pos + order.Q]
    return c, phi, theta, sphi, stheta


def css_residuals(y: np.ndarray, order: SarimaOrder, params: np.ndarray,
                  include_const: bool) -> np.ndarray:
    """Conditional residuals of the (already differenced) series."""
    y = np.asarray(y, dtype=np.float64)
    c, phi, theta, sphi, stheta = unpack_params(params, order, include_const)
    ar = expand_poly(phi, sphi, order.m, -1.0)
    ma = expand_poly(theta, stheta, order.m, +1.0)
    if y.size < ar.size:
        raise DataError(
            f"series of {y.size} too short for AR terms spanning {ar.size - 1} lags"
        )
    u = np.convolve(y, ar, mode="valid")  # u_t = sum_j ar_j y_{t-j}
    return signal.lfilter([1.0], ma, u - c)


def _roots_outside(poly: np.ndarray) -> bool:
    if poly.size <= 1:
        return True
    roots = np.roots(poly[::-1])
    if roots.size == 0:
        return True
    return bool(np.abs(roots).min() > _ROOT_MARGIN)


def fit_css(y: np.ndarray, order: SarimaOrder, include_const: bool,
            n_burn: int | None = None) -> SarimaFit | None:
    """One candidate: CSS objective, L-BFGS-B refinement, validity checks.

    ``n_burn`` sets how many initial observations are excluded from the
    sum of squares. It defaults to the model's own AR span; order
    selection passes the span of the largest candidate instead, so every
    AIC is computed on the same sample (otherwise longer-lag models
    win simply by shedding the noisy conditional startup).

    Returns None when the candidate does not converge to a usable model
    (optimizer failure, non-finite objective, or roots not strictly
    outside the unit circle).
    """
    y = np.asarray(y, dtype=np.float64)
    k = int(include_const) + order.n_coeffs
    ar_span = order.p + order.P * order.m
    if n_burn is None:
        n_burn = ar_span
    if n_burn < ar_span:
        raise ValueError(f"n_burn {n_burn} below the AR span {ar_span}")
    n_eff = y.size - n_burn
    if n_eff < k + 2:
        return None
    skip = n_burn - ar_span  # residual index of the first counted observation

    def objective(params: np.ndarray) -> float:
        # optimizer probes may explode the MA recursion; the cap makes
        # overflow an expected outcome, not a warning-worthy event
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                e = css_residuals(y, order, params, include_const)
            except DataError:
                return _BAD_OBJECTIVE
            e = e[skip:]
            sse = float(e @ e)
        if not np.isfinite(sse):
            return _BAD_OBJECTIVE
        return sse

    x0 = np.zeros(k)
    if include_const:
        x0[0] = float(y.mean())
    if k:
        # errstate also covers scipy's own finite-difference division,
        # which overflows when a probe hits the capped objective
        with np.errstate(over="ignore", invalid="ignore"):
            res = optimize.minimize(objective, x0, method="L-BFGS-B")
        if not res.success:
            return None
        params = np.asarray(res.x, dtype=np.float64)
    else:
        params = x0
    sse = objective(params)
    if not np.isfinite(sse) or sse >= _BAD_OBJECTIVE:
        return None
    c, phi, theta, sphi, stheta = unpack_params(params, order, include_const)
    if not _roots_outside(expand_poly(phi, sphi, order.m, -1.0)):
        return None
    if not _roots_outside(expand_poly(theta, stheta, order.m, +1.0)):
        return None
    # Gaussian CSS log-likelihood up to constants; +1 counts the variance
    sse_floor = max(sse, 1e-300)
    aic = n_eff * float(np.log(sse_floor / n_eff)) + 2.0 * (k + 1)
    return SarimaFit(
        order=order,
        params=params,
        include_const=include_const,
        aic=aic,
        sse=sse,
        n_obs=int(y.size),
    )


def difference(values: np.ndarray, d: int, D: int, m: int) -> np.ndarray:
    """Apply seasonal differencing D times, then regular differencing d times."""
    y = np.asarray(values, dtype=np.float64)
    for _ in range(D):
        if y.size <= m:
            raise DataError("series too short to difference seasonally")
        y = y[m:] - y[:-m]
    for _ in range(d):
        if y.size <= 1:
            raise DataError("series too short to difference")
        y = np.diff(y)
    return y


def select_differencing(values: np.ndarray, m: int = 7,
                        max_d: int = D_MAX, max_D: int = SD_MAX) -> tuple[int, int]:
    """Pick (d, D): seasonal strength decides D, repeated unit-root
    tests at the 5% level decide d."""
    v = np.asarray(values, dtype=np.float64)
    D = 0
    if max_D > 0 and m >= 2 and v.size >= 2 * m:
        try:
            dec = stl_decompose(v, period=m)
            if seasonal_strength(dec) >= SEASONAL_STRENGTH_THRESHOLD:
                D = 1
        except (DataError, NumericError, ValueError):
            D = 0
    y = difference(v, 0, D, m)
    d = 0
    while d < max_d:
        try:
            res = adf_test(y)
        except (DataError, NumericError):
            break
        if res.p_value < 0.05:
            break
        y = np.diff(y)
        d += 1
    return d, D


def _start_grid(seasonal: bool) -> list[tuple[int, int, int, int]]:
    if seasonal:
        return [(2, 2, 1, 1), (0, 0, 0, 0), (1, 0, 1, 0), (0, 1, 0, 1)]
    return [(2, 2, 0, 0), (0, 0, 0, 0), (1, 0, 0, 0), (0, 1, 0, 0)]


def _neighbors(p: int, q: int, P: int, Q: int, seasonal: bool):
    for dp in (-1, 1):
        yield p + dp, q, P, Q
        yield p, q + dp, P, Q
        if seasonal:
            yield p, q, P + dp, Q
            yield p, q, P, Q + dp


def select_orders(values: np.ndarray, m: int = 7, search: str = "stepwise",
                  max_fits: int = 60) -> SarimaFit:
    """Automatic order selection over p,q <= 3, P,Q <= 2, d <= 2, D <= 1.

    Differencing is fixed up front, the constant is included only for
    undifferenced models, and candidates are ranked by AIC with a
    fewer-parameters tie-break. Raises NumericError if nothing
    converges.
    """
    if search not in ("stepwise", "grid"):
        raise ValueError(f"unknown search mode {search!r}")
    v = np.asarray(values, dtype=np.float64)
    if v.size < 3 * m:
        raise DataError(f"need at least {3 * m} observations to fit a period-{m} model")
    d, D = select_differencing(v, m)
    y = difference(v, d, D, m)
    include_const = (d + D) == 0
    seasonal = m >= 2 and y.size > 3 * m
    # common conditioning sample: every candidate sheds the span of the
    # largest one, so AICs are comparable
    n_burn = P_MAX + (SP_MAX * m if seasonal else 0)

    cache: dict[tuple[int, int, int, int], SarimaFit | None] = {}

    def fit_at(p: int, q: int, P: int, Q: int) -> SarimaFit | None:
        if not (0 <= p <= P_MAX and 0 <= q <= Q_MAX and 0 <= P <= SP_MAX and 0 <= Q <= SQ_MAX):
            return None
        if not seasonal and (P or Q):
            return None
        key = (p, q, P, Q)
        if key not in cache:
            cache[key] = fit_css(y, SarimaOrder(p, d, q, P, D, Q, m), include_const,
                                 n_burn=n_burn)
        return cache[key]

    def better(a: SarimaFit | None, b: SarimaFit | None) -> SarimaFit | None:
        if a is None:
            return b
        if b is None:
            return a
        ka = (a.aic, int(a.include_const) + a.order.n_coeffs)
        kb = (b.aic, int(b.include_const) + b.order.n_coeffs)
        return a if ka <= kb else b

    best: SarimaFit | None = None
    if search == "grid":
        for p in range(P_MAX + 1):
            for q in range(Q_MAX + 1):
                for P in range((SP_MAX if seasonal else 0) + 1):
                    for Q in range((SQ_MAX if seasonal else 0) + 1):
                        best = better(best, fit_at(p, q, P, Q))
    else:
        for start in _start_grid(seasonal):
            best = better(best, fit_at(*start))
        improved = best is not None
        while improved and len(cache) < max_fits:
            improved = False
            o = best.order
            for cand in _neighbors(o.p, o.q, o.P, o.Q, seasonal):
                trial = fit_at(*cand)
                if better(best, trial) is trial:
                    best = trial
                    improved = True
                if len(cache) >= max_fits:
                    break
    if best is None:
        raise NumericError("no SARIMA candidate converged")
    best.n_fits = len(cache)
    best.search = search
    return best


def sarima_forecast(fit: SarimaFit, history: np.ndarray, horizon: int) -> np.ndarray:
    """Multi-step forecast with parameters held fixed.

    The conditional-residual state is rebuilt over the full history, so
    successive calls with a growing history give expanding-window
    forecasts from one fitted model. Future shocks are set to zero and
    the differencing stages are integrated back in reverse.
    """
    v = np.asarray(history, dtype=np.float64)
    order = fit.order
    m = order.m

    stages: list[tuple[str, np.ndarray]] = []
    y = v
    for _ in range(order.D):
        if y.size <= m:
            raise DataError("history too short for seasonal differencing")
        stages.append(("seasonal", y))
        y = y[m:] - y[:-m]
    for _ in range(order.d):
        if y.size <= 1:
            raise DataError("history too short for differencing")
        stages.append(("regular", y))
        y = np.diff(y)

    c, phi, theta, sphi, stheta = unpack_params(fit.params, order, fit.include_const)
    ar = expand_poly(phi, sphi, m, -1.0)
    ma = expand_poly(theta, stheta, m, +1.0)
    na, nb = ar.size - 1, ma.size - 1
    if y.size <= na:
        raise DataError("history too short for the fitted AR terms")
    u = np.convolve(y, ar, mode="valid")
    e = signal.lfilter([1.0], ma, u - c)

    T = y.size
    xs = np.concatenate([y, np.zeros(horizon)])
    es = np.concatenate([np.zeros(na), e, np.zeros(horizon)])
    for k in range(horizon):
        t = T + k
        val = c
        for j in range(1, na + 1):
            val -= ar[j] * xs[t - j]
        for j in range(1, nb + 1):
            val += ma[j] * es[t - j]
        xs[t] = val
    fc = xs[T:]

    for kind, base in reversed(stages):
        if kind == "regular":
            fc = base[-1] + np.cumsum(fc)
        else:
            ext = list(base[-m:])
            out = []
            for k in range(horizon):
                out.append(fc[k] + ext[k])
                ext.append(out[-1])
            fc = np.asarray(out)
    if not np.all(np.isfinite(fc)):
        raise NumericError(f"SARIMA forecast diverged for {order.label()}")
    return fc


class SarimaForecaster(ForecastModel):
    """Order selection on the training segment, expanding-window predict."""

    kind = "sarima"

    def __init__(self, m: int = 7, horizon: int = HORIZON, search: str = "stepwise",
                 max_fits: int = 60) -> None:
        self.m = m
        self.horizon = horizon
        self.search = search
        self.max_fits = max_fits
        self.result: SarimaFit | None = None

    def fit(self, data: SeriesData, cfg: TrainConfig | None = None) -> list[EpochStats]:
        lo, hi = data.split.train
        self.result = select_orders(
            data.scaled[lo:hi], m=self.m, search=self.search, max_fits=self.max_fits
        )
        return []

    def predict(self, data: SeriesData, windows: WindowSet) -> np.ndarray:
        if self.result is None:
            raise DataError("predict called before fit")
        out = np.empty((windows.count, windows.horizon))
        for i, origin in enumerate(windows.origins):
            history = data.scaled[: int(origin) + windows.seq_len]
            out[i] = sarima_forecast(self.result, history, windows.horizon)
        return out

    def hyperparameters(self) -> dict:
        return {"m": self.m, "horizon": self.horizon, "search": self.search}

    def state_values(self) -> np.ndarray:
        if self.result is None:
            return np.empty(0, dtype=np.float64)
        o = self.result.order
        head = np.array(
            [o.p, o.d, o.q, o.P, o.D, o.Q, o.m,
             float(self.result.include_const), self.result.aic, self.result.sse,
             self.result.n_obs],
            dtype=np.float64,
        )
        return np.concatenate([head, self.result.params])

    def load_state_values(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            self.result = None
            return
        if values.size < 11:
            raise DataError("truncated SARIMA state")
        p, d, q, P, D, Q, m = (int(x) for x in values[:7])
        include_const = bool(values[7])
        order = SarimaOrder(p, d, q, P, D, Q, m)
        params = values[11:]
        expected = int(include_const) + order.n_coeffs
        if params.size != expected:
            raise DataError(
                f"SARIMA state holds {params.size} coefficients, expected {expected}"
            )
        self.result = SarimaFit(
            order=order,
            params=params.copy(),
            include_const=include_const,
            aic=float(values[8]),
            sse=float(values[9]),
            n_obs=int(values[10]),
        )
