"""Point-accuracy metrics and the Diebold-Mariano machinery.

The DM test here works on squared forecast errors. Its variance input
is a Newey-West estimate with a Bartlett kernel whose autocovariances
are normalized by 1/(n-j); that estimator is not guaranteed positive,
which is intentional: a non-positive estimate falls back to the
unconditional variance of the loss differential and the result is
flagged. The small-sample correction and the Student-t reference
follow Harvey, Leybourne and Newbold (1997).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import PricebenchError

DM_HORIZON = 14


class IndistinguishableForecasts(PricebenchError):
    """Raised when two error vectors are identical: the loss
    differential is exactly zero and no DM statistic exists."""


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    mape: float  # percent
    n: int
    skipped_zero_targets: int


@dataclass(frozen=True)
class DmResult:
    statistic: float
    p_value: float
    h: int
    n: int
    nw_lag: int
    used_fallback: bool
    direction: str  # model label with the lower mean squared error


def metrics(actual: np.ndarray, predicted: np.ndarray,
            zero_policy: str = "skip", epsilon: float = 1e-8) -> MetricReport:
    """MAE, RMSE and MAPE (in percent) over flattened vectors.

    Percentage terms are undefined where the actual value is zero.
    ``zero_policy="skip"`` drops those terms from both the numerator
    and the denominator and reports how many were dropped;
    ``zero_policy="epsilon"`` substitutes ``epsilon`` for the zero
    targets instead (sensitivity mode, nothing is skipped).
    """
    if zero_policy not in ("skip", "epsilon"):
        raise ValueError(f"unknown zero_policy {zero_policy!r}")
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.size != p.size:
        raise ValueError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise ValueError("cannot score empty vectors")
    err = p - a
    mae = float(np.abs(err).mean())
    rmse = float(math.sqrt((err @ err) / err.size))
    zero = a == 0.0
    skipped = int(zero.sum())
    if zero_policy == "epsilon":
        denom = np.where(zero, epsilon, a)
        mape = float((np.abs(err) / np.abs(denom)).mean() * 100.0)
        skipped = 0
    elif skipped == a.size:
        mape = math.nan
    else:
        keep = ~zero
        mape = float((np.abs(err[keep]) / np.abs(a[keep])).mean() * 100.0)
    return MetricReport(mae=mae, rmse=rmse, mape=mape, n=int(a.size),
                        skipped_zero_targets=skipped)


def loss_differential(err_a: np.ndarray, err_b: np.ndarray) -> np.ndarray:
    """Squared-error loss differential d_t = errA_t^2 - errB_t^2."""
    a = np.asarray(err_a, dtype=np.float64).ravel()
    b = np.asarray(err_b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a * a - b * b


def newey_west_var(d: np.ndarray, lag: int = DM_HORIZON - 1) -> float:
    """Bartlett-kernel HAC estimate of Var(mean(d)).

    Autocovariances are demeaned and normalized by 1/(n-j), so the
    estimate can be non-positive for strongly negatively autocorrelated
    input; callers treat that as the fallback trigger.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    n = d.size
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    if n <= lag:
        raise ValueError(f"need more than lag={lag} observations, got {n}")
    c = d - d.mean()
    gamma0 = float(c @ c) / n
    lrv = gamma0
    for j in range(1, lag + 1):
        gamma = float(c[j:] @ c[:-j]) / (n - j)
        lrv += 2.0 * (1.0 - j / (lag + 1.0)) * gamma
    # the weighted sum can cancel to an analytic zero that floating point
    # leaves as a speck; snap those so the <= 0 fallback contract is exact
    if abs(lrv) <= 1e-12 * gamma0:
        lrv = 0.0
    return lrv / n


def hln_multiplier(n: int, h: int) -> float:
    """Harvey-Leybourne-Newbold small-sample correction factor."""
    if n < 1 or h < 1:
        raise ValueError("n and h must be positive")
    return math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)


def dm_test(err_a: np.ndarray, err_b: np.ndarray, h: int = DM_HORIZON,
            lag: int | None = None, label_a: str = "A", label_b: str = "B") -> DmResult:
    """HLN-corrected Diebold-Mariano test on squared errors.

    Sign convention: a positive statistic means the first model has the
    lower mean squared error. The p-value is two-sided from a Student-t
    with n-1 degrees of freedom. When the HAC variance estimate is
    non-positive the unconditional variance of d over n is used and the
    result is flagged.
    """
    d = loss_differential(err_a, err_b)
    n = d.size
    if lag is None:
        lag = h - 1
    if np.array_equal(np.asarray(err_a, dtype=np.float64).ravel(),
                      np.asarray(err_b, dtype=np.float64).ravel()):
        raise IndistinguishableForecasts(
            "identical error vectors: the loss differential is exactly zero"
        )
    advantage = -float(d.mean())  # positive when the first model wins
    var = newey_west_var(d, lag)
    used_fallback = var <= 0.0
    if used_fallback:
        c = d - d.mean()
        var = float(c @ c) / n / n
    if var <= 0.0:
        # constant nonzero differential: one model uniformly better
        statistic = math.copysign(math.inf, advantage)
        p_value = 0.0
    else:
        statistic = hln_multiplier(n, h) * advantage / math.sqrt(var)
        p_value = float(2.0 * stats.t.sf(abs(statistic), df=n - 1))
    direction = label_a if statistic > 0 else label_b
    return DmResult(
        statistic=statistic,
        p_value=p_value,
        h=h,
        n=n,
        nw_lag=lag,
        used_fallback=used_fallback,
        direction=direction,
    )
