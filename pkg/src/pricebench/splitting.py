"""Temporal splitting, train-only min-max scaling, and sliding windows.

The split is chronological, with boundaries at the cumulative floors
floor(n*f_train) and floor(n*(f_train+f_val)); the test segment takes
the remainder. This reproduces, for example, (1423, 178, 178) from a
series of 1779 days under fractions (0.8, 0.1, 0.1).

Windows are target-anchored: a window is enumerated for every target
block start inside the requested range (subject to stride), and its
input context may reach back into earlier segments. Training windows
are enumerated the same way, which keeps every input and target element
inside the training range.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError

SEQ_LEN = 90
HORIZON = 14

# Smallest series the default protocol can split and window meaningfully.
MIN_SERIES_LENGTH = 105


@dataclass(frozen=True)
class TemporalSplit:
    """Half-open index ranges [start, stop) for train/val/test."""

    n: int
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def lengths(self) -> tuple[int, int, int]:
        return (
            self.train[1] - self.train[0],
            self.val[1] - self.val[0],
            self.test[1] - self.test[0],
        )


def temporal_split(
    n: int, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
) -> TemporalSplit:
    """Chronological three-way split of ``n`` observations."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    if any(f <= 0 for f in fractions):
        raise ConfigError(f"split fractions must be positive, got {fractions}")
    if n < MIN_SERIES_LENGTH:
        raise DataError(f"series too short to split and window: n={n} < {MIN_SERIES_LENGTH}")
    b1 = math.floor(n * fractions[0])
    b2 = math.floor(n * (fractions[0] + fractions[1]))
    if not (0 < b1 < b2 < n):
        raise ConfigError(f"degenerate split boundaries ({b1}, {b2}) for n={n}")
    return TemporalSplit(n=n, train=(0, b1), val=(b1, b2), test=(b2, n))


@dataclass(frozen=True)
class MinMaxScaler:
    """Affine map of [observed_min, observed_max] onto [0, 1].

    Fitted exclusively on the training segment; values outside the
    fitted range extrapolate linearly (no clamping).
    """

    observed_min: float
    observed_max: float
    fitted_on: str = "train"

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.observed_min) / (
            self.observed_max - self.observed_min
        )

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (
            self.observed_max - self.observed_min
        ) + self.observed_min


def fit_scaler(train_values: np.ndarray, fitted_on: str = "train") -> MinMaxScaler:
    values = np.asarray(train_values, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot fit a scaler on an empty segment")
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        raise DataError("constant segment: min-max scaling is undefined")
    return MinMaxScaler(observed_min=lo, observed_max=hi, fitted_on=fitted_on)


@dataclass(frozen=True)
class WindowSet:
    """A batch of supervised windows drawn from one scaled series.

    ``inputs`` has shape (count, seq_len), ``targets`` (count, horizon),
    and ``origins`` holds the global series index of each window's first
    input element, so window i covers
    ``series[origins[i] : origins[i] + seq_len + horizon]``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    origins: np.ndarray

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise DataError("window arrays must be 2-D")
        if not (len(self.inputs) == len(self.targets) == len(self.origins)):
            raise DataError("window arrays disagree on count")

    @property
    def count(self) -> int:
        return len(self.inputs)

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[1]

    @property
    def target_starts(self) -> np.ndarray:
        """Global index of each window's first target element."""
        return self.origins + self.seq_len

    def fingerprint(self) -> str:
        """Stable identity of the evaluation grid (not the values)."""
        import hashlib

        h = hashlib.sha256()
        h.update(struct.pack("<QQQ", self.count, self.seq_len, self.horizon))
        h.update(np.ascontiguousarray(self.origins, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


def make_windows(
    values: np.ndarray,
    start: int,
    stop: int,
    seq_len: int = SEQ_LEN,
    horizon: int = HORIZON,
    stride: int = 1,
) -> WindowSet:
    """Enumerate target-anchored windows over ``values[start:stop]``.

    Target blocks begin at start, start+stride, ... and must end by
    ``stop``; each window's input context is the ``seq_len`` values
    immediately before its target block, which may lie before ``start``.
    Anchors without a full input history (only possible when ``start``
    is within the first ``seq_len`` positions of the series) are skipped.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise DataError("windowing expects a 1-D series")
    if not (0 <= start < stop <= len(values)):
        raise DataError(f"bad window range [{start}, {stop}) for series of {len(values)}")
    if seq_len < 1 or horizon < 1 or stride < 1:
        raise ConfigError("seq_len, horizon, and stride must all be >= 1")
    if stop - start < horizon:
        raise DataError(f"range of {stop - start} is shorter than horizon {horizon}")

    first = max(start, seq_len)
    anchors = np.arange(first, stop - horizon + 1, stride, dtype=np.int64)
    if anchors.size == 0:
        raise DataError("no window fits: range too short for the input context")
    origins = anchors - seq_len
    inputs = np.stack([values[a - seq_len : a] for a in anchors])
    targets = np.stack([values[a : a + horizon] for a in anchors])
    return WindowSet(inputs=inputs, targets=targets, origins=origins)


# Flat binary layout: three little-endian uint64 (count, seq_len,
# horizon), then origins as little-endian int64, then inputs and targets
# as little-endian float64 in row-major order.
_HEADER = struct.Struct("<QQQ")


def save_windows(windows: WindowSet, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(windows.count, windows.seq_len, windows.horizon))
        fh.write(np.ascontiguousarray(windows.origins, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(windows.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(windows.targets, dtype="<f8").tobytes())


def load_windows(path: str) -> WindowSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated window file")
    count, seq_len, horizon = _HEADER.unpack_from(raw, 0)
    expected = _HEADER.size + 8 * count * (1 + seq_len + horizon)
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HEADER.size
    origins = np.frombuffer(raw, dtype="<i8", count=count, offset=off).copy()
    off += 8 * count
    inputs = (
        np.frombuffer(raw, dtype="<f8", count=count * seq_len, offset=off)
        .reshape(count, seq_len)
        .copy()
    )
    off += 8 * count * seq_len
    targets = (
        np.frombuffer(raw, dtype="<f8", count=count * horizon, offset=off)
        .reshape(count, horizon)
        .copy()
    )
    return WindowSet(inputs=inputs, targets=targets, origins=origins.astype(np.int64))
