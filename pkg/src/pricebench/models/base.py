"""Shared forecaster contract, training configuration, and checkpoints.

Every model, classical or neural, exposes ``fit(data, cfg)`` and
``predict(data, windows)``. Predictions are produced in scaled space on
a per-window basis, exactly ``horizon`` values per window; callers map
them back to price units through the series scaler.
"""

from __future__ import annotations

import json
import struct
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import ConfigError, DataError
from ..splitting import (
    HORIZON,
    SEQ_LEN,
    MinMaxScaler,
    TemporalSplit,
    WindowSet,
    fit_scaler,
    make_windows,
    temporal_split,
)

MODEL_KINDS = ("naive", "sarima", "bilstm", "transformer", "t2v_transformer")
DEEP_KINDS = ("bilstm", "transformer", "t2v_transformer")


@dataclass(frozen=True)
class TrainConfig:
    """Knobs of the shared training protocol."""

    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 150
    plateau_factor: float = 0.5
    plateau_patience: int = 10
    early_stop_patience: int = 20
    # a validation epoch counts as stagnant unless it beats the best by
    # more than this; without a threshold, microscopic float-level gains
    # keep resetting the patience forever on already-converged problems
    min_delta: float = 1e-6
    huber_delta: float = 1.0
    dropout: float = 0.1
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0 < self.lr:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be nonnegative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass(frozen=True)
class SeriesData:
    """Everything a forecaster may need about one prepared series."""

    commodity: str
    scaled: np.ndarray
    split: TemporalSplit
    windows: dict[str, WindowSet]
    scaler: MinMaxScaler | None = None

    @property
    def n_total(self) -> int:
        return len(self.scaled)


def build_series_data(
    values: np.ndarray,
    commodity: str = "series",
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seq_len: int = SEQ_LEN,
    horizon: int = HORIZON,
    eval_stride: int = 1,
    scale: bool = True,
) -> SeriesData:
    """Split, scale on the training segment only, and window a raw series.

    Train and validation windows are always stride 1 (training and early
    stopping see every window); ``eval_stride`` thins only the test grid.
    """
    values = np.asarray(values, dtype=np.float64)
    split = temporal_split(len(values), fractions)
    scaler = None
    scaled = values
    if scale:
        scaler = fit_scaler(values[split.train[0] : split.train[1]])
        scaled = scaler.transform(values)
    windows = {
        "train": make_windows(scaled, *split.train, seq_len, horizon, 1),
        "val": make_windows(scaled, *split.val, seq_len, horizon, 1),
        "test": make_windows(scaled, *split.test, seq_len, horizon, eval_stride),
    }
    # no training target may leak past the training boundary
    train_ws = windows["train"]
    assert int(train_ws.origins.max()) + seq_len + horizon <= split.train[1]
    return SeriesData(
        commodity=commodity, scaled=scaled, split=split, windows=windows, scaler=scaler
    )


class ForecastModel(ABC):
    """Uniform fit/predict surface for all five forecaster kinds."""

    kind: str = "abstract"

    @abstractmethod
    def fit(self, data: SeriesData, cfg: TrainConfig) -> list[EpochStats]:
        """Estimate the model; returns per-epoch stats (empty when the
        model has no iterative training)."""

    @abstractmethod
    def predict(self, data: SeriesData, windows: WindowSet) -> np.ndarray:
        """Scaled-space forecasts, shape (windows.count, horizon)."""

    def predict_prices(self, data: SeriesData, windows: WindowSet) -> np.ndarray:
        """Forecasts in original price units."""
        scaled = self.predict(data, windows)
        if data.scaler is None:
            return scaled
        return data.scaler.inverse_transform(scaled)

    def hyperparameters(self) -> dict:
        return {}

    def state_values(self) -> np.ndarray:
        """Trainable/estimated values in declaration order, flattened."""
        return np.empty(0, dtype=np.float64)

    def load_state_values(self, values: np.ndarray) -> None:
        if values.size != 0:
            raise DataError(f"{self.kind} expects an empty state vector")


# ---------------------------------------------------------------------------
# Checkpoint container. Layout, all little-endian:
#   8 bytes  magic "PBMODEL1"
#   u32      format version (1)
#   u16      model-kind length, then that many utf-8 bytes
#   u32      hyperparameter JSON length, then that many utf-8 bytes
#   u64      number of float64 state values
#   payload  the state values in declaration order as '<f8'

_MAGIC = b"PBMODEL1"
_VERSION = 1


def save_checkpoint(model: ForecastModel, path: str) -> None:
    kind = model.kind.encode("utf-8")
    hyper = json.dumps(model.hyperparameters(), sort_keys=True).encode("utf-8")
    values = np.ascontiguousarray(model.state_values(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<H", len(kind)))
        fh.write(kind)
        fh.write(struct.pack("<I", len(hyper)))
        fh.write(hyper)
        fh.write(struct.pack("<Q", values.size))
        fh.write(values.tobytes())


def read_checkpoint(path: str) -> tuple[str, dict, np.ndarray]:
    """Returns (model kind, hyperparameters, state values)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 4 or raw[: len(_MAGIC)] != _MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    (klen,) = struct.unpack_from("<H", raw, off)
    off += 2
    kind = raw[off : off + klen].decode("utf-8")
    off += klen
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    hyper = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    expected = off + 8 * count
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
    return kind, hyper, values
