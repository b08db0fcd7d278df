"""Forecaster implementations behind one fit/predict contract."""

from __future__ import annotations

from ..exceptions import ConfigError
from .base import (
    DEEP_KINDS,
    MODEL_KINDS,
    EpochStats,
    ForecastModel,
    SeriesData,
    TrainConfig,
    build_series_data,
    read_checkpoint,
    save_checkpoint,
)
from .naive import NaivePersistence
from .neural import BiLstmForecaster, TransformerForecaster, lstm_layer
from .sarima import SarimaForecaster, SarimaOrder, select_orders
from .training import evaluation_loss, train_model

__all__ = [
    "DEEP_KINDS",
    "MODEL_KINDS",
    "EpochStats",
    "ForecastModel",
    "SeriesData",
    "TrainConfig",
    "BiLstmForecaster",
    "NaivePersistence",
    "SarimaForecaster",
    "SarimaOrder",
    "TransformerForecaster",
    "build_forecaster",
    "build_series_data",
    "evaluation_loss",
    "lstm_layer",
    "read_checkpoint",
    "save_checkpoint",
    "select_orders",
    "train_model",
]


def build_forecaster(kind: str, seq_len: int = 90, horizon: int = 14,
                     seed: int = 42, salt: tuple[int, ...] = ()) -> ForecastModel:
    """Construct any of the five forecaster kinds with shared defaults."""
    if kind == "naive":
        return NaivePersistence(horizon=horizon)
    if kind == "sarima":
        return SarimaForecaster(horizon=horizon)
    if kind == "bilstm":
        return BiLstmForecaster(seq_len=seq_len, horizon=horizon, seed=seed, salt=salt)
    if kind == "transformer":
        return TransformerForecaster(
            seq_len=seq_len, horizon=horizon, encoding="sinusoidal", seed=seed, salt=salt
        )
    if kind == "t2v_transformer":
        return TransformerForecaster(
            seq_len=seq_len, horizon=horizon, encoding="t2v", seed=seed, salt=salt
        )
    raise ConfigError(f"unknown model kind {kind!r}")
