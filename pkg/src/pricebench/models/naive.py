"""Persistence baseline: repeat the last observed value."""

from __future__ import annotations

import numpy as np

from ..splitting import WindowSet
from .base import EpochStats, ForecastModel, SeriesData, TrainConfig


class NaivePersistence(ForecastModel):
    """Forecasts every step of the horizon as the final input value.

    Has no trainable state; kept behind the common interface so the
    evaluation grid and reporting treat it like any other model.
    """

    kind = "naive"

    def __init__(self, horizon: int = 14) -> None:
        self.horizon = horizon

    def fit(self, data: SeriesData, cfg: TrainConfig) -> list[EpochStats]:
        return []

    def predict(self, data: SeriesData, windows: WindowSet) -> np.ndarray:
        if windows.horizon != self.horizon:
            raise ValueError(
                f"window horizon {windows.horizon} != model horizon {self.horizon}"
            )
        last = windows.inputs[:, -1:]
        return np.repeat(last, self.horizon, axis=1)

    def hyperparameters(self) -> dict:
        return {"horizon": self.horizon}
