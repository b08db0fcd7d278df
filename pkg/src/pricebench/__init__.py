"""Benchmark toolkit for daily commodity price forecasting.

Ingests daily min/max price quotes, repairs and scales them, runs
stationarity and seasonality diagnostics, trains classical and neural
forecasters under one protocol, and compares forecast accuracy with a
small-sample-corrected Diebold-Mariano test.
"""

from .exceptions import ConfigError, DataError, NumericError, PricebenchError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "PricebenchError",
    "__version__",
]
