"""Temporal position encodings: fixed sinusoidal and learnable Time2Vec.

The Time2Vec map of a scalar time value tau is a k-vector whose first
channel is linear, ``omega_0 * tau + phi_0``, and whose remaining
channels are ``sin(omega_i * tau + phi_i)``. Frequencies are
initialized on a geometric grid and phases uniformly on [0, 2*pi); both
are trainable thereafter.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ConfigError

T2V_K = 32
T2V_F_LOW = 0.01
T2V_F_HIGH = 10.0


def sinusoidal_encoding(seq_len: int, d_model: int) -> np.ndarray:
    """Classic fixed encoding: even channels sine, odd channels cosine,
    with wavelengths geometric in 10000^(2i/d_model)."""
    if seq_len < 1 or d_model < 2 or d_model % 2:
        raise ConfigError(f"bad encoding size ({seq_len}, {d_model})")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / d_model)
    enc = np.empty((seq_len, d_model), dtype=np.float64)
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles)
    return enc


def init_time2vec(
    k: int = T2V_K,
    f_low: float = T2V_F_LOW,
    f_high: float = T2V_F_HIGH,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Initial (omega, phi): frequencies geometric from f_low to f_high
    inclusive, phases uniform on [0, 2*pi)."""
    if k < 2:
        raise ConfigError(f"time2vec needs k >= 2, got {k}")
    if not 0 < f_low < f_high:
        raise ConfigError(f"bad frequency band [{f_low}, {f_high}]")
    omega = f_low * (f_high / f_low) ** (np.arange(k, dtype=np.float64) / (k - 1))
    if rng is None:
        rng = np.random.default_rng(0)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=k)
    return omega, phi


def time2vec(tau, omega: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Reference (non-differentiable) Time2Vec map.

    ``tau`` may be a scalar or an array; the result appends a trailing
    axis of length k. Channel 0 is linear, channels 1..k-1 sinusoidal.
    """
    tau = np.asarray(tau, dtype=np.float64)
    arg = tau[..., None] * omega + phi
    out = np.sin(arg)
    out[..., 0] = arg[..., 0]
    return out


def normalize_tau(indices, n_total: int) -> np.ndarray:
    """Map global series positions onto [0, 1] as index / (n_total - 1)."""
    if n_total < 2:
        raise ConfigError("need at least two observations to normalize time")
    return np.asarray(indices, dtype=np.float64) / (n_total - 1)
