"""Neural forecasters built on the in-package autodiff engine.

Two architectures:

* a two-layer bidirectional LSTM whose concatenated final states feed a
  linear head;
* a two-layer pre-norm transformer encoder (norm first, then attention
  or feed-forward, then the residual add) read out at the last token.

The transformer comes in two variants that differ only in the temporal
encoding added to the value embedding: a fixed sinusoidal table, or a
trainable Time2Vec layer projected up to the model width. Everything
else, including initialization draw order and dropout draws, is shared,
so the pair is a clean ablation of the encoding alone.

Initialization draw order (stream ``init``): parameters in declaration
order, weights and linear biases uniform on +/-sqrt(1/fan_in); layer
norm scales start at one and shifts at zero (no draws); LSTM biases
start at zero except the forget gate's, which starts at one. Encoding
parameters (Time2Vec phases and projection) draw from the separate
``encoding`` stream so both variants see identical shared-stack draws.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import DrawStreams, Parameter, Tensor
from ..exceptions import ConfigError, DataError
from ..splitting import WindowSet
from .base import EpochStats, ForecastModel, SeriesData, TrainConfig
from .temporal import (
    T2V_F_HIGH,
    T2V_F_LOW,
    T2V_K,
    init_time2vec,
    normalize_tau,
    sinusoidal_encoding,
)
from .training import train_model

_PREDICT_CHUNK = 256


def lstm_layer(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """One LSTM pass over a (batch, seq, features) tensor.

    Gate layout along the last axis of the weights is [input, forget,
    cell, output]. Implemented as a single fused op: the forward stores
    per-step activations and the backward replays the recurrence, which
    keeps the tape small on long sequences.
    """
    B, S, D = x.data.shape
    H = wh.data.shape[0]
    if wx.data.shape != (D, 4 * H) or wh.data.shape != (H, 4 * H) or b.data.shape != (4 * H,):
        raise ValueError("inconsistent LSTM weight shapes")

    xw = x.data @ wx.data + b.data  # (B, S, 4H)
    order = range(S - 1, -1, -1) if reverse else range(S)
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.empty((B, S, H))
    gates_i = np.empty((B, S, H))
    gates_f = np.empty((B, S, H))
    gates_g = np.empty((B, S, H))
    gates_o = np.empty((B, S, H))
    c_prev_all = np.empty((B, S, H))
    tanh_c = np.empty((B, S, H))
    h_prev_all = np.empty((B, S, H))

    for t in order:
        pre = xw[:, t] + h @ wh.data
        sig = 1.0 / (1.0 + np.exp(-pre[:, : 2 * H]))  # input and forget gates share a call
        i = sig[:, :H]
        f = sig[:, H:]
        g = np.tanh(pre[:, 2 * H : 3 * H])
        o = 1.0 / (1.0 + np.exp(-pre[:, 3 * H :]))
        h_prev_all[:, t] = h
        c_prev_all[:, t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
        tanh_c[:, t] = tc
        out[:, t] = h

    def back(grad: np.ndarray):
        dh_carry = np.zeros((B, H))
        dc_carry = np.zeros((B, H))
        dpre_all = np.empty((B, S, 4 * H))
        for t in reversed(list(order)):
            dh = grad[:, t] + dh_carry
            i, f, g, o = gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t]
            tc = tanh_c[:, t]
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev_all[:, t]
            dpre = np.empty((B, 4 * H))
            dpre[:, :H] = di * i * (1.0 - i)
            dpre[:, H : 2 * H] = df * f * (1.0 - f)
            dpre[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
            dpre[:, 3 * H :] = do * o * (1.0 - o)
            dpre_all[:, t] = dpre
            dh_carry = dpre @ wh.data.T
            dc_carry = dc * f
        flat_pre = dpre_all.reshape(B * S, 4 * H)
        gwx = x.data.reshape(B * S, D).T @ flat_pre
        gwh = h_prev_all.reshape(B * S, H).T @ flat_pre
        gb = flat_pre.sum(axis=0)
        gx = dpre_all @ wx.data.T
        return gx, gwx, gwh, gb

    return ad.record_op(out, (x, wx, wh, b), back)


class _NeuralModel(ForecastModel):
    """Common plumbing: parameter registry, training, batched predict."""

    def __init__(self, seed: int, salt: tuple[int, ...] = ()) -> None:
        self.streams = DrawStreams(seed, salt)
        self._params: list[Parameter] = []
        self.seed = seed
        self.salt = salt

    def _add(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(data, name=name)
        self._params.append(p)
        return p

    def parameters(self) -> list[Parameter]:
        return self._params

    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(p.name, p.data.shape) for p in self._params]

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self._params))

    def forward(
        self,
        inputs: np.ndarray,
        origins: np.ndarray,
        n_total: int,
        training: bool = False,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        raise NotImplementedError

    def fit(self, data: SeriesData, cfg: TrainConfig) -> list[EpochStats]:
        return train_model(self, data, cfg)

    def predict(self, data: SeriesData, windows: WindowSet) -> np.ndarray:
        out = np.empty((windows.count, windows.horizon))
        for lo in range(0, windows.count, _PREDICT_CHUNK):
            hi = min(lo + _PREDICT_CHUNK, windows.count)
            pred = self.forward(
                windows.inputs[lo:hi], windows.origins[lo:hi], data.n_total, training=False
            )
            out[lo:hi] = pred.data
        return out

    def state_values(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self._params])

    def load_state_values(self, values: np.ndarray) -> None:
        total = self.parameter_count()
        if values.size != total:
            raise DataError(f"{self.kind}: expected {total} values, got {values.size}")
        off = 0
        for p in self._params:
            n = p.data.size
            p.data = values[off : off + n].reshape(p.data.shape)
            off += n

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self._params]

    def restore(self, snap: list[np.ndarray]) -> None:
        for p, arr in zip(self._params, snap):
            p.data = arr.copy()


class BiLstmForecaster(_NeuralModel):
    """Two stacked bidirectional LSTM layers feeding a linear head."""

    kind = "bilstm"

    def __init__(
        self,
        seq_len: int = 90,
        horizon: int = 14,
        hidden: int = 64,
        num_layers: int = 2,
        seed: int = 42,
        salt: tuple[int, ...] = (),
    ) -> None:
        super().__init__(seed, salt)
        self.seq_len = seq_len
        self.horizon = horizon
        self.hidden = hidden
        self.num_layers = num_layers
        rng = self.streams.init
        self.layers: list[dict[str, Parameter]] = []
        in_size = 1
        for layer in range(num_layers):
            entry: dict[str, Parameter] = {}
            for direction in ("fwd", "bwd"):
                prefix = f"l{layer}_{direction}"
                entry[f"{direction}_wx"] = self._add(
                    f"{prefix}_wx", ad.uniform_init(rng, (in_size, 4 * hidden), in_size)
                )
                entry[f"{direction}_wh"] = self._add(
                    f"{prefix}_wh", ad.uniform_init(rng, (hidden, 4 * hidden), hidden)
                )
                bias = np.zeros(4 * hidden)
                bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
                entry[f"{direction}_b"] = self._add(f"{prefix}_b", bias)
            self.layers.append(entry)
            in_size = 2 * hidden
        self.head_w = self._add(
            "head_w", ad.uniform_init(rng, (2 * hidden, horizon), 2 * hidden)
        )
        self.head_b = self._add("head_b", ad.uniform_init(rng, (horizon,), 2 * hidden))

    def hyperparameters(self) -> dict:
        return {
            "seq_len": self.seq_len,
            "horizon": self.horizon,
            "hidden": self.hidden,
            "num_layers": self.num_layers,
            "seed": self.seed,
            "salt": list(self.salt),
        }

    def forward(self, inputs, origins, n_total, training=False, dropout=0.0, rng=None):
        B, S = inputs.shape
        x = Tensor(inputs.reshape(B, S, 1))
        fwd = bwd = None
        for idx, layer in enumerate(self.layers):
            fwd = lstm_layer(
                x, layer["fwd_wx"].tensor, layer["fwd_wh"].tensor, layer["fwd_b"].tensor
            )
            bwd = lstm_layer(
                x,
                layer["bwd_wx"].tensor,
                layer["bwd_wh"].tensor,
                layer["bwd_b"].tensor,
                reverse=True,
            )
            x = ad.concat([fwd, bwd], axis=-1)
            if training and idx < self.num_layers - 1:
                x = ad.dropout(x, dropout, rng)
        # final states: forward direction at the last step, backward at the first
        last_f = ad.reshape(ad.slice_axis(fwd, 1, S - 1, 1), (B, self.hidden))
        last_b = ad.reshape(ad.slice_axis(bwd, 1, 0, 1), (B, self.hidden))
        state = ad.concat([last_f, last_b], axis=-1)
        return ad.add(ad.matmul(state, self.head_w.tensor), self.head_b.tensor)


class TransformerForecaster(_NeuralModel):
    """Pre-norm transformer encoder with a last-token linear head."""

    kind = "transformer"

    def __init__(
        self,
        seq_len: int = 90,
        horizon: int = 14,
        d_model: int = 64,
        n_heads: int = 4,
        d_ff: int = 256,
        num_layers: int = 2,
        encoding: str = "sinusoidal",
        t2v_k: int = T2V_K,
        seed: int = 42,
        salt: tuple[int, ...] = (),
    ) -> None:
        super().__init__(seed, salt)
        if d_model % n_heads:
            raise ConfigError(f"d_model {d_model} not divisible by {n_heads} heads")
        if encoding not in ("sinusoidal", "t2v"):
            raise ConfigError(f"unknown temporal encoding {encoding!r}")
        self.seq_len = seq_len
        self.horizon = horizon
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.d_ff = d_ff
        self.num_layers = num_layers
        self.encoding = encoding
        self.t2v_k = t2v_k
        if encoding == "t2v":
            self.kind = "t2v_transformer"

        rng = self.streams.init
        self.value_w = self._add("value_w", ad.uniform_init(rng, (1, d_model), 1))
        self.value_b = self._add("value_b", ad.uniform_init(rng, (d_model,), 1))
        self.blocks: list[dict[str, Parameter]] = []
        for layer in range(num_layers):
            blk: dict[str, Parameter] = {}
            pre = f"l{layer}"
            blk["ln1_g"] = self._add(f"{pre}_ln1_g", np.ones(d_model))
            blk["ln1_b"] = self._add(f"{pre}_ln1_b", np.zeros(d_model))
            for name in ("q", "k", "v", "o"):
                blk[f"w{name}"] = self._add(
                    f"{pre}_w{name}", ad.uniform_init(rng, (d_model, d_model), d_model)
                )
                blk[f"b{name}"] = self._add(
                    f"{pre}_b{name}", ad.uniform_init(rng, (d_model,), d_model)
                )
            blk["ln2_g"] = self._add(f"{pre}_ln2_g", np.ones(d_model))
            blk["ln2_b"] = self._add(f"{pre}_ln2_b", np.zeros(d_model))
            blk["ff1_w"] = self._add(f"{pre}_ff1_w", ad.uniform_init(rng, (d_model, d_ff), d_model))
            blk["ff1_b"] = self._add(f"{pre}_ff1_b", ad.uniform_init(rng, (d_ff,), d_model))
            blk["ff2_w"] = self._add(f"{pre}_ff2_w", ad.uniform_init(rng, (d_ff, d_model), d_ff))
            blk["ff2_b"] = self._add(f"{pre}_ff2_b", ad.uniform_init(rng, (d_model,), d_ff))
            self.blocks.append(blk)
        self.final_g = self._add("final_ln_g", np.ones(d_model))
        self.final_b = self._add("final_ln_b", np.zeros(d_model))
        self.head_w = self._add("head_w", ad.uniform_init(rng, (d_model, horizon), d_model))
        self.head_b = self._add("head_b", ad.uniform_init(rng, (horizon,), d_model))

        if encoding == "t2v":
            enc_rng = self.streams.encoding
            omega, phi = init_time2vec(t2v_k, T2V_F_LOW, T2V_F_HIGH, enc_rng)
            self.t2v_omega = self._add("t2v_omega", omega)
            self.t2v_phi = self._add("t2v_phi", phi)
            self.t2v_proj_w = self._add(
                "t2v_proj_w", ad.uniform_init(enc_rng, (t2v_k, d_model), t2v_k)
            )
            self.t2v_proj_b = self._add("t2v_proj_b", ad.uniform_init(enc_rng, (d_model,), t2v_k))
        else:
            self._pe_cache: dict[int, np.ndarray] = {}

    def hyperparameters(self) -> dict:
        return {
            "seq_len": self.seq_len,
            "horizon": self.horizon,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "num_layers": self.num_layers,
            "encoding": self.encoding,
            "t2v_k": self.t2v_k,
            "seed": self.seed,
            "salt": list(self.salt),
        }

    def _temporal_encoding(self, B: int, S: int, origins: np.ndarray, n_total: int) -> Tensor:
        if self.encoding == "sinusoidal":
            if S not in self._pe_cache:
                self._pe_cache[S] = sinusoidal_encoding(S, self.d_model)
            return Tensor(self._pe_cache[S])  # (S, d) suffix-broadcasts over batch
        positions = origins[:, None] + np.arange(S)[None, :]
        tau = Tensor(normalize_tau(positions, n_total)[..., None])  # (B, S, 1)
        omega_row = ad.reshape(self.t2v_omega.tensor, (1, self.t2v_k))
        arg = ad.add(ad.matmul(tau, omega_row), self.t2v_phi.tensor)  # (B, S, k)
        linear = ad.slice_axis(arg, -1, 0, 1)
        periodic = ad.sin(ad.slice_axis(arg, -1, 1, self.t2v_k - 1))
        feats = ad.concat([linear, periodic], axis=-1)
        return ad.add(ad.matmul(feats, self.t2v_proj_w.tensor), self.t2v_proj_b.tensor)

    def _split_heads(self, t: Tensor, B: int, S: int) -> Tensor:
        # contiguous d_head blocks of the last axis become a stacked head axis
        t = ad.reshape(t, (B, S, self.n_heads, self.d_head))
        return ad.permute_axes(t, (0, 2, 1, 3))

    def _attention(self, nx: Tensor, blk: dict[str, Parameter], B: int, S: int) -> Tensor:
        q = self._split_heads(ad.add(ad.matmul(nx, blk["wq"].tensor), blk["bq"].tensor), B, S)
        k = self._split_heads(ad.add(ad.matmul(nx, blk["wk"].tensor), blk["bk"].tensor), B, S)
        v = self._split_heads(ad.add(ad.matmul(nx, blk["wv"].tensor), blk["bv"].tensor), B, S)
        scale = 1.0 / math.sqrt(self.d_head)
        scores = ad.mul(ad.matmul(q, ad.transpose_last2(k)), scale)
        ctx = ad.matmul(ad.softmax(scores), v)  # (B, heads, S, d_head)
        merged = ad.reshape(ad.permute_axes(ctx, (0, 2, 1, 3)), (B, S, self.d_model))
        return ad.add(ad.matmul(merged, blk["wo"].tensor), blk["bo"].tensor)

    def forward(self, inputs, origins, n_total, training=False, dropout=0.0, rng=None):
        B, S = inputs.shape
        x = Tensor(inputs.reshape(B, S, 1))
        h = ad.add(
            ad.add(ad.matmul(x, self.value_w.tensor), self.value_b.tensor),
            self._temporal_encoding(B, S, origins, n_total),
        )
        if training:
            h = ad.dropout(h, dropout, rng)
        for blk in self.blocks:
            nx = ad.layer_norm(h, blk["ln1_g"].tensor, blk["ln1_b"].tensor)
            att = self._attention(nx, blk, B, S)
            if training:
                att = ad.dropout(att, dropout, rng)
            h = ad.add(h, att)
            nx2 = ad.layer_norm(h, blk["ln2_g"].tensor, blk["ln2_b"].tensor)
            ff = ad.add(
                ad.matmul(
                    ad.relu(ad.add(ad.matmul(nx2, blk["ff1_w"].tensor), blk["ff1_b"].tensor)),
                    blk["ff2_w"].tensor,
                ),
                blk["ff2_b"].tensor,
            )
            if training:
                ff = ad.dropout(ff, dropout, rng)
            h = ad.add(h, ff)
        h = ad.layer_norm(h, self.final_g.tensor, self.final_b.tensor)
        last = ad.reshape(ad.slice_axis(h, 1, S - 1, 1), (B, self.d_model))
        return ad.add(ad.matmul(last, self.head_w.tensor), self.head_b.tensor)


def build_model(kind: str, seq_len: int = 90, horizon: int = 14, seed: int = 42,
                salt: tuple[int, ...] = ()) -> ForecastModel:
    """Factory covering the three neural kinds (classical kinds are
    constructed directly where needed)."""
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
    raise ConfigError(f"unknown neural model kind {kind!r}")
