"""Shared training loop: scheduling, early stop, restore, determinism."""

import numpy as np
import pytest

from pricebench.exceptions import NumericError
from pricebench.models.base import TrainConfig, build_series_data
from pricebench.models.neural import BiLstmForecaster
from pricebench.models.training import evaluation_loss, train_model


def toy_model(seed=42):
    return BiLstmForecaster(seq_len=8, horizon=3, hidden=4, num_layers=1, seed=seed)


def toy_data(values):
    return build_series_data(values, seq_len=8, horizon=3, scale=False)


def noise_data(seed=0, n=300):
    return toy_data(np.random.default_rng(seed).normal(size=n))


def replay_schedule(history, cfg):
    """Recompute the lr sequence and stop epoch the controller should have
    produced for the recorded validation losses."""
    lr = cfg.lr
    best = np.inf
    since = plateau = 0
    lrs = []
    stopped = False
    for st in history:
        lrs.append(lr)
        if st.val_loss < best - cfg.min_delta:
            best = st.val_loss
            since = plateau = 0
        else:
            since += 1
            plateau += 1
            if plateau >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                plateau = 0
            if since >= cfg.early_stop_patience:
                stopped = True
                break
    return lrs, stopped


class TestSchedule:
    def test_plateau_halving_and_early_stop(self):
        cfg = TrainConfig(plateau_patience=2, early_stop_patience=5, max_epochs=40)
        model = toy_model()
        history = train_model(model, noise_data(), cfg)

        assert len(history) < cfg.max_epochs  # early stop fired
        assert [h.epoch for h in history] == list(range(1, len(history) + 1))

        lrs, stopped = replay_schedule(history, cfg)
        assert stopped
        assert len(lrs) == len(history)
        # recorded lr is the one in force during the epoch; halvings take
        # effect from the next epoch on
        assert [h.lr for h in history] == lrs
        assert history[-1].lr < cfg.lr  # at least one halving happened

        # the last early_stop_patience epochs never beat the best
        best = min(h.val_loss for h in history)
        tail = history[-cfg.early_stop_patience:]
        assert all(h.val_loss >= best for h in tail)
        assert best < history[0].val_loss

    def test_best_weights_restored(self):
        cfg = TrainConfig(plateau_patience=2, early_stop_patience=5, max_epochs=40)
        data = noise_data()
        model = toy_model()
        history = train_model(model, data, cfg)
        # best epoch is strictly before the stop, so restore must rewind
        restored = evaluation_loss(model, data.windows["val"], data.n_total,
                                   cfg.huber_delta)
        assert restored == min(h.val_loss for h in history)
        assert restored < history[-1].val_loss

    def test_min_delta_defines_stagnation(self):
        # with an absurd threshold nothing after epoch 1 counts as an
        # improvement, so the stop lands exactly at 1 + patience
        cfg = TrainConfig(min_delta=10.0, early_stop_patience=4, max_epochs=40)
        data = noise_data()
        model = toy_model()
        history = train_model(model, data, cfg)
        assert len(history) == 1 + cfg.early_stop_patience
        # restore still rewinds to the epoch-1 snapshot
        restored = evaluation_loss(model, data.windows["val"], data.n_total,
                                   cfg.huber_delta)
        assert restored == history[0].val_loss

    def test_on_epoch_callback_stops(self):
        data = noise_data()
        model = toy_model()
        calls = []

        def stop_at_three(st):
            calls.append(st.epoch)
            return st.epoch >= 3

        history = train_model(model, data, TrainConfig(max_epochs=40), stop_at_three)
        assert calls == [1, 2, 3]
        assert len(history) == 3
        restored = evaluation_loss(model, data.windows["val"], data.n_total, 1.0)
        assert restored == min(h.val_loss for h in history)


class TestTraining:
    def test_unscaled_constant_series_learns(self):
        # constant segments cannot be scaled, so this exercises scale=False
        data = toy_data(np.full(300, 0.5))
        model = toy_model()
        history = train_model(model, data, TrainConfig(max_epochs=12))
        assert history[-1].val_loss < 0.5 * history[0].val_loss
        assert all(np.isfinite(h.train_loss) for h in history)

    def test_same_seed_same_trajectory(self):
        data = noise_data()
        cfg = TrainConfig(max_epochs=3)
        a, b = toy_model(), toy_model()
        ha = train_model(a, data, cfg)
        hb = train_model(b, data, cfg)
        assert ha == hb
        assert np.array_equal(a.state_values(), b.state_values())

    def test_different_seed_diverges(self):
        data = noise_data()
        cfg = TrainConfig(max_epochs=2)
        a, b = toy_model(seed=42), toy_model(seed=43)
        train_model(a, data, cfg)
        train_model(b, data, cfg)
        assert not np.array_equal(a.state_values(), b.state_values())

    def test_non_finite_data_raises(self):
        values = np.full(300, 0.5)
        values[40] = np.nan
        data = toy_data(values)
        with pytest.raises(NumericError):
            train_model(toy_model(), data, TrainConfig(max_epochs=2))


class TestEvaluationLoss:
    def test_chunking_is_an_implementation_detail(self):
        data = noise_data()
        model = toy_model()
        ws = data.windows["val"]
        full = evaluation_loss(model, ws, data.n_total, 1.0, chunk=256)
        for chunk in (1, 5, ws.count + 7):
            assert evaluation_loss(model, ws, data.n_total, 1.0, chunk=chunk) == \
                pytest.approx(full, rel=1e-12)

    def test_dropout_off_and_deterministic(self):
        data = noise_data()
        model = toy_model()
        ws = data.windows["val"]
        first = evaluation_loss(model, ws, data.n_total, 1.0)
        assert evaluation_loss(model, ws, data.n_total, 1.0) == first
