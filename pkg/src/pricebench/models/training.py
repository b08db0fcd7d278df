"""Shared mini-batch training loop for the neural forecasters.

Protocol: Adam with bias correction, mean Huber loss in scaled space,
seeded shuffling each epoch, learning-rate halving after a validation
plateau, early stopping on the validation loss, and restoration of the
best-validation weights before returning. An epoch improves only when
it beats the best validation loss by more than ``min_delta``; plateau
counting, early stopping, and the restored snapshot all share that
notion of improvement.

Draw order on the model's ``train`` stream: one index permutation at
the top of each epoch, then within every batch the dropout masks in
forward order. Nothing else touches that stream, so a (seed, salt)
pair fixes the whole trajectory bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..exceptions import NumericError
from ..splitting import WindowSet
from .base import EpochStats, SeriesData, TrainConfig


def evaluation_loss(model, windows: WindowSet, n_total: int, delta: float,
                    chunk: int = 256) -> float:
    """Mean Huber loss over a window set with dropout off and no tape."""
    total = 0.0
    for lo in range(0, windows.count, chunk):
        hi = min(lo + chunk, windows.count)
        pred = model.forward(windows.inputs[lo:hi], windows.origins[lo:hi], n_total,
                             training=False)
        loss = ad.huber_loss(pred, ad.Tensor(windows.targets[lo:hi]), delta)
        total += loss.item() * (hi - lo)
    return total / windows.count


def train_model(model, data: SeriesData, cfg: TrainConfig,
                on_epoch=None) -> list[EpochStats]:
    """Run the full protocol; the model ends up holding the weights of
    its best validation epoch.

    ``on_epoch``, when given, is called with each epoch's stats after
    bookkeeping; returning True requests a stop (the best weights seen
    so far are still restored). Useful for external budgets and
    reached-target checks.
    """
    train_ws = data.windows["train"]
    val_ws = data.windows["val"]
    n_total = data.n_total
    rng = model.streams.train
    params = model.parameters()

    lr = cfg.lr
    best_val = math.inf
    best_snap = model.snapshot()
    epochs_since_best = 0
    plateau_count = 0
    step = 0
    history: list[EpochStats] = []

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(train_ws.count)
        run_loss = 0.0
        for lo in range(0, train_ws.count, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            with ad.Tape() as tape:
                pred = model.forward(
                    train_ws.inputs[idx],
                    train_ws.origins[idx],
                    n_total,
                    training=True,
                    dropout=cfg.dropout,
                    rng=rng,
                )
                loss = ad.huber_loss(pred, ad.Tensor(train_ws.targets[idx]), cfg.huber_delta)
            ad.backward(tape, loss)
            step += 1
            ad.adam_step(params, lr=lr, step=step)
            for p in params:
                p.zero_grad()
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"training loss diverged at epoch {epoch}")
            run_loss += value * len(idx)
        train_loss = run_loss / train_ws.count
        val_loss = evaluation_loss(model, val_ws, n_total, cfg.huber_delta)
        if not math.isfinite(val_loss):
            raise NumericError(f"validation loss diverged at epoch {epoch}")
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss, lr=lr))

        if val_loss < best_val - cfg.min_delta:
            best_val = val_loss
            best_snap = model.snapshot()
            epochs_since_best = 0
            plateau_count = 0
        else:
            epochs_since_best += 1
            plateau_count += 1
            if plateau_count >= cfg.plateau_patience:
                lr *= cfg.plateau_factor
                plateau_count = 0
            if epochs_since_best >= cfg.early_stop_patience:
                break
        if on_epoch is not None and on_epoch(history[-1]):
            break

    model.restore(best_snap)
    return history
