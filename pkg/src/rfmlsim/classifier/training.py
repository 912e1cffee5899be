"""Adam training loop with early stopping on validation loss."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from ..rng import substream
from .network import (
    ModelConfig,
    ModelParams,
    forward,
    init_params,
    loss,
    loss_and_param_gradients,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 512
    early_stop_patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "early_stop_patience", "max_epochs", "adam_eps"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("Adam betas must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(params[k]) for k in params.learnable}
        self.v = {k: np.zeros_like(params[k]) for k in params.learnable}

    def step(self, params: ModelParams, grads: dict[str, np.ndarray]):
        cfg = self.cfg
        self.step_count += 1
        t = self.step_count
        lr_t = cfg.learning_rate * math.sqrt(1 - cfg.beta2**t) / (1 - cfg.beta1**t)
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            params.tensors[k] -= (lr_t * m / (np.sqrt(v) + cfg.adam_eps)).astype(params[k].dtype)


def evaluate(params: ModelParams, x: np.ndarray, y: np.ndarray, batch_size: int = 1024) -> tuple[float, float]:
    """(mean loss, top-1 accuracy) in inference mode."""
    logits = forward(params, x, batch_size=batch_size)
    return loss(logits, y), float(np.mean(np.argmax(logits, axis=1) == y))


def train(train_set, val_set, model_config: ModelConfig, train_config: TrainConfig, progress=None):
    """Fit a model; returns (best-validation params, per-epoch history).

    ``train_set`` / ``val_set`` are ``(x, labels)`` pairs. Training stops once
    validation loss has not improved for ``early_stop_patience`` epochs or
    after ``max_epochs``.
    """
    x_tr, y_tr = train_set
    x_val, y_val = val_set
    y_tr = np.asarray(y_tr, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(x_tr) == 0 or len(x_val) == 0:
        raise InvalidInputError("training and validation splits must be non-empty")

    params = init_params(model_config, seed=train_config.seed)
    opt = Adam(params, train_config)
    rng = substream(train_config.seed, "train")
    best = params.copy()
    best_loss = math.inf
    stale = 0
    history = []

    for epoch in range(1, train_config.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(x_tr))
        running, seen, correct = 0.0, 0, 0
        for i in range(0, len(order), train_config.batch_size):
            idx = np.sort(order[i:i + train_config.batch_size])
            value, grads, logits = loss_and_param_gradients(params, x_tr[idx], y_tr[idx], train=True, rng=rng)
            opt.step(params, grads)
            running += value * idx.size
            seen += idx.size
            correct += int(np.sum(np.argmax(logits, axis=1) == y_tr[idx]))
        val_loss, val_acc = evaluate(params, x_val, y_val)
        row = {
            "epoch": epoch,
            "train_loss": running / seen,
            "train_acc": correct / seen,
            "val_loss": val_loss,
            "val_acc": val_acc,
            "seconds": time.perf_counter() - start,
        }
        history.append(row)
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.3f (%.1fs)",
                 epoch, row["train_loss"], val_loss, val_acc, row["seconds"])
        if progress is not None:
            progress(row)
        if val_loss < best_loss:
            best_loss, best, stale = val_loss, params.copy(), 0
        else:
            stale += 1
            if stale >= train_config.early_stop_patience:
                break

    best.meta.update({"train_config": train_config.to_dict(), "epochs_run": len(history),
                      "best_val_loss": best_loss})
    return best, history
