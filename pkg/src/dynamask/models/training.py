from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..datagen import HmmDataset
from ..numerics import Rng
from .gru import PARAM_NAMES, GruClassifier

log = logging.getLogger(__name__)


class Adam:
    """Bias-corrected Adam over a dict of arrays (updated in place)."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 80
    weight_decay: float = 0.0
    batch_size: int = 100
    hidden_size: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden_size < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and hidden_size >= 1 required")


@dataclass
class TrainReport:
    config: dict
    history: list[dict] = field(default_factory=list)

    @property
    def final(self) -> dict:
        return self.history[-1] if self.history else {}


def evaluate_classifier(model: GruClassifier, ds: HmmDataset) -> dict:
    """Mean per-step cross-entropy and accuracy of ``model`` on ``ds``."""
    X = np.stack(ds.inputs)
    y = np.stack(ds.labels).astype(float)
    p = np.clip(model.forward(X)[..., 0], 1e-12, 1 - 1e-12)
    ce = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    acc = float(np.mean((p >= 0.5) == (y == 1)))
    return {"cross_entropy": ce, "accuracy": acc}


def train_gru(dataset: HmmDataset, cfg: TrainConfig, rng: Rng,
              validation: HmmDataset | None = None, init: GruClassifier | None = None):
    """Fit a GRU classifier with Adam on shuffled mini-batches of whole series.

    Returns ``(model, TrainReport)``.
    """
    if len(dataset) == 0:
        raise ValueError("invalid request: empty training dataset")
    X = np.stack(dataset.inputs)
    y = np.stack(dataset.labels).astype(float)
    model = init or GruClassifier.initialize(rng, X.shape[2], cfg.hidden_size)
    params = {k: v.copy() for k, v in model.params.items()}
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    report = TrainReport(config=asdict(cfg))
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        losses = []
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = GruClassifier(params).loss_and_param_gradients(X[idx], y[idx], cfg.weight_decay)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            opt.step(params, grads)
            losses.append(loss * len(idx))
        model = GruClassifier(params)
        row = {"epoch": epoch + 1, "train_batch_loss": float(np.sum(losses) / len(X))}
        if validation is not None and len(validation):
            row.update({f"val_{k}": v for k, v in evaluate_classifier(model, validation).items()})
        report.history.append(row)
        if (epoch + 1) % 10 == 0:
            log.info("epoch %d: %s", epoch + 1, row)
    if cfg.epochs:
        report.history[-1].update({f"train_{k}": v for k, v in evaluate_classifier(model, dataset).items()})
    return GruClassifier({k: params[k] for k in PARAM_NAMES}), report
