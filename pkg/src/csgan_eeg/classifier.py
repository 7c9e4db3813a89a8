"""Benchmark CNN on spatially projected epochs."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .csgan.networks import conv_out, kaiming_init
from .dataset import EpochSet, _stratified_draw
from .errors import EmptyClassError, EvalError, ShapeError, TrainingDivergedError, FormatError
from .tensorio import load_state, save_state

__all__ = [
    "ClassifierConfig", "CSNet", "classifier_forward", "train_classifier", "evaluate",
    "EvalResult", "kappa_from_accuracy", "export_predictions", "save_classifier",
    "load_classifier",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassifierConfig:
    n_classes: int = 4
    m: int = 4
    n_samples: int = 1000
    leaky_slope: float = 0.2
    dropout: float = 0.3
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 50
    epochs: int = 200
    val_fraction: float = 0.1
    seed: int = 0

    @property
    def n_rows(self) -> int:
        return self.n_classes * self.m

    def width_trace(self):
        w = [self.n_samples]
        for k, s in ((23, 3), (17, 1), (6, 6), (7, 1), (2, 2)):
            w.append(conv_out(w[-1], k, s))
        return w

    def flatten_len(self) -> int:
        return 128 * self.n_classes * self.width_trace()[-1]

    def to_dict(self):
        return asdict(self)


class CSNet(nn.Module):
    """Row-group convolution, temporal convolutions, then four linear layers.

    The first convolution has kernel/stride ``(m, 1)`` so each class's
    block of ``m`` projected channels collapses into one row.
    """

    def __init__(self, config: ClassifierConfig = ClassifierConfig()):
        super().__init__()
        self.config = c = config
        a, p = c.leaky_slope, c.dropout
        self.features = nn.Sequential(
            nn.Conv2d(1, 16, (c.m, 1), (c.m, 1)), nn.LeakyReLU(a),
            nn.Conv2d(16, 32, (1, 23), (1, 3)), nn.LeakyReLU(a),
            nn.Conv2d(32, 64, (1, 17)), nn.LeakyReLU(a),
            nn.MaxPool2d((1, 6), (1, 6)),
            nn.Conv2d(64, 128, (1, 7)), nn.LeakyReLU(a),
            nn.MaxPool2d((1, 2), (1, 2)),
            nn.Flatten(),
        )
        self.head = nn.Sequential(
            nn.Linear(c.flatten_len(), 2048), nn.LeakyReLU(a), nn.Dropout(p),
            nn.Linear(2048, 512), nn.LeakyReLU(a), nn.Dropout(p),
            nn.Linear(512, 128), nn.LeakyReLU(a), nn.Dropout(p),
            nn.Linear(128, c.n_classes),
        )
        kaiming_init(self, a)

    def forward(self, z):
        """Class logits; apply softmax (see :func:`classifier_forward`) for probabilities."""
        c = self.config
        if z.ndim != 4 or z.shape[1:] != (1, c.n_rows, c.n_samples):
            raise ShapeError(f"input {tuple(z.shape)} != (batch, 1, {c.n_rows}, {c.n_samples})")
        return self.head(self.features(z))


def _as_input(x):
    x = torch.as_tensor(np.asarray(x, dtype=np.float32))
    return x.unsqueeze(1) if x.ndim == 3 else x


def classifier_forward(model: CSNet, z, batch_size: int = 200) -> np.ndarray:
    """Softmax class probabilities, dropout disabled."""
    model.eval()
    z = _as_input(z)
    out = []
    with torch.no_grad():
        for i in range(0, z.shape[0], batch_size):
            out.append(torch.softmax(model(z[i:i + batch_size]), dim=1).numpy())
    return np.concatenate(out) if out else np.empty((0, model.config.n_classes))


def _mean_loss(model, x, y, batch_size=200):
    model.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, x.shape[0], batch_size):
            total += F.cross_entropy(model(x[i:i + batch_size]), y[i:i + batch_size],
                                     reduction="sum").item()
    return total / x.shape[0]


def train_classifier(train: EpochSet, config: ClassifierConfig) -> CSNet:
    """Cross-entropy training with Adam; the lowest validation-loss epoch is kept.

    ``train`` holds projected epochs ``(n, K*m, T)``. A stratified
    ``val_fraction`` of it is held out for model selection (none if 0).
    """
    present = set(np.unique(train.labels).tolist())
    missing = sorted(set(range(config.n_classes)) - present)
    if missing:
        raise EmptyClassError(f"no training trials for classes {missing}")
    rng = np.random.default_rng(config.seed)
    n_val = int(round(config.val_fraction * train.n_trials))
    val_idx = _stratified_draw(train.labels, n_val, rng) if n_val else np.empty(0, dtype=int)
    fit_idx = np.setdiff1d(np.arange(train.n_trials), val_idx)
    x = _as_input(train.epochs)
    y = torch.as_tensor(train.labels, dtype=torch.long)
    x_fit, y_fit = x[fit_idx], y[fit_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        model = CSNet(config)
    gen = torch.Generator().manual_seed(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr,
                           betas=(config.adam_beta1, config.adam_beta2))
    best, best_state = math.inf, None
    for epoch in range(config.epochs):
        model.train()
        order = torch.randperm(x_fit.shape[0], generator=gen)
        for i in range(0, order.numel(), config.batch_size):
            idx = order[i:i + config.batch_size]
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(int(torch.randint(2 ** 62, (1,), generator=gen)))
                loss = F.cross_entropy(model(x_fit[idx]), y_fit[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite classifier loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
        if n_val:
            val = _mean_loss(model, x_val, y_val)
            if val < best:
                best, best_state = val, copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model


def kappa_from_accuracy(accuracy: float, n_classes: int) -> float:
    """Chance-corrected accuracy for a class-balanced problem."""
    chance = 1.0 / n_classes
    return (accuracy - chance) / (1.0 - chance)


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    kappa: float
    confusion: np.ndarray
    probabilities: np.ndarray
    predicted: np.ndarray


def evaluate(model: CSNet, test: EpochSet) -> EvalResult:
    if test.n_trials == 0:
        raise EvalError("empty test set")
    proba = classifier_forward(model, test.epochs)
    pred = proba.argmax(axis=1)
    K = model.config.n_classes
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (test.labels, pred), 1)
    acc = float((pred == test.labels).mean())
    return EvalResult(acc, kappa_from_accuracy(acc, K), confusion, proba, pred)


def export_predictions(result: EvalResult, test: EpochSet, path) -> Path:
    path = Path(path)
    K = result.probabilities.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "true", "predicted"] + [f"p_{k}" for k in range(K)])
        for tid, t, p, row in zip(test.trial_ids, test.labels, result.predicted,
                                  result.probabilities):
            w.writerow([int(tid), int(t), int(p)] + [f"{v:.9g}" for v in row])
    return path


def save_classifier(model: CSNet, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.json").write_text(json.dumps(model.config.to_dict(), indent=1))
    return save_state(model.state_dict(), path, "params")


def load_classifier(path) -> CSNet:
    path = Path(path)
    try:
        cfg = ClassifierConfig(**json.loads((path / "config.json").read_text()))
    except FileNotFoundError:
        raise FormatError(f"no config.json in {path}") from None
    with torch.random.fork_rng(devices=[]):
        model = CSNet(cfg)
    model.load_state_dict(load_state(path, "params"))
    model.eval()
    return model
