"""Band-pass filtering and per-channel z-score standardization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .dataset import EpochSet
from .errors import FilterError, ShapeError

__all__ = ["StandardizationStats", "bandpass", "zscore_fit", "zscore_apply", "zscore_invert"]

EPSILON = 1e-8


@dataclass(frozen=True)
class StandardizationStats:
    mu: np.ndarray
    sigma2: np.ndarray
    epsilon: float = EPSILON

    @property
    def scale(self):
        return np.sqrt(np.maximum(self.sigma2, self.epsilon))

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma2": self.sigma2.tolist(),
                "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mu"], dtype=np.float64),
                   np.asarray(d["sigma2"], dtype=np.float64), float(d["epsilon"]))


def bandpass(es: EpochSet, low_hz: float = 4.0, high_hz: float = 40.0, order: int = 4) -> EpochSet:
    """Zero-phase Butterworth band-pass applied along time for every channel."""
    nyq = es.rate_hz / 2.0
    if not (0.0 < low_hz < high_hz < nyq):
        raise FilterError(f"corners ({low_hz}, {high_hz}) Hz outside (0, {nyq}) Hz")
    sos = signal.butter(order, [low_hz, high_hz], btype="bandpass", fs=es.rate_hz, output="sos")
    x = signal.sosfiltfilt(sos, es.epochs.astype(np.float64), axis=-1)
    return es.with_epochs(x.astype(es.epochs.dtype, copy=False))


def zscore_fit(train: EpochSet) -> StandardizationStats:
    """Per-channel mean and variance over all trials and time points."""
    if train.n_trials == 0:
        raise ShapeError("cannot fit standardization on an empty set")
    x = train.epochs.astype(np.float64)
    mu = x.mean(axis=(0, 2))
    sigma2 = ((x - mu[None, :, None]) ** 2).mean(axis=(0, 2))
    return StandardizationStats(mu=mu, sigma2=sigma2)


def _check(es, stats):
    if es.n_channels != stats.mu.shape[0]:
        raise ShapeError(
            f"set has {es.n_channels} channels, stats have {stats.mu.shape[0]}")


def zscore_apply(es: EpochSet, stats: StandardizationStats) -> EpochSet:
    _check(es, stats)
    x = (es.epochs.astype(np.float64) - stats.mu[None, :, None]) / stats.scale[None, :, None]
    return es.with_epochs(x.astype(es.epochs.dtype, copy=False))


def zscore_invert(x: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    """Map standardized ``(n, C, T)`` data back to the original units."""
    if x.shape[1] != stats.mu.shape[0]:
        raise ShapeError("channel count differs from stats")
    out = x.astype(np.float64) * stats.scale[None, :, None] + stats.mu[None, :, None]
    return out.astype(x.dtype, copy=False)
