"""Reference augmentations: additive Gaussian noise and segmentation/recombination."""
from __future__ import annotations

import warnings

import numpy as np

from .dataset import AugmentationSet, EpochSet
from .errors import EmptyClassError, ConfigError

__all__ = ["gaussian_noise_augment", "segment_bounds", "segment_recombine"]


def gaussian_noise_augment(es: EpochSet, n_out: int, sigma: float = 0.2,
                           seed: int = 0) -> AugmentationSet:
    """Resample source epochs with replacement and add i.i.d. N(0, sigma^2) noise.

    Intended for standardized data, where ``sigma`` is relative to unit variance.
    """
    if es.n_trials == 0:
        raise EmptyClassError("no source epochs")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    src = rng.integers(0, es.n_trials, n_out)
    x = es.epochs[src].astype(np.float64)
    if sigma > 0:
        x = x + rng.normal(0.0, sigma, size=x.shape)
    prov = [{"method": "noise", "sigma": sigma, "seed": seed, "n": n_out,
             "subject": es.subject, "source_trials": es.trial_ids[src].tolist()}]
    return AugmentationSet(x.astype(es.epochs.dtype), es.labels[src].copy(), prov)


def segment_bounds(n_samples: int, n_segments: int):
    """Equal-length segment boundaries; any remainder joins the last segment."""
    if not 0 < n_segments <= n_samples:
        raise ConfigError(f"n_segments={n_segments} with {n_samples} samples")
    step = n_samples // n_segments
    starts = [i * step for i in range(n_segments)]
    stops = starts[1:] + [n_samples]
    return list(zip(starts, stops))


def segment_recombine(es: EpochSet, n_out: int, n_segments: int = 8,
                      seed: int = 0) -> AugmentationSet:
    """Concatenate, in temporal order, segments taken from random same-class trials.

    ``es`` must hold a single class.
    """
    if es.n_trials == 0:
        raise EmptyClassError("no source epochs")
    classes = np.unique(es.labels)
    if classes.size != 1:
        raise ConfigError("segment_recombine expects a single-class set")
    if es.n_trials == 1:
        warnings.warn("single source trial: every output reproduces it", UserWarning)
    rng = np.random.default_rng(seed)
    bounds = segment_bounds(es.n_samples, n_segments)
    donors = rng.integers(0, es.n_trials, size=(n_out, n_segments))
    out = np.empty((n_out, es.n_channels, es.n_samples), dtype=es.epochs.dtype)
    for j, (a, b) in enumerate(bounds):
        out[:, :, a:b] = es.epochs[donors[:, j], :, a:b]
    prov = [{"method": "snr", "n_segments": n_segments, "seed": seed, "n": n_out,
             "subject": es.subject, "donor_trials": es.trial_ids[donors].tolist()}]
    return AugmentationSet(out, np.full(n_out, classes[0], dtype=np.int64), prov)
