"""Synthetic motor-imagery-like data with class-specific spatial covariance.

Each trial is ``A @ S`` where the latent sources ``S`` are temporally
correlated noise whose per-source power depends on the class, and ``A`` is a
subject-specific mixing matrix. Rotating ``A`` between subjects reproduces
the individual differences that make cross-subject transfer hard.
"""
from __future__ import annotations

import numpy as np
from scipy import signal
from scipy.linalg import expm

from .dataset import EpochSet, MONTAGES

__all__ = ["class_gains", "mixing_matrix", "make_subject", "make_cross_subject"]


def class_gains(n_classes, n_channels, gain=3.0):
    """``(K, C)`` source amplitude per class; class ``k`` boosts a disjoint group."""
    g = np.ones((n_classes, n_channels))
    groups = np.array_split(np.arange(n_channels), n_classes)
    for k, grp in enumerate(groups):
        g[k, grp] = gain
    return g


def mixing_matrix(n_channels, shift, rng):
    """Random rotation ``expm(shift * skew)``; ``shift=0`` gives the identity."""
    M = rng.standard_normal((n_channels, n_channels))
    return expm(shift * (M - M.T) / np.sqrt(2 * n_channels))


def make_subject(n_trials=200, n_channels=22, n_classes=4, n_samples=1000, mixing=None,
                 gain=3.0, ar=0.7, seed=0, subject="S01", rate_hz=250.0, balanced=True):
    """One subject's epochs; labels are balanced and in random order."""
    rng = np.random.default_rng(seed)
    if balanced:
        labels = np.resize(np.arange(n_classes), n_trials)
        labels = rng.permutation(labels)
    else:
        labels = rng.integers(0, n_classes, n_trials)
    gains = class_gains(n_classes, n_channels, gain)
    src = rng.standard_normal((n_trials, n_channels, n_samples))
    src = signal.lfilter([1.0], [1.0, -ar], src, axis=-1) * np.sqrt(1 - ar ** 2)
    src *= gains[labels][:, :, None]
    A = np.eye(n_channels) if mixing is None else np.asarray(mixing)
    x = np.einsum("cd,ndt->nct", A, src).astype(np.float32)
    if n_channels in (len(MONTAGES["2a"]["channels"]), len(MONTAGES["2b"]["channels"])):
        names = MONTAGES["2a" if n_channels == 22 else "2b"]["channels"]
    else:
        names = [f"ch{i}" for i in range(n_channels)]
    return EpochSet(epochs=x, labels=labels, subject=subject, session="T", rate_hz=rate_hz,
                    channel_names=list(names), n_classes=n_classes)


def make_cross_subject(n_subjects=9, n_trials=120, n_channels=3, n_classes=2, shift=1.5,
                       gain=3.0, seed=0, **kw):
    """Dict of subjects sharing class structure but with individual mixing."""
    root = np.random.SeedSequence(seed)
    out = {}
    for i, ss in enumerate(root.spawn(n_subjects)):
        rng = np.random.default_rng(ss)
        A = mixing_matrix(n_channels, shift, rng)
        name = f"S{i + 1:02d}"
        out[name] = make_subject(n_trials, n_channels, n_classes, mixing=A, gain=gain,
                                 seed=int(rng.integers(2 ** 31)), subject=name, **kw)
    return out
