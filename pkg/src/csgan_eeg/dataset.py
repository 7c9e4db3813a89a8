"""Epoch containers, session loading and train/test/GAN splits.

On disk a session is a directory holding ``manifest.json`` and ``epochs.f32``
(little-endian float32, C-order, shape ``(n_trials, n_channels, n_samples)``).
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, MontageError, SplitError, SubjectError, ConfigError

__all__ = [
    "MONTAGES", "EpochSet", "AugmentationSet", "SplitSpec",
    "save_session", "load_session", "load_dataset", "convert_arrays",
    "split_cross_subject", "split_single_subject",
]

# Electrode names after EOG removal, in recording order.
MONTAGES = {
    "2a": {
        "channels": [
            "Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz", "C2",
            "C4", "C6", "CP3", "CP1", "CPz", "CP2", "CP4", "P1", "Pz", "P2", "POz",
        ],
        "n_classes": 4,
    },
    "2b": {"channels": ["C3", "Cz", "C4"], "n_classes": 2},
}

CUE_WINDOW_S = (2.0, 6.0)


@dataclass(frozen=True)
class EpochSet:
    """Labeled multi-channel epochs of one subject/session.

    Parameters
    ----------
    epochs : (n_trials, n_channels, n_samples) ndarray
    labels : (n_trials,) int ndarray
        Class index in ``[0, n_classes)``.
    subject, session : str
    rate_hz : float
    channel_names : list of str
    n_classes : int
    trial_ids : (n_trials,) int ndarray
        Index of each trial within its source session; survives splits so
        disjointness of derived sets can be checked.
    """

    epochs: np.ndarray
    labels: np.ndarray
    subject: str = ""
    session: str = "T"
    rate_hz: float = 250.0
    channel_names: list = field(default_factory=list)
    n_classes: int = 0
    trial_ids: np.ndarray = None

    def __post_init__(self):
        epochs = np.asarray(self.epochs)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if epochs.ndim != 3:
            raise FormatError(f"epochs must be 3-D, got shape {epochs.shape}")
        if labels.shape[0] != epochs.shape[0]:
            raise FormatError(
                f"{labels.shape[0]} labels for {epochs.shape[0]} trials")
        n_classes = self.n_classes or (int(labels.max()) + 1 if labels.size else 0)
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise FormatError(f"labels outside [0, {n_classes})")
        ids = self.trial_ids
        ids = np.arange(epochs.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
        if ids.shape[0] != epochs.shape[0]:
            raise FormatError("trial_ids length differs from trial count")
        names = list(self.channel_names) or [f"ch{i}" for i in range(epochs.shape[1])]
        if len(names) != epochs.shape[1]:
            raise FormatError("channel_names length differs from channel count")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "n_classes", int(n_classes))
        object.__setattr__(self, "trial_ids", ids)
        object.__setattr__(self, "channel_names", names)

    @property
    def n_trials(self) -> int:
        return self.epochs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.epochs.shape[1]

    @property
    def n_samples(self) -> int:
        return self.epochs.shape[2]

    def __len__(self):
        return self.n_trials

    def subset(self, index) -> "EpochSet":
        index = np.asarray(index, dtype=np.int64)
        return dataclasses.replace(
            self, epochs=self.epochs[index], labels=self.labels[index],
            trial_ids=self.trial_ids[index])

    def of_class(self, k: int) -> "EpochSet":
        return self.subset(np.flatnonzero(self.labels == k))

    def with_epochs(self, epochs, channel_names=None) -> "EpochSet":
        """Same trials and labels, new signal array (channel count may change)."""
        if channel_names is None:
            channel_names = (self.channel_names if np.shape(epochs)[1] == self.n_channels
                             else [])
        return dataclasses.replace(self, epochs=epochs, channel_names=channel_names)

    @classmethod
    def concat(cls, sets: Sequence["EpochSet"], subject=None, session=None) -> "EpochSet":
        """Stack trials of several sets; metadata is taken from the first."""
        sets = list(sets)
        if not sets:
            raise SplitError("nothing to concatenate")
        first = sets[0]
        return cls(
            epochs=np.concatenate([s.epochs for s in sets]),
            labels=np.concatenate([s.labels for s in sets]),
            subject=first.subject if subject is None else subject,
            session=first.session if session is None else session,
            rate_hz=first.rate_hz,
            channel_names=first.channel_names,
            n_classes=max(s.n_classes for s in sets),
            trial_ids=np.concatenate([s.trial_ids for s in sets]),
        )

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise MontageError(f"channel {name!r} not in montage") from None


@dataclass(frozen=True)
class AugmentationSet:
    """Synthetic epochs with labels and a record of how they were made."""

    epochs: np.ndarray
    labels: np.ndarray
    provenance: list = field(default_factory=list)

    def __len__(self):
        return self.epochs.shape[0]

    def to_epoch_set(self, like: EpochSet, subject=None) -> EpochSet:
        """Wrap as an EpochSet sharing ``like``'s montage metadata.

        Trial ids are negative so they can never collide with real trials.
        """
        n = self.epochs.shape[0]
        return EpochSet(
            epochs=self.epochs, labels=self.labels,
            subject=like.subject if subject is None else subject,
            session="G", rate_hz=like.rate_hz, channel_names=like.channel_names,
            n_classes=like.n_classes, trial_ids=-1 - np.arange(n))

    @classmethod
    def concat(cls, sets: Sequence["AugmentationSet"]) -> "AugmentationSet":
        sets = list(sets)
        return cls(
            epochs=np.concatenate([s.epochs for s in sets]),
            labels=np.concatenate([s.labels for s in sets]),
            provenance=[p for s in sets for p in s.provenance])


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "cross_subject_loo"
    target_subject: str = ""
    gan_count: int = 100
    seed: int = 0
    stratified: bool = False


# --------------------------------------------------------------------------
# container I/O


def save_session(es: EpochSet, path, tmin_s: float = CUE_WINDOW_S[0], extra=None) -> Path:
    """Write ``es`` as an epoch container directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subject": es.subject,
        "session": es.session,
        "rate_hz": es.rate_hz,
        "n_trials": es.n_trials,
        "n_channels": es.n_channels,
        "n_samples": es.n_samples,
        "channel_names": list(es.channel_names),
        "labels": [int(v) for v in es.labels],
        "n_classes": es.n_classes,
        "tmin_s": tmin_s,
    }
    if extra:
        manifest.update(extra)
    np.ascontiguousarray(es.epochs, dtype="<f4").tofile(path / "epochs.f32")
    tmp = path / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, path / "manifest.json")
    return path


def load_session(path, montage: str = "2a", crop: bool = True) -> EpochSet:
    """Read an epoch container, drop EOG channels and crop to the cue window.

    ``tmin_s`` in the manifest gives the time of sample 0 relative to trial
    onset (default 0); the kept window is [2 s, 6 s) of the trial, i.e.
    samples 500..1499 at 250 Hz for an onset-aligned container.
    """
    path = Path(path)
    if montage not in MONTAGES:
        raise MontageError(f"unknown montage {montage!r}")
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"no manifest.json in {path}") from None
    for key in ("n_trials", "n_channels", "n_samples", "channel_names"):
        if key not in manifest:
            raise FormatError(f"manifest missing {key!r}")
    if "labels" not in manifest or manifest["labels"] is None:
        raise FormatError("manifest has no labels")
    shape = (manifest["n_trials"], manifest["n_channels"], manifest["n_samples"])
    raw = np.fromfile(path / "epochs.f32", dtype="<f4")
    if raw.size != np.prod(shape):
        raise FormatError(f"payload has {raw.size} values, manifest declares {shape}")
    labels = np.asarray(manifest["labels"], dtype=np.int64)
    if labels.shape[0] != shape[0]:
        raise FormatError(f"{labels.shape[0]} labels for {shape[0]} trials")
    x = raw.reshape(shape).astype(np.float32)

    names = list(manifest["channel_names"])
    if len(names) != shape[1]:
        raise FormatError("channel_names length differs from n_channels")
    keep = [i for i, n in enumerate(names) if not n.upper().startswith("EOG")]
    info = MONTAGES[montage]
    if len(keep) != len(info["channels"]):
        raise MontageError(
            f"{len(keep)} EEG channels found, montage {montage} expects "
            f"{len(info['channels'])}")
    x = x[:, keep]
    names = [names[i] for i in keep]

    rate = float(manifest.get("rate_hz", 250.0))
    if crop:
        tmin = float(manifest.get("tmin_s", 0.0))
        start = int(round((CUE_WINDOW_S[0] - tmin) * rate))
        stop = int(round((CUE_WINDOW_S[1] - tmin) * rate))
        if start < 0 or stop > x.shape[2]:
            raise FormatError(
                f"container covers {tmin}..{tmin + x.shape[2] / rate} s, "
                f"cue window needs {CUE_WINDOW_S}")
        x = x[:, :, start:stop]
    x = np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0)
    return EpochSet(
        epochs=np.ascontiguousarray(x), labels=labels,
        subject=str(manifest.get("subject", path.name)),
        session=str(manifest.get("session", "T")), rate_hz=rate,
        channel_names=names,
        n_classes=int(manifest.get("n_classes", info["n_classes"])))


def load_dataset(root, montage: str = "2a", session: str = "T") -> dict:
    """Load ``root/<subject>/<session>/`` for every subject directory."""
    root = Path(root)
    out = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if (sub / session / "manifest.json").exists():
            es = load_session(sub / session, montage)
            out[es.subject] = es
    if not out:
        raise SubjectError(f"no {session!r} sessions under {root}")
    return out


def convert_arrays(x, y, channel_names, subject, session, out_dir,
                   rate_hz=250.0, tmin_s=0.0) -> Path:
    """One-time conversion from in-memory arrays to an epoch container.

    ``y`` may use any label coding (e.g. 1..4 or event codes); values are
    mapped to 0..K-1 in sorted order and the original codes are recorded.
    """
    x = np.asarray(x, dtype=np.float32)
    y = np.asarray(y).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise FormatError(f"{y.shape[0]} labels for {x.shape[0]} trials")
    codes, labels = np.unique(y, return_inverse=True)
    es = EpochSet(epochs=x, labels=labels, subject=str(subject), session=str(session),
                  rate_hz=float(rate_hz), channel_names=list(channel_names),
                  n_classes=len(codes))
    return save_session(es, out_dir, tmin_s=tmin_s,
                        extra={"label_codes": [c.item() for c in codes]})


# --------------------------------------------------------------------------
# splits


def _draw(labels, count, rng, stratified):
    n = labels.shape[0]
    if not stratified:
        return np.sort(rng.choice(n, size=count, replace=False))
    return np.sort(_stratified_draw(labels, count, rng))


def _stratified_draw(labels, count, rng):
    classes, counts = np.unique(labels, return_counts=True)
    quota = counts * count / labels.shape[0]
    take = np.floor(quota).astype(int)
    # largest remainder, ties to the lower class index
    short = count - take.sum()
    order = np.argsort(-(quota - take), kind="stable")
    take[order[:short]] += 1
    picked = [rng.choice(np.flatnonzero(labels == c), size=t, replace=False)
              for c, t in zip(classes, take)]
    return np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)


def split_cross_subject(sets, spec: SplitSpec):
    """Leave one subject out.

    Returns ``(train, gan_pool, test)``: every non-target trial, ``gan_count``
    target trials for augmentation, and the remaining target trials.
    """
    if spec.mode != "cross_subject_loo":
        raise ConfigError(f"split mode {spec.mode!r} is not cross_subject_loo")
    sets = list(sets.values()) if isinstance(sets, dict) else list(sets)
    targets = [s for s in sets if s.subject == spec.target_subject]
    if not targets:
        raise SubjectError(f"subject {spec.target_subject!r} absent")
    target = targets[0]
    others = [s for s in sets if s.subject != spec.target_subject]
    if spec.gan_count < 0 or spec.gan_count >= target.n_trials:
        raise SplitError(
            f"gan_count={spec.gan_count} leaves no test trials out of {target.n_trials}")
    rng = np.random.default_rng(spec.seed)
    pool_idx = _draw(target.labels, spec.gan_count, rng, spec.stratified)
    test_idx = np.setdiff1d(np.arange(target.n_trials), pool_idx)
    train = EpochSet.concat(others, subject="pool") if others else target.subset([])
    return train, target.subset(pool_idx), target.subset(test_idx)


def split_single_subject(es: EpochSet, test_count: int = 50, seed: int = 0):
    """Seeded, stratified train/test split of one subject's trials."""
    if test_count < 0 or test_count >= es.n_trials:
        raise SplitError(f"test_count={test_count} with {es.n_trials} trials")
    rng = np.random.default_rng(seed)
    test_idx = _stratified_draw(es.labels, test_count, rng)
    train_idx = np.setdiff1d(np.arange(es.n_trials), test_idx)
    return es.subset(rng.permutation(train_idx)), es.subset(rng.permutation(test_idx))
