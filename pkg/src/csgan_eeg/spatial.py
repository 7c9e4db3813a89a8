"""One-versus-rest common spatial filters.

For each class ``k`` the trials of ``k`` ("one") are contrasted with all other
trials ("rest"). The composite covariance ``R = R1 + R2`` is whitened by
``P`` and the whitened rest covariance is diagonalized by an orthonormal
``B``, so that ``B^T P`` diagonalizes both ``R1`` and ``R2`` with diagonals
summing to one. The first ``m`` columns of ``P^T B`` (largest one-class
eigenvalues) form that class's sub-filter; the stacked sub-filters are ``W``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import EpochSet
from .errors import (ConfigError, DegenerateEpochError, EmptyClassError,
                     InsufficientDataError, InsufficientVarianceWarning, RankError,
                     ShapeError, FormatError)

__all__ = [
    "ClassSpatialArtifacts", "SpatialFilterBank", "covariance", "covariances",
    "class_mean_cov", "distance_stats", "diagonalize", "build_class_artifacts",
    "build_filter_bank", "project", "project_set", "save_bank", "load_bank",
]

EIGEN_FLOOR = 1e-10


@dataclass(frozen=True)
class ClassSpatialArtifacts:
    R1: np.ndarray
    R2: np.ndarray
    P: np.ndarray
    B: np.ndarray
    lambda_S: np.ndarray
    dis_mean: float
    dis_std: float
    sub_filter: np.ndarray

    @property
    def lambda_one(self) -> np.ndarray:
        """Diagonal of ``B^T P R1 P^T B`` (descending)."""
        F = self.P.T @ self.B
        return np.diag(F.T @ self.R1 @ F).copy()

    @property
    def m(self) -> int:
        return self.sub_filter.shape[1]


@dataclass(frozen=True)
class SpatialFilterBank:
    per_class: tuple
    W: np.ndarray
    m: int

    @property
    def n_classes(self) -> int:
        return len(self.per_class)

    @property
    def n_channels(self) -> int:
        return self.W.shape[0]

    @property
    def n_components(self) -> int:
        return self.W.shape[1]


def covariance(X) -> np.ndarray:
    """Trace-normalized spatial covariance ``X X^T / trace(X X^T)`` of a C x T epoch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a C x T epoch, got shape {X.shape}")
    S = X @ X.T
    tr = np.trace(S)
    if not tr > 0:
        raise DegenerateEpochError("epoch has zero energy")
    return S / tr


def covariances(epochs) -> np.ndarray:
    """Batched :func:`covariance` over ``(n, C, T)``."""
    X = np.asarray(epochs, dtype=np.float64)
    S = np.einsum("nct,ndt->ncd", X, X)
    tr = np.trace(S, axis1=1, axis2=2)
    if np.any(~(tr > 0)):
        raise DegenerateEpochError("an epoch has zero energy")
    return S / tr[:, None, None]


def class_mean_cov(epochs) -> np.ndarray:
    epochs = np.asarray(epochs)
    if epochs.shape[0] == 0:
        raise EmptyClassError("no epochs to average")
    return covariances(epochs).mean(axis=0)


def distance_stats(epochs, R1):
    """Mean and population std of Frobenius distances from each epoch's covariance to ``R1``."""
    epochs = np.asarray(epochs)
    if epochs.shape[0] < 2:
        raise InsufficientDataError("distance statistics need at least 2 epochs")
    d = np.linalg.norm(covariances(epochs) - R1[None], axis=(1, 2))
    mean, std = float(d.mean()), float(d.std())
    if std == 0.0:
        warnings.warn("all covariance distances are equal", InsufficientVarianceWarning)
    return mean, std


def _canonical_signs(V):
    # largest-magnitude entry of each column made non-negative
    rows = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[rows, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def diagonalize(R1, R2, m: int = 1, eigen_floor: float = EIGEN_FLOOR):
    """Whitening ``P`` of ``R1 + R2`` and eigenbasis ``B`` of ``P R2 P^T``.

    Returns ``(P, B, lambda_S)`` with ``lambda_S`` ascending. Ties in either
    eigendecomposition are broken by the solver's index order, and every
    eigenvector's largest-magnitude entry is made non-negative.
    """
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    R = R1 + R2
    w, U = np.linalg.eigh((R + R.T) / 2)
    order = np.lexsort((np.arange(w.size), -w))
    w, U = w[order], _canonical_signs(U[:, order])
    if np.count_nonzero(w > eigen_floor) < m:
        raise RankError(
            f"composite covariance has {np.count_nonzero(w > eigen_floor)} eigenvalues "
            f"above {eigen_floor}, need {m}")
    w = np.maximum(w, eigen_floor)
    P = U.T / np.sqrt(w)[:, None]
    S2 = P @ R2 @ P.T
    lam, B = np.linalg.eigh((S2 + S2.T) / 2)
    order = np.lexsort((np.arange(lam.size), lam))
    return P, _canonical_signs(B[:, order]), lam[order]


def build_class_artifacts(one_epochs, rest_epochs, m: int = 4,
                          eigen_floor: float = EIGEN_FLOOR) -> ClassSpatialArtifacts:
    one_epochs = np.asarray(one_epochs)
    rest_epochs = np.asarray(rest_epochs)
    if one_epochs.shape[0] == 0 or rest_epochs.shape[0] == 0:
        raise EmptyClassError("both sides of the contrast need epochs")
    if not 0 < m <= one_epochs.shape[1]:
        raise ConfigError(f"m={m} outside [1, {one_epochs.shape[1]}]")
    R1 = class_mean_cov(one_epochs)
    R2 = class_mean_cov(rest_epochs)
    dis_mean, dis_std = distance_stats(one_epochs, R1)
    P, B, lam = diagonalize(R1, R2, m=m, eigen_floor=eigen_floor)
    sub = (P.T @ B)[:, :m]
    return ClassSpatialArtifacts(R1=R1, R2=R2, P=P, B=B, lambda_S=lam,
                                 dis_mean=dis_mean, dis_std=dis_std, sub_filter=sub)


def build_filter_bank(train: EpochSet, m: int | None = None,
                      eigen_floor: float = EIGEN_FLOOR) -> SpatialFilterBank:
    """Fit one artifact set per class and stack the sub-filters into ``W``.

    ``m`` defaults to ``min(4, n_channels)``.
    """
    C = train.n_channels
    if m is None:
        m = min(4, C)
    if not 0 < m <= C:
        raise ConfigError(f"m={m} outside [1, {C}]")
    K = train.n_classes
    x = train.epochs
    per_class = []
    for k in range(K):
        mask = train.labels == k
        if not mask.any():
            raise EmptyClassError(f"class {k} has no training trials")
        if mask.all():
            raise EmptyClassError(f"no 'rest' trials for class {k}")
        per_class.append(build_class_artifacts(x[mask], x[~mask], m=m, eigen_floor=eigen_floor))
    W = np.concatenate([a.sub_filter for a in per_class], axis=1)
    return SpatialFilterBank(per_class=tuple(per_class), W=W, m=m)


def project(X, bank) -> np.ndarray:
    """``W^T X`` for a C x T epoch or a batch ``(n, C, T)``.

    ``bank`` may be a :class:`SpatialFilterBank` or a bare ``W`` matrix.
    """
    W = bank.W if isinstance(bank, SpatialFilterBank) else np.asarray(bank)
    X = np.asarray(X)
    if X.ndim not in (2, 3) or X.shape[-2] != W.shape[0]:
        raise ShapeError(f"input {X.shape} incompatible with filter {W.shape}")
    out = np.matmul(W.T, X.astype(np.float64))
    return out.astype(X.dtype) if X.dtype == np.float32 else out


def project_set(es: EpochSet, bank: SpatialFilterBank) -> EpochSet:
    """Project every trial; channels are named ``cs<class>.<column>``."""
    names = [f"cs{k}.{j}" for k in range(bank.n_classes) for j in range(bank.m)]
    return es.with_epochs(project(es.epochs, bank), channel_names=names)


# --------------------------------------------------------------------------
# serialization

_FIELDS = ("R1", "R2", "P", "B", "lambda_S", "sub_filter")


def save_bank(bank: SpatialFilterBank, path) -> Path:
    """Write ``bank.json`` + ``bank.f64`` (row-major, order listed in the JSON)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for k, art in enumerate(bank.per_class):
        for name in _FIELDS:
            a = np.ascontiguousarray(getattr(art, name), dtype="<f8")
            entries.append({"name": f"class{k}.{name}", "shape": list(a.shape), "offset": offset})
            chunks.append(a.ravel())
            offset += a.size
    W = np.ascontiguousarray(bank.W, dtype="<f8")
    entries.append({"name": "W", "shape": list(W.shape), "offset": offset})
    chunks.append(W.ravel())
    meta = {
        "m": bank.m, "n_classes": bank.n_classes, "n_channels": bank.n_channels,
        "dis_mean": [a.dis_mean for a in bank.per_class],
        "dis_std": [a.dis_std for a in bank.per_class],
        "tensors": entries,
    }
    np.concatenate(chunks).tofile(path / "bank.f64")
    (path / "bank.json").write_text(json.dumps(meta, indent=1))
    return path


def load_bank(path) -> SpatialFilterBank:
    path = Path(path)
    try:
        meta = json.loads((path / "bank.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"no bank.json in {path}") from None
    flat = np.fromfile(path / "bank.f64", dtype="<f8")
    arrays = {}
    for e in meta["tensors"]:
        n = int(np.prod(e["shape"]))
        arrays[e["name"]] = flat[e["offset"]:e["offset"] + n].reshape(e["shape"]).copy()
    per_class = tuple(
        ClassSpatialArtifacts(
            **{f: arrays[f"class{k}.{f}"] for f in _FIELDS},
            dis_mean=meta["dis_mean"][k], dis_std=meta["dis_std"][k])
        for k in range(meta["n_classes"]))
    return SpatialFilterBank(per_class=per_class, W=arrays["W"], m=meta["m"])
