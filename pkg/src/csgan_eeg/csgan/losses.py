"""Adversarial, gradient-penalty, covariance and eigenvalue losses (torch)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError, ShapeError

__all__ = [
    "SpatialTensors", "LossWeights", "batch_covariance", "project_batch",
    "gradient_penalty", "cov_loss", "ev_loss", "generator_loss", "discriminator_loss",
]

TRACE_FLOOR = 1e-12
EV_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_gp: float = 10.0
    lambda_cs: float = 0.1
    lambda_cov: float = 3.0
    lambda_ev: float = 10.0

    def __post_init__(self):
        for name in ("lambda_gp", "lambda_cs", "lambda_cov", "lambda_ev"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SpatialTensors:
    """Class artifacts plus the stacked filter, as tensors of one dtype."""

    R1: torch.Tensor
    sub_filter: torch.Tensor
    W: torch.Tensor
    dis_mean: float
    dis_std: float

    @classmethod
    def from_bank(cls, bank, class_id: int, dtype=torch.float32):
        art = bank.per_class[class_id]
        return cls(
            R1=torch.as_tensor(np.asarray(art.R1), dtype=dtype),
            sub_filter=torch.as_tensor(np.asarray(art.sub_filter), dtype=dtype),
            W=torch.as_tensor(np.asarray(bank.W), dtype=dtype),
            dis_mean=float(art.dis_mean), dis_std=float(art.dis_std))


def _flat(x):
    # (B, 1, C, T) or (B, C, T) -> (B, C, T)
    if x.ndim == 4:
        if x.shape[1] != 1:
            raise ShapeError(f"expected a single input map, got {tuple(x.shape)}")
        return x[:, 0]
    if x.ndim != 3:
        raise ShapeError(f"expected (B, C, T) or (B, 1, C, T), got {tuple(x.shape)}")
    return x


def batch_covariance(x):
    """Trace-normalized covariance of each sample, shape ``(B, C, C)``."""
    x = _flat(x)
    S = x @ x.transpose(1, 2)
    tr = torch.diagonal(S, dim1=1, dim2=2).sum(-1).clamp_min(TRACE_FLOOR)
    return S / tr[:, None, None]


def project_batch(x, W):
    """``W^T x`` for ``(B, 1, C, T)`` input, giving ``(B, 1, K*m, T)``."""
    return torch.matmul(W.T, x)


def _penalty(points, critic_fn):
    if not points.requires_grad:
        points = points.requires_grad_(True)
    scores = critic_fn(points)
    (grad,) = torch.autograd.grad(scores.sum(), points, create_graph=True)
    norms = grad.reshape(grad.shape[0], -1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def _alpha(real, alpha, generator):
    if alpha is None:
        alpha = torch.rand(real.shape[0], generator=generator, dtype=real.dtype)
    alpha = torch.as_tensor(alpha, dtype=real.dtype)
    return alpha.reshape(-1, *([1] * (real.ndim - 1)))


def gradient_penalty(real, fake, critic_fn, alpha=None, generator=None):
    """Mean squared deviation from 1 of the critic's gradient norm on interpolates.

    Interpolates are ``alpha * real + (1 - alpha) * fake`` with one ``alpha``
    per sample, drawn uniformly unless supplied.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    a = _alpha(real, alpha, generator)
    return _penalty(a * real + (1 - a) * fake, critic_fn)


def cov_loss(fake, st: SpatialTensors):
    if not st.dis_std > 0:
        raise ConfigError("dis_std must be positive for the covariance loss")
    d = torch.linalg.matrix_norm(batch_covariance(fake) - st.R1.to(fake.dtype), ord="fro")
    return ((d - st.dis_mean).abs() / st.dis_std).mean()


def ev_eigenvalues(fake, st: SpatialTensors):
    """Per-sample diagonal of ``F^T cov F`` for the class's sub-filter ``F``, shape ``(B, m)``."""
    F = st.sub_filter.to(fake.dtype)
    return torch.einsum("cm,bcd,dm->bm", F, batch_covariance(fake), F)


def ev_loss(fake, st: SpatialTensors):
    ev = ev_eigenvalues(fake, st).mean(dim=1).clamp_min(EV_FLOOR)
    return torch.log(ev).abs().mean()


def _has_cs(critic):
    return getattr(critic, "cs", None) is not None


def generator_loss(fake, critic, st: SpatialTensors, weights: LossWeights = LossWeights()):
    """Generator objective and its per-term breakdown.

    ``-E[D(G)] - lambda_cs E[D_cs(W G)] + lambda_cov L_cov + lambda_ev L_ev``.
    Without a CS head the CS term is dropped.
    """
    adv = -critic.score_eeg(fake).mean()
    total = adv
    parts = {"g_adv_eeg": adv}
    if _has_cs(critic):
        adv_cs = -critic.score_cs(project_batch(fake, st.W.to(fake.dtype))).mean()
        parts["g_adv_cs"] = adv_cs
        total = total + weights.lambda_cs * adv_cs
    if weights.lambda_cov > 0:
        parts["cov"] = cov_loss(fake, st)
        total = total + weights.lambda_cov * parts["cov"]
    if weights.lambda_ev > 0:
        parts["ev"] = ev_loss(fake, st)
        total = total + weights.lambda_ev * parts["ev"]
    parts["g_total"] = total
    return total, {k: float(v.detach()) for k, v in parts.items()}


def discriminator_loss(real, fake, critic, st: SpatialTensors,
                       weights: LossWeights = LossWeights(), alpha=None, generator=None):
    """Two-head Wasserstein critic loss with gradient penalties.

    The CS head sees projections of the same real, fake and interpolated
    epochs the EEG head sees, with the same interpolation weights.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"real {tuple(real.shape)} vs fake {tuple(fake.shape)}")
    a = _alpha(real, alpha, generator)
    w_eeg = critic.score_eeg(fake).mean() - critic.score_eeg(real).mean()
    x_hat = a * real + (1 - a) * fake
    if not x_hat.requires_grad:
        x_hat.requires_grad_(True)
    gp_eeg = _penalty(x_hat, critic.score_eeg)
    total = w_eeg + weights.lambda_gp * gp_eeg
    parts = {"w_eeg": w_eeg, "gp_eeg": gp_eeg}
    if _has_cs(critic):
        W = st.W.to(real.dtype)
        w_cs = (critic.score_cs(project_batch(fake, W)).mean()
                - critic.score_cs(project_batch(real, W)).mean())
        gp_cs = _penalty(project_batch(x_hat, W), critic.score_cs)
        total = total + w_cs + weights.lambda_gp * gp_cs
        parts.update(w_cs=w_cs, gp_cs=gp_cs)
    parts["d_total"] = total
    return total, {k: float(v.detach()) for k, v in parts.items()}
