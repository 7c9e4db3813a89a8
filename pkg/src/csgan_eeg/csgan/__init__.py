"""CS-GAN: per-class generator with spatially constrained two-head critic."""
from .networks import (Generator, Discriminator, GeneratorConfig, DiscriminatorConfig,
                       deconv_out, conv_out)
from .losses import (SpatialTensors, LossWeights, batch_covariance, project_batch,
                     gradient_penalty, cov_loss, ev_loss, ev_eigenvalues,
                     generator_loss, discriminator_loss)
from .training import GanTrainConfig, GanCheckpoint, train_csgan, sample

__all__ = [
    "Generator", "Discriminator", "GeneratorConfig", "DiscriminatorConfig",
    "deconv_out", "conv_out", "SpatialTensors", "LossWeights", "batch_covariance",
    "project_batch", "gradient_penalty", "cov_loss", "ev_loss", "ev_eigenvalues",
    "generator_loss", "discriminator_loss", "GanTrainConfig", "GanCheckpoint",
    "train_csgan", "sample",
]
