"""Spatially constrained GAN augmentation for cross-subject motor-imagery EEG."""
__version__ = "0.1.0"
