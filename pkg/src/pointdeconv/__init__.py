"""Progressive point-cloud deconvolution GAN, framework-free."""

from . import (autodiff, checkpoint, config, data, discriminator, generator,
               geometry, metrics, nn, report, training)

__all__ = ["autodiff", "checkpoint", "config", "data", "discriminator",
           "generator", "geometry", "metrics", "nn", "report", "training"]

__version__ = "0.1.0"
