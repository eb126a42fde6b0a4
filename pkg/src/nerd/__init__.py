"""Neural-field demosaicking of GBRG Bayer images.

A coordinate MLP with sine activations, conditioned on local feature
encodings from a residual/U-Net encoder, reconstructs RGB values from a
Bayer mosaic.  The package also ships the ablation variants (ReLU,
Fourier-feature positional encoding, Bayer-only self-supervision, no-skip
MLP), bilinear and Malvar baselines, PSNR/SSIM metrics, and a training
and evaluation harness, all driven by a small tape-based autodiff core.
"""

from .autodiff import Tape, Tensor, grad_check
from .errors import (AutodiffError, ConfigurationError, DimensionError, FormatError,
                     NerdError, TrainingError)
from .image import BayerImage, RgbImage, coord_grid, mosaic
from .metrics import psnr, ssim

__all__ = [
    "Tape", "Tensor", "grad_check",
    "NerdError", "DimensionError", "FormatError", "ConfigurationError",
    "TrainingError", "AutodiffError",
    "RgbImage", "BayerImage", "mosaic", "coord_grid", "psnr", "ssim",
]

__version__ = "0.1.0"
