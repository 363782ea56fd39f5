"""Voxel-wise tissue classification for high angular resolution diffusion MRI.

The pipeline: simulate or load a diffusion-weighted volume, reduce each voxel
to a rotation-invariant feature vector, sharpen the feature maps with learned
per-feature 2D convolution kernels, and classify every voxel into one of four
tissue classes with a Gaussian-kernel SVM. A genetic algorithm searches the
kernel weights against white-matter-focused error rates.
"""

from .backend import active_backend
from .errors import (
    FormatError,
    HardivoxError,
    NumericalError,
    TrainingError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "FormatError",
    "HardivoxError",
    "NumericalError",
    "TrainingError",
    "ValidationError",
    "active_backend",
    "__version__",
]
