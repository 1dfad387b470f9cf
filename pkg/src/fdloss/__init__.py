"""Filled disparity loss for self-supervised stereo depth estimation.

Texture masking, disparity filling, warping losses with analytic gradients,
direct disparity optimisation and depth metrics, all on numpy arrays.
"""

from .core import CameraRig, FDLossError, LossWeights
from .filler import fill_disparity, propagate, smooth
from .grad import grad_total
from .losses import total_loss
from .metrics import bin_metrics, depth_metrics, disp_to_depth
from .optimize import OptimizerConfig, evaluate_run, optimize_disparity
from .scenes import fixture, render_stereo, sample_rotation
from .texture import sobel7, texture_mask, texturedness
from .warp import StereoPair, project_disparity, reconstruct_left, reconstruct_right

__version__ = "0.1.0"

__all__ = [
    "CameraRig",
    "FDLossError",
    "LossWeights",
    "OptimizerConfig",
    "StereoPair",
    "bin_metrics",
    "depth_metrics",
    "disp_to_depth",
    "evaluate_run",
    "fill_disparity",
    "fixture",
    "grad_total",
    "optimize_disparity",
    "project_disparity",
    "propagate",
    "reconstruct_left",
    "reconstruct_right",
    "render_stereo",
    "sample_rotation",
    "smooth",
    "sobel7",
    "texture_mask",
    "texturedness",
    "total_loss",
]
