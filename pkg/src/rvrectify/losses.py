"""Robust and squared losses over masked range-image residuals.

The robust penalty is the bounded bell-shaped function
``psi(x) = 1 - exp(-x^2 / (2 nu^2))``: its gradient peaks at ``x = nu``
and vanishes for residuals much larger than ``nu``, so pixels with large
coherent depth errors stop contributing to training.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import RangeImage
from .validation import check_same_grid


@dataclass(frozen=True)
class WelschParams:
    """Width parameter of the robust penalty, meters."""

    nu: float = 0.5

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")


def welsch(x, params: WelschParams = WelschParams()):
    """Robust penalty value in [0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 - np.exp(-(x * x) / (2.0 * params.nu ** 2))


def welsch_grad(x, params: WelschParams = WelschParams()):
    """Derivative of the robust penalty: (x / nu^2) exp(-x^2 / (2 nu^2))."""
    x = np.asarray(x, dtype=np.float64)
    return (x / params.nu ** 2) * np.exp(-(x * x) / (2.0 * params.nu ** 2))


def _joint_residual(s, x_gen: RangeImage, x_gt: RangeImage):
    check_same_grid(x_gen, x_gt)
    joint = x_gen.mask & x_gt.mask
    if not np.any(joint):
        raise ValueError("images share no masked pixels")
    s = np.asarray(s, dtype=np.float64)
    if s.shape != joint.shape:
        raise ValueError("per-pixel magnitudes must match the image grid")
    residual = x_gen.depth[joint] + s[joint] - x_gt.depth[joint]
    return residual, joint


def rrn_loss(s, x_gen: RangeImage, x_gt: RangeImage,
             params: WelschParams = WelschParams()) -> float:
    """Mean robust penalty of the corrected residual over the joint mask.

    ``s`` holds per-pixel radial magnitudes; because radial offsets change
    only the depth at a fixed pixel, the corrected image's depth is exactly
    ``depth + s`` and the loss reduces to a pixel-space mean.
    """
    residual, _ = _joint_residual(s, x_gen, x_gt)
    return float(np.mean(welsch(residual, params)))


def rrn_loss_grad(s, x_gen: RangeImage, x_gt: RangeImage,
                  params: WelschParams = WelschParams()) -> np.ndarray:
    """Per-pixel gradient of :func:`rrn_loss` with respect to ``s``."""
    residual, joint = _joint_residual(s, x_gen, x_gt)
    grad = np.zeros(joint.shape, dtype=np.float64)
    grad[joint] = welsch_grad(residual, params) / residual.size
    return grad


def mse_loss(s, x_gen: RangeImage, x_gt: RangeImage) -> float:
    """Mean squared corrected residual over the joint mask."""
    residual, _ = _joint_residual(s, x_gen, x_gt)
    return float(np.mean(residual * residual))


def mse_loss_grad(s, x_gen: RangeImage, x_gt: RangeImage) -> np.ndarray:
    """Per-pixel gradient of :func:`mse_loss`; grows linearly with residual."""
    residual, joint = _joint_residual(s, x_gen, x_gt)
    grad = np.zeros(joint.shape, dtype=np.float64)
    grad[joint] = 2.0 * residual / residual.size
    return grad
