"""Local-window depth features for the per-pixel rectification models."""

from dataclasses import dataclass

import numpy as np

from .geometry import RangeImage
from .validation import check_range_image


@dataclass
class FeatureGrid:
    """Per-pixel feature vectors plus their validity mask.

    Features at radius ``r`` are, in order: center depth, then for each
    offset ``k = 1..r`` the left/right/up/down depth differences
    ``depth[neighbor at distance k] - depth[center]``, and finally the
    depth variance over the full ``(2r+1) x (2r+1)`` window. Columns wrap
    in azimuth; a pixel is invalid when its window leaves the grid
    vertically or touches any no-return pixel.
    """

    values: np.ndarray   # (H, W, F) float64
    valid: np.ndarray    # (H, W) bool
    radius: int

    @property
    def n_features(self) -> int:
        return self.values.shape[2]


def feature_count(radius: int) -> int:
    return 1 if radius == 0 else 2 + 4 * radius


def extract_features(image: RangeImage, radius: int = 2) -> FeatureGrid:
    """Deterministic window statistics of the depth grid.

    ``radius`` 0 degenerates to the depth value alone.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    check_range_image(image)
    depth = image.depth
    mask = image.mask
    h, w = depth.shape

    if radius == 0:
        values = depth[:, :, None].copy()
        return FeatureGrid(values, mask.copy(), radius)

    values = np.zeros((h, w, feature_count(radius)), dtype=np.float64)
    values[:, :, 0] = depth

    valid = mask.copy()
    window_sum = np.zeros((h, w), dtype=np.float64)
    window_sq = np.zeros((h, w), dtype=np.float64)
    count = (2 * radius + 1) ** 2

    col = 1
    for k in range(1, radius + 1):
        left = np.roll(depth, k, axis=1)
        right = np.roll(depth, -k, axis=1)
        values[:, :, col] = left - depth
        values[:, :, col + 1] = right - depth
        # Vertical shifts do not wrap; out-of-grid rows invalidate below.
        up = np.zeros_like(depth)
        down = np.zeros_like(depth)
        up[k:] = depth[:-k]
        down[:-k] = depth[k:]
        values[:, :, col + 2] = up - depth
        values[:, :, col + 3] = down - depth
        col += 4

    for dr in range(-radius, radius + 1):
        rolled_mask = np.zeros_like(mask)
        rolled_depth = np.zeros_like(depth)
        if dr >= 0:
            rolled_mask[dr:] = mask[: h - dr]
            rolled_depth[dr:] = depth[: h - dr]
        else:
            rolled_mask[:dr] = mask[-dr:]
            rolled_depth[:dr] = depth[-dr:]
        for dc in range(-radius, radius + 1):
            m = np.roll(rolled_mask, dc, axis=1)
            d = np.roll(rolled_depth, dc, axis=1)
            valid &= m
            window_sum += d
            window_sq += d * d

    valid[:radius] = False
    valid[h - radius:] = False

    mean = window_sum / count
    values[:, :, -1] = np.maximum(window_sq / count - mean * mean, 0.0)
    values[~valid] = 0.0
    return FeatureGrid(values, valid, radius)
