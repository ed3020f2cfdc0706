"""Input validation helpers shared across the package."""

import numpy as np


def check_points(points, require_nonzero: bool = False) -> np.ndarray:
    """Validate and return an (N, 3) float64 point array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")
    if require_nonzero and pts.size and np.any(np.all(pts == 0.0, axis=1)):
        raise ValueError("zero-length points have no ray direction")
    return pts


def check_offsets(offsets, n: int) -> np.ndarray:
    off = np.asarray(offsets, dtype=np.float64)
    if off.shape != (n, 3):
        raise ValueError(f"offsets must have shape ({n}, 3), got {off.shape}")
    if not np.all(np.isfinite(off)):
        raise ValueError("offsets contain non-finite values")
    return off


def check_range_image(image) -> None:
    """Check grid shapes, the no-return sentinel, and depth positivity."""
    h, w = image.config.height, image.config.width
    if image.depth.shape != (h, w) or image.mask.shape != (h, w):
        raise ValueError("image dimensions do not match its config")
    if image.mask.dtype != bool:
        raise ValueError("mask must be boolean")
    masked = image.depth[image.mask]
    if masked.size and (not np.all(np.isfinite(masked)) or np.any(masked <= 0)):
        raise ValueError("masked pixels must have finite positive depth")
    if np.any(image.depth[~image.mask] != 0.0):
        raise ValueError("unmasked pixels must carry the 0 sentinel")


def check_same_grid(a, b) -> None:
    """Require two range images to share shape, mask semantics, and config."""
    if a.depth.shape != b.depth.shape:
        raise ValueError("images have different shapes")
    if (a.config.height, a.config.width) != (b.config.height, b.config.width):
        raise ValueError("images have different projection configs")
