"""Distributional metrics over point-cloud sets and gradient histograms.

Bird's-eye-view statistics voxelize clouds on a 0.5 m ground-plane grid,
accumulate along z, and compare sets either by the Jensen-Shannon
divergence of their average occupancy distribution (base 2, so the value
lives in [0, 1]) or by the mean minimum squared distance from generated
to ground-truth maps.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .diffusion import spatial_grad
from .geometry import PointCloud
from .validation import check_points

BEV_VOXEL = 0.5
GRAD_LO = 0.3
GRAD_HI = 10.0
GRAD_BINS = 64


@dataclass
class BevHistogram:
    """z-accumulated 0.5 m occupancy grid over (x, y), with normalization."""

    counts: np.ndarray      # (n, n) float64
    extent: float
    total: int              # points inside the extent

    @property
    def empty(self) -> bool:
        return self.total == 0

    @property
    def normalized(self) -> np.ndarray:
        if self.empty:
            raise ValueError("histogram has no points; normalization undefined")
        return self.counts / self.total


def bev_histogram(cloud: PointCloud, extent: float = 40.0) -> BevHistogram:
    """Bin points on the ground plane; points outside the extent drop out.

    Bin index is ``floor((coordinate + extent) / 0.5)`` per axis.
    """
    if extent <= 0:
        raise ValueError("extent must be positive")
    points = check_points(cloud.points)
    n = int(np.ceil(2 * extent / BEV_VOXEL))
    counts = np.zeros((n, n), dtype=np.float64)
    if len(points):
        ix = np.floor((points[:, 0] + extent) / BEV_VOXEL).astype(np.int64)
        iy = np.floor((points[:, 1] + extent) / BEV_VOXEL).astype(np.int64)
        keep = (ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
        np.add.at(counts, (ix[keep], iy[keep]), 1.0)
    return BevHistogram(counts=counts, extent=extent,
                        total=int(counts.sum()))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence of two probability grids."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("probability grids must share a shape")
    m = 0.5 * (p + q)
    val = 0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum()
    return float(val / np.log(2.0))


def _mean_bev(clouds, extent) -> np.ndarray:
    grids = []
    for cloud in clouds:
        hist = bev_histogram(cloud, extent)
        if hist.empty:
            raise ValueError("a cloud has no points inside the extent")
        grids.append(hist.normalized)
    if not grids:
        raise ValueError("cloud set is empty")
    return np.mean(grids, axis=0)


def jsd_sets(set_a, set_b, extent: float = 40.0) -> float:
    """JSD between the average normalized occupancy maps of two sets."""
    return jsd(_mean_bev(set_a, extent), _mean_bev(set_b, extent))


def mmd(gen_set, gt_set, extent: float = 40.0) -> float:
    """Mean over generated maps of the min squared distance to any GT map."""
    gen = [bev_histogram(c, extent) for c in gen_set]
    gt = [bev_histogram(c, extent) for c in gt_set]
    if not gen or not gt:
        raise ValueError("both sets must be nonempty")
    if any(h.empty for h in gen + gt):
        raise ValueError("a cloud has no points inside the extent")
    gt_grids = [h.normalized for h in gt]
    dists = []
    for h in gen:
        g = h.normalized
        dists.append(min(float(np.sum((g - r) ** 2)) for r in gt_grids))
    return float(np.mean(dists))


@dataclass
class GradHistogram:
    """Normalized log-spaced histogram of in-range gradient norms."""

    edges: np.ndarray
    mass: np.ndarray
    total: int   # gradients that fell in [GRAD_LO, GRAD_HI]

    @property
    def empty(self) -> bool:
        return self.total == 0


def pooled_grad_norms(images, lo: float = GRAD_LO,
                      hi: float = GRAD_HI) -> np.ndarray:
    """All valid per-pixel gradient norms of a set, windowed to [lo, hi].

    Drops the dominant near-planar gradients below ``lo`` and the rare
    jumps above ``hi`` so sets are compared on geometry-scale content.
    """
    pooled = []
    for image in images:
        norms, valid = spatial_grad(image)
        vals = norms[valid]
        pooled.append(vals[(vals >= lo) & (vals <= hi)])
    return np.concatenate(pooled) if pooled else np.empty(0)


def grad_histogram(images, bins: int = GRAD_BINS) -> GradHistogram:
    """Pool in-range gradient norms of an image set and bin them."""
    if not images:
        raise ValueError("image set is empty")
    vals = pooled_grad_norms(images)
    edges = np.geomspace(GRAD_LO, GRAD_HI, bins + 1)
    counts, _ = np.histogram(vals, bins=edges)
    total = int(counts.sum())
    mass = counts / total if total else counts.astype(np.float64)
    return GradHistogram(edges=edges, mass=mass, total=total)


def grad_jsd(set_a, set_b) -> float:
    """Base-2 JSD between the gradient histograms of two image sets."""
    ha = grad_histogram(set_a)
    hb = grad_histogram(set_b)
    if ha.empty or hb.empty:
        raise ValueError("a set has no gradients in the comparable range")
    return jsd(ha.mass, hb.mass)
