"""Exact conversion between LiDAR point clouds and range-view depth images.

Conventions used throughout the package:

* Sensor frame, meters, 64-bit floats. A point's range is its Euclidean
  norm and must be positive.
* The back-projection of a pixel with elevation ``theta``, azimuth ``phi``
  and depth ``d`` is ``(d cos(theta) cos(phi), -d cos(theta) sin(phi),
  d sin(theta))``. The forward projection inverts this exactly, so azimuth
  is ``atan2(-y, x)`` in ``(-pi, pi]``.
* Rows index elevation (row 0 at the top of the field of view), columns
  index azimuth and wrap around exactly once.
* Pixels without a laser return carry depth 0 and mask False.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import check_offsets, check_points, check_range_image

# Depth floor applied when a radial offset would push a point through the
# sensor origin.
EPS_DEPTH = 1e-3


@dataclass
class PointCloud:
    """N points in the sensor frame with optional per-point intensity."""

    points: np.ndarray                 # (N, 3) float64, meters
    intensity: np.ndarray | None = None  # (N,) float64 in [0, 1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ProjectionConfig:
    """Angular resolution and field-of-view bounds of a range image.

    The elevation map is either uniform (``sigma_u`` pixels per radian
    around ``elevation_center``) or an explicit strictly monotone table of
    per-row elevation angles for sensors with non-equally spaced lasers.
    """

    height: int
    width: int
    sigma_u: float | None = None
    elevation_center: float | None = None
    elevation_table: np.ndarray | None = None

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if self.elevation_table is not None:
            table = np.asarray(self.elevation_table, dtype=np.float64)
            if table.shape != (self.height,):
                raise ValueError("elevation table length must equal height")
            diffs = np.diff(table)
            if not (np.all(diffs > 0) or np.all(diffs < 0)):
                raise ValueError("elevation table must be strictly monotone")
            if np.any(np.abs(table) >= np.pi / 2):
                raise ValueError("elevations must lie in (-pi/2, pi/2)")
            object.__setattr__(self, "elevation_table", table)
        else:
            if self.sigma_u is None or self.elevation_center is None:
                raise ValueError(
                    "either (sigma_u, elevation_center) or elevation_table required")
            if self.sigma_u <= 0:
                raise ValueError("sigma_u must be positive")
            span = self.height / self.sigma_u
            top = self.elevation_center + span / 2
            bottom = self.elevation_center - span / 2
            if bottom <= -np.pi / 2 or top >= np.pi / 2:
                raise ValueError("field of view must lie in (-pi/2, pi/2)")

    @classmethod
    def from_fov(cls, height: int, width: int, elev_up: float, elev_down: float
                 ) -> "ProjectionConfig":
        """Uniform config covering elevations [elev_down, elev_up] (radians)."""
        if elev_up <= elev_down:
            raise ValueError("elev_up must exceed elev_down")
        sigma_u = height / (elev_up - elev_down)
        return cls(height, width, sigma_u=sigma_u,
                   elevation_center=(elev_up + elev_down) / 2)

    @classmethod
    def from_table(cls, width: int, elevations) -> "ProjectionConfig":
        table = np.asarray(elevations, dtype=np.float64)
        return cls(len(table), width, elevation_table=table)

    @property
    def sigma_v(self) -> float:
        """Azimuth pixels per radian; fixed so azimuth wraps exactly once."""
        return self.width / (2 * np.pi)

    @property
    def uniform(self) -> bool:
        return self.elevation_table is None

    def row_elevations(self) -> np.ndarray:
        """Per-row elevation angle of the pixel centers, radians."""
        if self.uniform:
            top = self.elevation_center + self.height / (2 * self.sigma_u)
            return top - (np.arange(self.height) + 0.5) / self.sigma_u
        return self.elevation_table.copy()

    def col_azimuths(self) -> np.ndarray:
        """Per-column azimuth angle of the pixel centers, radians."""
        return 2 * np.pi * ((np.arange(self.width) + 0.5) / self.width - 0.5)

    def rows_of_elevation(self, theta: np.ndarray) -> np.ndarray:
        """Map elevations to row indices; -1 where outside the covered band.

        Uniform case: ``row = floor((theta_max - theta) * sigma_u)`` clamped
        at the bottom boundary. Table case: interval membership with
        midpoint boundaries, extended half an interval past the end rows.
        """
        theta = np.asarray(theta, dtype=np.float64)
        if self.uniform:
            top = self.elevation_center + self.height / (2 * self.sigma_u)
            t = (top - theta) * self.sigma_u
            rows = np.minimum(np.floor(t).astype(np.int64), self.height - 1)
            rows[(t < 0) | (t > self.height)] = -1
            return rows
        table = self.elevation_table
        ascending = table[1] > table[0]
        asc = table if ascending else table[::-1]
        half = np.diff(asc) / 2
        edges = np.concatenate((
            [asc[0] - half[0]], asc[:-1] + half, [asc[-1] + half[-1]]))
        idx = np.searchsorted(edges, theta, side="right") - 1
        rows = np.where((idx >= 0) & (idx < self.height), idx, -1)
        if not ascending:
            rows = np.where(rows >= 0, self.height - 1 - rows, -1)
        return rows.astype(np.int64)

    def cols_of_azimuth(self, phi: np.ndarray) -> np.ndarray:
        """Map azimuths in (-pi, pi] to column indices, wrap-exact."""
        phi = np.asarray(phi, dtype=np.float64)
        return np.floor((phi / (2 * np.pi) + 0.5) * self.width).astype(np.int64) % self.width


@dataclass
class RangeImage:
    """H x W depth grid with a laser-return mask and its projection config."""

    depth: np.ndarray   # (H, W) float64, meters; 0 where mask is False
    mask: np.ndarray    # (H, W) bool
    config: ProjectionConfig

    def copy(self) -> "RangeImage":
        return RangeImage(self.depth.copy(), self.mask.copy(), self.config)


@dataclass
class IndexMap:
    """Point/pixel correspondence produced by a projection.

    ``pixel_of_point[i]`` is (row, col) or (-1, -1) for points that were
    dropped; ``point_of_pixel[r, c]`` is a point index or -1. The map is a
    bijection on its defined subset.
    """

    pixel_of_point: np.ndarray  # (N, 2) int64
    point_of_pixel: np.ndarray  # (H, W) int64
    dropped_fov: int = 0        # points outside the elevation band
    dropped_collision: int = 0  # points occluded by a nearer return

    @property
    def surviving(self) -> int:
        return int(np.count_nonzero(self.pixel_of_point[:, 0] >= 0))


@dataclass
class OffsetField:
    """Per-point 3D offsets, their radial projections, and signed magnitudes."""

    raw: np.ndarray       # (N, 3) meters
    radial: np.ndarray    # (N, 3) meters, colinear with each point's ray
    signed: np.ndarray    # (N,) meters; radial[i] = signed[i] * unit ray


def rvp_angles(point, config: ProjectionConfig) -> tuple[float, float, float]:
    """Elevation, azimuth and depth of a single point.

    Elevation is ``atan2(z, hypot(x, y))``; azimuth is ``atan2(-y, x)``
    mapped into ``(-pi, pi]`` so that it inverts the back-projection
    exactly. Points at the origin or on the vertical axis (degenerate
    azimuth) raise ``ValueError``.
    """
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError("point must be a 3-vector")
    horiz = np.hypot(p[0], p[1])
    depth = np.hypot(horiz, p[2])
    if depth == 0.0:
        raise ValueError("zero-length point has no direction")
    if horiz == 0.0:
        raise ValueError("point on the vertical axis has no azimuth")
    elevation = np.arctan2(p[2], horiz)
    azimuth = np.arctan2(-p[1], p[0])
    if azimuth <= -np.pi:
        azimuth = np.pi
    return float(elevation), float(azimuth), float(depth)


def _angles_bulk(points: np.ndarray):
    horiz = np.hypot(points[:, 0], points[:, 1])
    depth = np.hypot(horiz, points[:, 2])
    elevation = np.arctan2(points[:, 2], horiz)
    azimuth = np.arctan2(-points[:, 1], points[:, 0])
    return elevation, azimuth, depth


def rvp(cloud: PointCloud, config: ProjectionConfig) -> tuple[RangeImage, IndexMap]:
    """Project a point cloud onto the range-view grid.

    Pixel collisions keep the nearest return (minimum depth, then lowest
    point index), so the output image does not depend on point order.
    Points whose elevation falls outside the covered band are dropped and
    counted in the returned :class:`IndexMap`.
    """
    points = check_points(cloud.points, require_nonzero=True)
    if len(points) == 0:
        raise ValueError("cannot project an empty cloud")
    n = len(points)
    h, w = config.height, config.width

    elevation, azimuth, depth = _angles_bulk(points)
    rows = config.rows_of_elevation(elevation)
    # Points exactly on the vertical axis have elevation +-pi/2, outside
    # any valid band, so they are dropped with the other out-of-band points.
    cols = config.cols_of_azimuth(azimuth)
    in_band = rows >= 0

    pixel_of_point = np.full((n, 2), -1, dtype=np.int64)
    point_of_pixel = np.full((h, w), -1, dtype=np.int64)
    depth_img = np.zeros((h, w), dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)

    idx = np.nonzero(in_band)[0]
    if idx.size:
        lin = rows[idx] * w + cols[idx]
        # Sort by (pixel, depth, index); the first entry per pixel wins.
        order = np.lexsort((idx, depth[idx], lin))
        lin_sorted = lin[order]
        first = np.ones(lin_sorted.size, dtype=bool)
        first[1:] = lin_sorted[1:] != lin_sorted[:-1]
        winners = idx[order[first]]
        win_lin = lin_sorted[first]

        depth_img.flat[win_lin] = depth[winners]
        mask.flat[win_lin] = True
        point_of_pixel.flat[win_lin] = winners
        pixel_of_point[winners, 0] = rows[winners]
        pixel_of_point[winners, 1] = cols[winners]

    index_map = IndexMap(
        pixel_of_point, point_of_pixel,
        dropped_fov=int(n - idx.size),
        dropped_collision=int(idx.size - np.count_nonzero(mask)),
    )
    return RangeImage(depth_img, mask, config), index_map


def rrvp(image: RangeImage) -> tuple[PointCloud, IndexMap]:
    """Back-project a range image to a point cloud, row-major pixel order.

    Every masked pixel yields exactly one point at its center angles, so
    the conversion is lossless: re-projecting reproduces the image.
    """
    check_range_image(image)
    config = image.config
    rows, cols = np.nonzero(image.mask)
    d = image.depth[rows, cols]
    theta = config.row_elevations()[rows]
    phi = config.col_azimuths()[cols]

    cos_t = np.cos(theta)
    points = np.empty((rows.size, 3), dtype=np.float64)
    points[:, 0] = d * cos_t * np.cos(phi)
    points[:, 1] = -d * cos_t * np.sin(phi)
    points[:, 2] = d * np.sin(theta)

    pixel_of_point = np.stack((rows, cols), axis=1).astype(np.int64)
    point_of_pixel = np.full((config.height, config.width), -1, dtype=np.int64)
    point_of_pixel[rows, cols] = np.arange(rows.size)
    return PointCloud(points), IndexMap(pixel_of_point, point_of_pixel)


def radial_project(cloud: PointCloud, raw_offsets: np.ndarray) -> OffsetField:
    """Project per-point offsets onto each point's ray direction.

    The signed magnitude is the orthogonal projection
    ``s = (p . o) / |p|`` and the radial offset is ``s * p / |p|``, so the
    radial component changes a point's depth by exactly ``s`` while leaving
    its projection pixel fixed.
    """
    points = check_points(cloud.points, require_nonzero=True)
    raw = check_offsets(raw_offsets, len(points))
    norms = np.sqrt(np.einsum("ij,ij->i", points, points))
    signed = np.einsum("ij,ij->i", points, raw) / norms
    radial = signed[:, None] * (points / norms[:, None])
    return OffsetField(raw=raw, radial=radial, signed=signed)


def apply_offsets(cloud: PointCloud, offsets: OffsetField
                  ) -> tuple[PointCloud, np.ndarray]:
    """Move points along their rays by the field's radial component.

    Returns the moved cloud and a boolean mask of points whose magnitude
    was clamped because the requested move would have pushed them through
    the sensor (new depth is floored at ``EPS_DEPTH``). Intensity passes
    through unchanged.
    """
    points = check_points(cloud.points, require_nonzero=True)
    if offsets.radial.shape != points.shape:
        raise ValueError("offset field length does not match cloud")
    norms = np.sqrt(np.einsum("ij,ij->i", points, points))
    new_depth = norms + offsets.signed
    clamped = new_depth < EPS_DEPTH

    moved = points + offsets.radial
    if np.any(clamped):
        unit = points[clamped] / norms[clamped, None]
        moved[clamped] = EPS_DEPTH * unit
    intensity = None if cloud.intensity is None else cloud.intensity.copy()
    return PointCloud(moved, intensity), clamped
