"""Procedural scenes and controlled depth-artifact injection.

Scenes are ray-cast rooms: a ground plane, four enclosing walls, and a
few boxes or cylinders standing just in front of the walls. Keeping
objects close to their backdrop bounds the depth gap at silhouette
edges, which keeps small stochastic artifacts and large coherent depth
shifts in clearly separated residual regimes.

Corruption of a clean scene mimics the failure modes of smooth
image-space generators: interpolated "bleeding" pixels at depth edges,
sinusoidal surface waviness, blurred (rounded) corners, and large
coherent per-region depth shifts. Every injector touches only masked
pixels, never the mask, and labels what it changed.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .geometry import ProjectionConfig, RangeImage
from .validation import check_range_image

LABEL_CLEAN = 0
LABEL_VARIANCE = 1
LABEL_BIAS = 2

_MIN_HIT = 1e-6


@dataclass(frozen=True)
class Box:
    """Axis-aligned box: center (meters) and full edge lengths."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]


@dataclass(frozen=True)
class Cylinder:
    """Vertical solid cylinder: center, radius, and full height."""

    center: tuple[float, float, float]
    radius: float
    height: float


@dataclass
class SceneSpec:
    seed: int = 0
    ground_z: float = -1.8
    sensor_height: float = 0.0
    max_range: float = 80.0
    primitives: list = field(default_factory=list)

    def __post_init__(self):
        for prim in self.primitives:
            center = np.asarray(prim.center, dtype=np.float64)
            if isinstance(prim, Box):
                reach = np.linalg.norm(center) + np.linalg.norm(prim.size) / 2
            else:
                reach = np.linalg.norm(center) + prim.radius + prim.height / 2
            if math.isfinite(self.max_range) and reach > self.max_range:
                raise ValueError("primitive extends beyond max_range")


@dataclass(frozen=True)
class BleedSpec:
    edge_threshold: float = 2.0   # meters; azimuth gap that counts as an edge
    width: int = 2                # pixels replaced on the far side
    probability: float = 0.5


@dataclass(frozen=True)
class WavySpec:
    amplitude: float = 0.15       # meters
    azimuth_period: float = 64.0  # pixels
    elevation_period: float = 16.0


@dataclass(frozen=True)
class RoundSpec:
    kernel_sigma: float = 1.0     # pixels
    edge_band: int = 3            # pixels around a discontinuity


@dataclass(frozen=True)
class BiasSpec:
    count: int = 4
    min_area: int = 200           # pixels
    depth_shift_range: tuple[float, float] = (3.0, 8.0)


@dataclass(frozen=True)
class CorruptionSpec:
    bleed: BleedSpec = BleedSpec()
    wavy: WavySpec = WavySpec()
    round_corners: RoundSpec = RoundSpec()
    bias: BiasSpec = BiasSpec()
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.bleed.probability <= 1.0:
            raise ValueError("bleed probability must lie in [0, 1]")
        if self.wavy.amplitude < 0 or self.bleed.edge_threshold < 0:
            raise ValueError("magnitudes must be non-negative")
        if self.wavy.azimuth_period <= 0 or self.wavy.elevation_period <= 0:
            raise ValueError("wavy periods must be positive")
        lo, hi = self.bias.depth_shift_range
        if not 0 <= lo <= hi:
            raise ValueError("depth_shift_range must be ordered and non-negative")
        if lo < 3 * self.wavy.amplitude:
            raise ValueError(
                "minimum depth shift must be at least 3x the wavy amplitude "
                "to keep bias and variance regimes separable")


@dataclass
class CorruptionReport:
    """Per-pixel labels partitioning the masked pixels, plus counts."""

    labels: np.ndarray          # (H, W) uint8; meaningful on masked pixels
    mask: np.ndarray            # (H, W) bool, the image mask at injection time
    chunks_requested: int = 0
    chunks_placed: int = 0

    def label_masks(self) -> dict[str, np.ndarray]:
        return {
            "clean": self.mask & (self.labels == LABEL_CLEAN),
            "variance_artifact": self.mask & (self.labels == LABEL_VARIANCE),
            "bias_region": self.mask & (self.labels == LABEL_BIAS),
        }

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(m))
                for name, m in self.label_masks().items()}


def _empty_report(image: RangeImage) -> CorruptionReport:
    return CorruptionReport(
        labels=np.zeros(image.mask.shape, dtype=np.uint8),
        mask=image.mask.copy())


# ---------------------------------------------------------------- scenes

def _slab_interval(o, d, lo, hi):
    """Entry/exit parameters of a ray against one axis slab."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / d
        t2 = (hi - o) / d
    return np.minimum(t1, t2), np.maximum(t1, t2)


def _box_hits(origin, dirs, box: Box) -> np.ndarray:
    center = np.asarray(box.center, dtype=np.float64)
    half = np.asarray(box.size, dtype=np.float64) / 2
    enter = np.full(dirs.shape[:2], -np.inf)
    exit_ = np.full(dirs.shape[:2], np.inf)
    for axis in range(3):
        t_lo, t_hi = _slab_interval(origin[axis], dirs[:, :, axis],
                                    center[axis] - half[axis],
                                    center[axis] + half[axis])
        enter = np.maximum(enter, t_lo)
        exit_ = np.minimum(exit_, t_hi)
    t = np.where((enter <= exit_) & (enter > _MIN_HIT), enter, np.inf)
    return t


def _cylinder_hits(origin, dirs, cyl: Cylinder) -> np.ndarray:
    center = np.asarray(cyl.center, dtype=np.float64)
    dx, dy = dirs[:, :, 0], dirs[:, :, 1]
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - cyl.radius ** 2
    disc = b * b - 4.0 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
        t_lo = (-b - sqrt_disc) / (2.0 * a)
        t_hi = (-b + sqrt_disc) / (2.0 * a)
    # Vertical rays (a == 0): inside the circle means an unbounded interval.
    vertical = a <= 1e-300
    inside = c < 0
    t_lo = np.where(vertical, np.where(inside, -np.inf, np.inf), t_lo)
    t_hi = np.where(vertical, np.where(inside, np.inf, -np.inf), t_hi)
    lateral_ok = vertical | (disc >= 0)

    z_lo, z_hi = _slab_interval(origin[2], dirs[:, :, 2],
                                center[2] - cyl.height / 2,
                                center[2] + cyl.height / 2)
    enter = np.maximum(t_lo, z_lo)
    exit_ = np.minimum(t_hi, z_hi)
    hit = lateral_ok & (enter <= exit_) & (enter > _MIN_HIT)
    return np.where(hit, enter, np.inf)


def _ground_hits(origin, dirs, ground_z) -> np.ndarray:
    dz = dirs[:, :, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground_z - origin[2]) / dz
    return np.where(t > _MIN_HIT, t, np.inf)


def synth_scene(spec: SceneSpec, config: ProjectionConfig) -> RangeImage:
    """Ray-cast a scene at every pixel center; nearest hit wins.

    Rays start at ``(0, 0, sensor_height)``. Pixels whose nearest hit is
    farther than ``max_range`` (or that hit nothing) carry no return.
    """
    origin = np.array([0.0, 0.0, spec.sensor_height])
    theta = config.row_elevations()[:, None]
    phi = config.col_azimuths()[None, :]
    cos_t = np.cos(theta)
    dirs = np.empty((config.height, config.width, 3), dtype=np.float64)
    dirs[:, :, 0] = cos_t * np.cos(phi)
    dirs[:, :, 1] = -cos_t * np.sin(phi)
    dirs[:, :, 2] = np.broadcast_to(np.sin(theta), dirs.shape[:2])

    best = _ground_hits(origin, dirs, spec.ground_z)
    for prim in spec.primitives:
        if isinstance(prim, Box):
            t = _box_hits(origin, dirs, prim)
        else:
            t = _cylinder_hits(origin, dirs, prim)
        best = np.minimum(best, t)

    mask = np.isfinite(best) & (best <= spec.max_range)
    depth = np.where(mask, best, 0.0)
    return RangeImage(depth, mask, config)


def random_scene(seed: int, n_objects: int = 3, ground_z: float = -1.8,
                 sensor_height: float = 0.0, max_range: float = 80.0,
                 room_min: float = 14.0, room_max: float = 30.0,
                 standoff: tuple[float, float] = (1.0, 2.4)) -> SceneSpec:
    """Seeded room scene: ground, four walls, wall-hugging objects.

    Objects stand on the ground a short random distance in front of a
    wall and never rise above it, so adjacent-return depth gaps stay on
    the order of the standoff.
    """
    rng = np.random.default_rng(seed)
    dist = rng.uniform(room_min, room_max, size=4)  # +x, -x, +y, -y
    # Wall tops sit just above the sensor horizon: rays clearing a wall
    # climb into the sky instead of grazing distant ground, so every
    # masked-to-masked depth gap stays on the standoff scale.
    wall_h = (sensor_height - ground_z) + rng.uniform(0.05, 0.8)
    thick = 1.0
    z_center = ground_z + wall_h / 2
    span_y = dist[2] + dist[3] + 4.0
    span_x = dist[0] + dist[1] + 4.0
    prims: list = [
        Box((dist[0] + thick / 2, (dist[2] - dist[3]) / 2, z_center),
            (thick, span_y, wall_h)),
        Box((-dist[1] - thick / 2, (dist[2] - dist[3]) / 2, z_center),
            (thick, span_y, wall_h)),
        Box(((dist[0] - dist[1]) / 2, dist[2] + thick / 2, z_center),
            (span_x, thick, wall_h)),
        Box(((dist[0] - dist[1]) / 2, -dist[3] - thick / 2, z_center),
            (span_x, thick, wall_h)),
    ]

    normals = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    for _ in range(n_objects):
        side = int(rng.integers(0, 4))
        nx, ny = normals[side]
        wall_dist = dist[side]
        gap = rng.uniform(*standoff)
        lateral = rng.uniform(-0.45, 0.45) * wall_dist
        height = rng.uniform(1.5, 3.0)
        if rng.random() < 0.5:
            depth_size = rng.uniform(0.6, 1.2)
            width_size = rng.uniform(1.5, 4.0)
            along = wall_dist - gap - depth_size / 2
            center = (nx * along + (0 if nx else lateral),
                      ny * along + (0 if ny else lateral),
                      ground_z + height / 2)
            size = ((depth_size, width_size, height) if nx
                    else (width_size, depth_size, height))
            prims.append(Box(center, size))
        else:
            radius = rng.uniform(0.3, 0.9)
            along = wall_dist - gap - radius
            center = (nx * along + (0 if nx else lateral),
                      ny * along + (0 if ny else lateral),
                      ground_z + height / 2)
            prims.append(Cylinder(center, radius, height))

    return SceneSpec(seed=seed, ground_z=ground_z,
                     sensor_height=sensor_height, max_range=max_range,
                     primitives=prims)


# ------------------------------------------------------------ injectors

def _edge_pixels(depth: np.ndarray, mask: np.ndarray,
                 threshold: float) -> np.ndarray:
    """Pixels adjacent to a masked-to-masked depth jump above threshold.

    Checks azimuth neighbors (wrapping) and elevation neighbors; both
    members of a jumping pair are marked.
    """
    edges = np.zeros_like(mask)
    right = np.roll(depth, -1, axis=1)
    right_mask = np.roll(mask, -1, axis=1)
    jump = mask & right_mask & (np.abs(right - depth) > threshold)
    edges |= jump
    edges |= np.roll(jump, 1, axis=1)

    down_jump = (mask[:-1] & mask[1:]
                 & (np.abs(depth[1:] - depth[:-1]) > threshold))
    edges[:-1] |= down_jump
    edges[1:] |= down_jump
    return edges


def _dilate_wrap(grid: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev dilation that wraps in azimuth and clips in elevation."""
    out = np.zeros_like(grid)
    h = grid.shape[0]
    for dr in range(-radius, radius + 1):
        shifted = np.zeros_like(grid)
        if dr >= 0:
            shifted[dr:] = grid[: h - dr]
        else:
            shifted[:dr] = grid[-dr:]
        for dc in range(-radius, radius + 1):
            out |= np.roll(shifted, dc, axis=1)
    return out


def _masked_blur(depth: np.ndarray, mask: np.ndarray,
                 sigma: float) -> np.ndarray:
    """Gaussian blur excluding no-return pixels (kernel renormalized)."""
    if sigma <= 0:
        return depth.copy()
    num = gaussian_filter(depth * mask, sigma, mode=("nearest", "wrap"))
    den = gaussian_filter(mask.astype(np.float64), sigma,
                          mode=("nearest", "wrap"))
    out = np.where(mask & (den > 0), num / np.where(den > 0, den, 1.0), depth)
    return out


def inject_depth_bleed(image: RangeImage, spec: CorruptionSpec
                       ) -> tuple[RangeImage, CorruptionReport]:
    """Interpolate fake returns across azimuth depth edges.

    Each azimuth-adjacent masked pair with a gap above the threshold is,
    with the configured probability, extended by up to ``width`` pixels on
    its far side whose depths interpolate strictly between the two edge
    depths. Edges are detected on the input image, so replacements never
    cascade.
    """
    check_range_image(image)
    bleed = spec.bleed
    out = image.copy()
    report = _empty_report(image)
    if bleed.probability == 0.0 or bleed.width < 1:
        return out, report

    rng = np.random.default_rng([spec.rng_seed, 0])
    depth, mask = image.depth, image.mask
    w = image.config.width
    right = np.roll(depth, -1, axis=1)
    right_mask = np.roll(mask, -1, axis=1)
    gap = right - depth
    candidates = mask & right_mask & (np.abs(gap) > bleed.edge_threshold)

    for r, c in zip(*np.nonzero(candidates)):
        if rng.random() >= bleed.probability:
            continue
        near = depth[r, c] if gap[r, c] > 0 else right[r, c]
        far = right[r, c] if gap[r, c] > 0 else depth[r, c]
        step = 1 if gap[r, c] > 0 else -1
        start = (c + 1) % w if gap[r, c] > 0 else c
        for j in range(1, bleed.width + 1):
            col = (start + (j - 1) * step) % w
            if not mask[r, col]:
                break
            out.depth[r, col] = near + (far - near) * j / (bleed.width + 1)
            report.labels[r, col] = LABEL_VARIANCE
    return out, report


def inject_wavy(image: RangeImage, spec: CorruptionSpec
                ) -> tuple[RangeImage, CorruptionReport]:
    """Add a separable sinusoid to masked depths away from depth edges."""
    check_range_image(image)
    wavy = spec.wavy
    out = image.copy()
    report = _empty_report(image)
    if wavy.amplitude == 0.0:
        return out, report

    h, w = image.depth.shape
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    delta = (wavy.amplitude
             * np.sin(2 * np.pi * cols / wavy.azimuth_period)
             * np.sin(2 * np.pi * rows / wavy.elevation_period))
    edges = _edge_pixels(image.depth, image.mask, spec.bleed.edge_threshold)
    touched = image.mask & ~edges
    out.depth[touched] += delta[touched]
    report.labels[touched] = LABEL_VARIANCE
    return out, report


def inject_round_corners(image: RangeImage, spec: CorruptionSpec
                         ) -> tuple[RangeImage, CorruptionReport]:
    """Blur depths in a band around depth discontinuities.

    The Gaussian kernel excludes no-return pixels and is renormalized, so
    the mask and pixels outside the band are untouched.
    """
    check_range_image(image)
    rc = spec.round_corners
    out = image.copy()
    report = _empty_report(image)
    if rc.kernel_sigma <= 0:
        return out, report

    edges = _edge_pixels(image.depth, image.mask, spec.bleed.edge_threshold)
    band = _dilate_wrap(edges, rc.edge_band) & image.mask
    if not np.any(band):
        return out, report
    blurred = _masked_blur(image.depth, image.mask, rc.kernel_sigma)
    out.depth[band] = blurred[band]
    report.labels[band] = LABEL_VARIANCE
    return out, report


def inject_bias_chunks(image: RangeImage, spec: CorruptionSpec,
                       exclude: np.ndarray | None = None
                       ) -> tuple[RangeImage, CorruptionReport]:
    """Shift random rectangular masked regions by one large depth offset.

    ``exclude`` marks pixels a chunk may not cover (used by
    :func:`make_pair` to keep chunks off interpolated or blurred pixels,
    whose residuals would otherwise blur the bias/variance separation).
    Shifts flip to positive when a negative draw would push depths through
    zero. Fewer chunks than requested are placed when eligible area runs
    out; the report carries both counts.
    """
    check_range_image(image)
    bias = spec.bias
    out = image.copy()
    report = _empty_report(image)
    report.chunks_requested = bias.count
    if bias.count == 0:
        return out, report

    rng = np.random.default_rng([spec.rng_seed, 3])
    h, w = image.depth.shape
    eligible = image.mask.copy()
    if exclude is not None:
        eligible &= ~exclude
    lo, hi = bias.depth_shift_range

    placed = 0
    for _ in range(bias.count):
        success = False
        for _attempt in range(200):
            rh = int(rng.integers(8, 25))
            rw = max(int(np.ceil(bias.min_area / rh)), 4)
            rw = int(rw * rng.uniform(1.0, 1.6))
            if rh > h or rw > w:
                continue
            r0 = int(rng.integers(0, h - rh + 1))
            c0 = int(rng.integers(0, w - rw + 1))
            region = (slice(r0, r0 + rh), slice(c0, c0 + rw))
            if not np.all(eligible[region]):
                continue
            magnitude = rng.uniform(lo, hi)
            shift = magnitude if rng.random() < 0.5 else -magnitude
            if np.min(out.depth[region]) + shift <= 2 * 1e-3:
                shift = magnitude
            out.depth[region] += shift
            report.labels[region] = LABEL_BIAS
            eligible[region] = False
            placed += 1
            success = True
            break
        if not success:
            break
    report.chunks_placed = placed
    return out, report


def corrupt_image(image: RangeImage, spec: CorruptionSpec
                  ) -> tuple[RangeImage, CorruptionReport]:
    """Apply all injectors in order bleed, wavy, round, bias.

    Bias chunks avoid interpolated and blurred pixels (whose residuals can
    approach the chunk scale) and their labels take precedence, so the
    merged labels partition the masked pixels into residual regimes.
    """
    x_gen, rep_bleed = inject_depth_bleed(image, spec)
    x_gen, rep_wavy = inject_wavy(x_gen, spec)
    x_gen, rep_round = inject_round_corners(x_gen, spec)
    strong = ((rep_bleed.labels == LABEL_VARIANCE)
              | (rep_round.labels == LABEL_VARIANCE))
    x_gen, rep_bias = inject_bias_chunks(x_gen, spec, exclude=strong)

    labels = np.zeros(image.mask.shape, dtype=np.uint8)
    for rep in (rep_bleed, rep_wavy, rep_round):
        labels[rep.labels == LABEL_VARIANCE] = LABEL_VARIANCE
    labels[rep_bias.labels == LABEL_BIAS] = LABEL_BIAS
    report = CorruptionReport(labels=labels, mask=image.mask.copy(),
                              chunks_requested=rep_bias.chunks_requested,
                              chunks_placed=rep_bias.chunks_placed)
    return x_gen, report


def make_pair(scene: SceneSpec, corrupt: CorruptionSpec,
              config: ProjectionConfig
              ) -> tuple[RangeImage, RangeImage, CorruptionReport]:
    """Clean scene plus its corrupted counterpart and merged labels.

    The effective corruption seed mixes the scene seed with
    ``corrupt.rng_seed`` so one root seed drives distinct per-scene draws.
    """
    x_gt = synth_scene(scene, config)
    mixed = int(np.random.SeedSequence(
        [corrupt.rng_seed & 0xFFFFFFFF, scene.seed & 0xFFFFFFFF]
    ).generate_state(1)[0])
    eff = replace(corrupt, rng_seed=mixed)
    x_gen, report = corrupt_image(x_gt, eff)
    return x_gt, x_gen, report


def smooth_image(image: RangeImage, sigma: float = 1.5) -> RangeImage:
    """Mask-aware Gaussian smoothing of the whole depth grid.

    Stand-in for the soft output of an image-space generator whose
    per-step maps bound spatial gradients.
    """
    check_range_image(image)
    out = image.copy()
    blurred = _masked_blur(image.depth, image.mask, sigma)
    out.depth[image.mask] = blurred[image.mask]
    return out
