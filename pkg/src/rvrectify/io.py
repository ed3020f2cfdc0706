"""File formats: point-cloud .bin, range-image .rvimg, PNG export, reports.

The .rvimg container stores the projection config in its header (uniform
sigma/center or a per-row elevation table) and row-major little-endian
f32 depths with 0 marking no return, so write-then-read reproduces the
range image exactly. Reports are append-only JSON lines, one record per
result, that parse back to the written values.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import PointCloud, ProjectionConfig, RangeImage

RVIMG_MAGIC_BASE = b"RVIMG"
RVIMG_VERSION = b"1"
_ELEV_UNIFORM = 0
_ELEV_TABLE = 1


class FormatError(ValueError):
    """A file does not match its declared on-disk format."""


def read_kitti_bin(path) -> PointCloud:
    """Parse little-endian (x, y, z, intensity) float32 quadruples."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise FormatError(
            f"{path}: length {len(raw)} is not a multiple of 16 bytes")
    data = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 4)
    finite = np.isfinite(data)
    if not finite.all():
        offset = int(np.flatnonzero(~finite.ravel())[0] * 4)
        raise FormatError(f"{path}: non-finite value at byte offset {offset}")
    if data.shape[0] == 0:
        return PointCloud(np.empty((0, 3)), np.empty(0))
    return PointCloud(data[:, :3].copy(), data[:, 3].copy())


def write_kitti_bin(cloud: PointCloud, path) -> None:
    n = len(cloud)
    data = np.zeros((n, 4), dtype="<f4")
    data[:, :3] = cloud.points
    if cloud.intensity is not None:
        data[:, 3] = cloud.intensity
    Path(path).write_bytes(data.tobytes())


def write_rvimg(image: RangeImage, path) -> None:
    config = image.config
    blob = bytearray()
    blob += RVIMG_MAGIC_BASE + RVIMG_VERSION
    blob += struct.pack("<II", config.height, config.width)
    blob += struct.pack("<d", config.sigma_v)
    if config.uniform:
        blob += struct.pack("<B", _ELEV_UNIFORM)
        blob += struct.pack("<dd", config.sigma_u, config.elevation_center)
    else:
        blob += struct.pack("<B", _ELEV_TABLE)
        blob += config.elevation_table.astype("<f8").tobytes()
    depth = np.where(image.mask, image.depth, 0.0).astype("<f4")
    blob += depth.tobytes()
    Path(path).write_bytes(bytes(blob))


def read_rvimg(path) -> RangeImage:
    blob = Path(path).read_bytes()
    if len(blob) < 6 or blob[:5] != RVIMG_MAGIC_BASE:
        raise FormatError(
            f"{path}: bad magic, expected {RVIMG_MAGIC_BASE!r}..., "
            f"got {blob[:5]!r}")
    if blob[5:6] != RVIMG_VERSION:
        raise FormatError(
            f"{path}: unsupported version {blob[5:6]!r}, "
            f"expected {RVIMG_VERSION!r}")
    height, width = struct.unpack_from("<II", blob, 6)
    (sigma_v,) = struct.unpack_from("<d", blob, 14)
    kind = blob[22]
    off = 23
    if kind == _ELEV_UNIFORM:
        sigma_u, center = struct.unpack_from("<dd", blob, off)
        off += 16
        config = ProjectionConfig(height, width, sigma_u=sigma_u,
                                  elevation_center=center)
    elif kind == _ELEV_TABLE:
        end = off + 8 * height
        if end > len(blob):
            raise FormatError(f"{path}: truncated elevation table")
        table = np.frombuffer(blob[off:end], dtype="<f8")
        off = end
        config = ProjectionConfig(height, width, elevation_table=table)
    else:
        raise FormatError(f"{path}: unknown elevation-map kind {kind}")
    if abs(sigma_v - config.sigma_v) > 1e-9 * config.sigma_v:
        raise FormatError(
            f"{path}: azimuth resolution {sigma_v} does not match width")
    expected = off + 4 * height * width
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload is {len(blob)} bytes, expected {expected}")
    depth = np.frombuffer(blob[off:], dtype="<f4").astype(np.float64)
    depth = depth.reshape(height, width)
    if np.any(depth < 0):
        raise FormatError(f"{path}: negative depth values")
    return RangeImage(depth, depth > 0, config)


def export_png16(image: RangeImage, path, scale: float = 256.0) -> None:
    """16-bit grayscale depth rendering: round(depth * scale), clamped."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    values = np.where(image.mask,
                      np.rint(np.minimum(image.depth * scale, 65535.0)), 0.0)
    arr = values.astype("<u2")
    h, w = arr.shape
    Image.frombytes("I;16", (w, h), arr.tobytes()).save(str(path))


def save_labels(labels: np.ndarray, mask: np.ndarray, path) -> None:
    """Persist a corruption label grid; unmasked pixels become 255."""
    out = np.where(mask, labels, np.uint8(255)).astype(np.uint8)
    np.save(path, out)


def load_labels(path) -> np.ndarray:
    return np.load(path)


def append_record(path, metric: str, value, params: dict | None = None) -> None:
    """Append one JSON-line record: metric name, value, parameters."""
    record = {"metric": metric, "value": value, "params": params or {}}
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_records(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
