"""On-disk formats: bit-exact round trips and deliberate corruption."""

import struct

import numpy as np
import pytest

from rvrectify import ProjectionConfig, RangeImage, random_scene, synth_scene
from rvrectify.io import (FormatError, append_record, export_png16,
                          read_kitti_bin, read_records, read_rvimg,
                          save_labels, load_labels, write_kitti_bin,
                          write_rvimg)


def scene_image(seed=1, h=32, w=256):
    cfg = ProjectionConfig.from_fov(h, w, np.deg2rad(2.0), np.deg2rad(-24.8))
    return synth_scene(random_scene(seed), cfg)


class TestKittiBin:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        cloud = read_kitti_bin(path)
        assert len(cloud) == 0

    def test_single_point_fixture(self, tmp_path):
        path = tmp_path / "one.bin"
        path.write_bytes(struct.pack("<4f", 1.0, 2.0, 3.0, 0.5))
        cloud = read_kitti_bin(path)
        np.testing.assert_allclose(cloud.points, [[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(cloud.intensity, [0.5])

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "trunc.bin"
        path.write_bytes(b"\x00" * 17)
        with pytest.raises(FormatError):
            read_kitti_bin(path)

    def test_non_finite_reports_byte_offset(self, tmp_path):
        path = tmp_path / "nan.bin"
        data = struct.pack("<8f", 1, 2, 3, 0.5, 4, float("nan"), 6, 0.25)
        path.write_bytes(data)
        with pytest.raises(FormatError, match="byte offset 20"):
            read_kitti_bin(path)

    def test_write_read_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        from rvrectify import PointCloud
        cloud = PointCloud(
            rng.uniform(-40, 40, (100, 3)).astype("<f4").astype(np.float64),
            rng.random(100).astype("<f4").astype(np.float64))
        path = tmp_path / "cloud.bin"
        write_kitti_bin(cloud, path)
        back = read_kitti_bin(path)
        np.testing.assert_array_equal(back.points, cloud.points)
        np.testing.assert_array_equal(back.intensity, cloud.intensity)


class TestRvimg:
    def test_round_trip_bit_identical(self, tmp_path):
        image = scene_image()
        path = tmp_path / "scene.rvimg"
        write_rvimg(image, path)
        first = path.read_bytes()
        back = read_rvimg(path)
        write_rvimg(back, tmp_path / "again.rvimg")
        assert (tmp_path / "again.rvimg").read_bytes() == first
        np.testing.assert_array_equal(back.mask, image.mask)
        # depths agree to f32 storage precision
        np.testing.assert_array_equal(
            back.depth.astype("<f4"), image.depth.astype("<f4"))

    def test_table_config_round_trip(self, tmp_path):
        table = np.deg2rad(np.array([5.0, 2.0, -1.0, -4.0]))
        cfg = ProjectionConfig.from_table(16, table)
        depth = np.where(np.random.default_rng(1).random((4, 16)) < 0.5,
                         7.25, 0.0)
        image = RangeImage(depth, depth > 0, cfg)
        path = tmp_path / "table.rvimg"
        write_rvimg(image, path)
        back = read_rvimg(path)
        assert not back.config.uniform
        np.testing.assert_allclose(back.config.elevation_table, table)
        np.testing.assert_array_equal(back.depth, image.depth)

    def test_bad_magic_names_expected_and_actual(self, tmp_path):
        path = tmp_path / "bad.rvimg"
        image = scene_image()
        write_rvimg(image, path)
        blob = bytearray(path.read_bytes())
        blob[:5] = b"XXXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="RVIMG"):
            read_rvimg(path)

    def test_version_mismatch_is_explicit(self, tmp_path):
        path = tmp_path / "v2.rvimg"
        write_rvimg(scene_image(), path)
        blob = bytearray(path.read_bytes())
        blob[5:6] = b"2"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="unsupported version"):
            read_rvimg(path)

    def test_payload_length_mismatch(self, tmp_path):
        path = tmp_path / "short.rvimg"
        write_rvimg(scene_image(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(FormatError, match="expected"):
            read_rvimg(path)


class TestPng16:
    def test_pixel_values(self, tmp_path):
        from PIL import Image
        cfg = ProjectionConfig.from_fov(2, 4, 0.1, -0.1)
        depth = np.array([[10.0, 300.0, 0.0, 2.5],
                          [1.0, 0.5, 100.0, 0.0]])
        image = RangeImage(depth, depth > 0, cfg)
        path = tmp_path / "depth.png"
        export_png16(image, path, scale=256.0)
        arr = np.asarray(Image.open(path))
        assert arr.dtype == np.uint16
        assert arr[0, 0] == 2560          # 10 m * 256
        assert arr[0, 1] == 65535         # clamped
        assert arr[0, 2] == 0             # no return
        assert arr[1, 1] == 128

    def test_scale_validation(self, tmp_path):
        with pytest.raises(ValueError):
            export_png16(scene_image(), tmp_path / "x.png", scale=0.0)


class TestLabels:
    def test_round_trip_with_sentinel(self, tmp_path):
        labels = np.array([[0, 1], [2, 0]], dtype=np.uint8)
        mask = np.array([[True, True], [True, False]])
        path = tmp_path / "labels.npy"
        save_labels(labels, mask, path)
        back = load_labels(path)
        np.testing.assert_array_equal(back,
                                      [[0, 1], [2, 255]])


class TestRecords:
    def test_append_and_parse_back(self, tmp_path):
        path = tmp_path / "report.jsonl"
        append_record(path, "jsd", 0.12345678901234567, {"extent": 40.0})
        append_record(path, "mmd", 2e-4, {"n": 3})
        records = read_records(path)
        assert len(records) == 2
        assert records[0]["metric"] == "jsd"
        assert records[0]["value"] == 0.12345678901234567  # exact round trip
        assert records[1]["params"]["n"] == 3

    def test_append_only(self, tmp_path):
        path = tmp_path / "report.jsonl"
        append_record(path, "a", 1, {})
        first = path.read_text()
        append_record(path, "b", 2, {})
        assert path.read_text().startswith(first)
