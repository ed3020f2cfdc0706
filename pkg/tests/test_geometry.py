"""Projection geometry: hand-computed anchors, round trips, invariances."""

import numpy as np
import pytest

from rvrectify import (EPS_DEPTH, PointCloud, ProjectionConfig, RangeImage,
                       apply_offsets, radial_project, rrvp, rvp, rvp_angles)


def uniform_config(h=64, w=1024, up_deg=2.0, down_deg=-24.8):
    return ProjectionConfig.from_fov(h, w, np.deg2rad(up_deg),
                                     np.deg2rad(down_deg))


def image_from_grid(depth, config):
    depth = np.asarray(depth, dtype=np.float64)
    return RangeImage(depth, depth > 0, config)


# ---------------------------------------------------------- rvp_angles

class TestAngles:
    def test_on_x_axis(self):
        cfg = uniform_config()
        elevation, azimuth, depth = rvp_angles((10.0, 0.0, 0.0), cfg)
        assert elevation == 0.0
        assert azimuth == 0.0
        assert depth == 10.0

    def test_pole_is_domain_error(self):
        cfg = uniform_config()
        with pytest.raises(ValueError):
            rvp_angles((0.0, 0.0, 5.0), cfg)

    def test_zero_point_is_domain_error(self):
        with pytest.raises(ValueError):
            rvp_angles((0.0, 0.0, 0.0), uniform_config())

    def test_scalar_anchor(self):
        # (3, -4, 0): depth 5, elevation 0, azimuth atan2(4, 3)
        elevation, azimuth, depth = rvp_angles((3.0, -4.0, 0.0),
                                               uniform_config())
        assert elevation == 0.0
        assert azimuth == pytest.approx(np.arctan2(4.0, 3.0), abs=1e-15)
        assert depth == pytest.approx(5.0, abs=1e-12)

    def test_azimuth_in_half_open_range(self):
        rng = np.random.default_rng(11)
        cfg = uniform_config()
        for _ in range(200):
            p = rng.normal(size=3) * 10
            if np.hypot(p[0], p[1]) < 1e-6:
                continue
            _, azimuth, _ = rvp_angles(p, cfg)
            assert -np.pi < azimuth <= np.pi
        # exactly behind the sensor: boundary maps to +pi
        _, azimuth, _ = rvp_angles((-4.0, 0.0, 0.0), cfg)
        assert azimuth == np.pi


# ----------------------------------------------------------------- rvp

class TestRvp:
    def test_single_point_binning(self):
        # H=64 uniform elevations +-0.4 rad, W=1024: point on +x axis lands
        # at col 512 and the row whose elevation interval contains 0.
        cfg = ProjectionConfig.from_fov(64, 1024, 0.4, -0.4)
        image, index_map = rvp(PointCloud(np.array([[10.0, 0.0, 0.0]])), cfg)
        assert image.mask.sum() == 1
        row, col = index_map.pixel_of_point[0]
        assert col == 512
        # theta = 0 falls in row floor((0.4 - 0) * 80) = 32
        assert row == 32
        assert image.depth[row, col] == pytest.approx(10.0, rel=1e-12)

    def test_min_depth_collision(self):
        cfg = uniform_config()
        near = np.array([5.0, 0.0, -0.5])
        far = near * 4.0  # same ray, depth 20
        image, index_map = rvp(PointCloud(np.stack([far, near])), cfg)
        assert image.mask.sum() == 1
        assert image.depth[image.mask][0] == pytest.approx(
            np.linalg.norm(near), rel=1e-12)
        assert index_map.dropped_collision == 1
        assert tuple(index_map.pixel_of_point[0]) == (-1, -1)

    def test_collision_rule_order_independent(self):
        cfg = uniform_config(16, 128)
        rng = np.random.default_rng(5)
        points = rng.uniform(-20, 20, size=(500, 3))
        points[:, 2] = rng.uniform(-5, 1, size=500)
        image, _ = rvp(PointCloud(points), cfg)
        for seed in range(3):
            perm = np.random.default_rng(seed).permutation(len(points))
            shuffled, _ = rvp(PointCloud(points[perm]), cfg)
            np.testing.assert_array_equal(image.mask, shuffled.mask)
            np.testing.assert_array_equal(image.depth, shuffled.depth)

    def test_out_of_band_points_dropped(self):
        cfg = ProjectionConfig.from_fov(8, 64, 0.1, -0.1)
        points = np.array([[5.0, 0.0, 3.0],    # elevation ~0.54, above band
                           [5.0, 0.0, 0.0]])   # in band
        image, index_map = rvp(PointCloud(points), cfg)
        assert index_map.dropped_fov == 1
        assert image.mask.sum() == 1

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            rvp(PointCloud(np.empty((0, 3))), uniform_config())


# ---------------------------------------------------------------- rrvp

class TestRrvp:
    def test_axis_aligned_pixel(self):
        # Odd width puts a column center exactly at azimuth 0:
        # elevation 0, azimuth 0, depth 10 -> (10, 0, 0).
        cfg = ProjectionConfig.from_table(7, [0.0])
        depth = np.zeros((1, 7))
        depth[0, 3] = 10.0
        cloud, _ = rrvp(image_from_grid(depth, cfg))
        np.testing.assert_allclose(cloud.points[0], [10.0, 0.0, 0.0],
                                   atol=1e-14)

    def test_quarter_turn_pixel(self):
        # W=2 puts column 1's center at azimuth +pi/2:
        # elevation 0, azimuth pi/2, depth 2 -> (0, -2, 0).
        cfg = ProjectionConfig.from_table(2, [0.0])
        depth = np.array([[0.0, 2.0]])
        cloud, _ = rrvp(image_from_grid(depth, cfg))
        np.testing.assert_allclose(cloud.points[0], [0.0, -2.0, 0.0],
                                   atol=1e-14)

    def test_row_major_order_and_bijection(self):
        cfg = uniform_config(8, 16)
        rng = np.random.default_rng(3)
        depth = np.where(rng.random((8, 16)) < 0.6,
                         rng.uniform(2, 50, (8, 16)), 0.0)
        image = image_from_grid(depth, cfg)
        cloud, index_map = rrvp(image)
        rows, cols = np.nonzero(image.mask)
        np.testing.assert_array_equal(index_map.pixel_of_point,
                                      np.stack([rows, cols], axis=1))
        for i, (r, c) in enumerate(zip(rows, cols)):
            assert index_map.point_of_pixel[r, c] == i


class TestRoundTrips:
    def test_rrvp_then_rvp_is_exact(self):
        cfg = uniform_config(32, 256)
        rng = np.random.default_rng(9)
        depth = np.where(rng.random((32, 256)) < 0.7,
                         rng.uniform(1.0, 75.0, (32, 256)), 0.0)
        image = image_from_grid(depth, cfg)
        cloud, _ = rrvp(image)
        back, index_map = rvp(cloud, cfg)
        np.testing.assert_array_equal(back.mask, image.mask)
        masked = image.mask
        np.testing.assert_allclose(back.depth[masked], image.depth[masked],
                                   rtol=1e-9)
        # full bijection, no drops
        assert index_map.dropped_fov == 0
        assert index_map.dropped_collision == 0
        n = int(image.mask.sum())
        pix = index_map.pixel_of_point
        assert np.all(pix >= 0)
        recovered = index_map.point_of_pixel[pix[:, 0], pix[:, 1]]
        np.testing.assert_array_equal(recovered, np.arange(n))

    def test_table_config_round_trip(self):
        # non-uniform laser table, decreasing elevations
        table = np.deg2rad(np.array([8.0, 4.0, 1.0, -1.5, -5.0, -11.0]))
        cfg = ProjectionConfig.from_table(48, table)
        rng = np.random.default_rng(2)
        depth = np.where(rng.random((6, 48)) < 0.8,
                         rng.uniform(1, 40, (6, 48)), 0.0)
        image = image_from_grid(depth, cfg)
        back, _ = rvp(rrvp(image)[0], cfg)
        np.testing.assert_array_equal(back.mask, image.mask)
        np.testing.assert_allclose(back.depth[image.mask],
                                   image.depth[image.mask], rtol=1e-9)

    def test_ascending_table_matches_descending(self):
        table = np.deg2rad(np.linspace(-20, 5, 16))
        cfg = ProjectionConfig.from_table(32, table)
        rng = np.random.default_rng(4)
        depth = np.where(rng.random((16, 32)) < 0.5,
                         rng.uniform(1, 40, (16, 32)), 0.0)
        image = image_from_grid(depth, cfg)
        back, _ = rvp(rrvp(image)[0], cfg)
        np.testing.assert_array_equal(back.mask, image.mask)


# ------------------------------------------------------ radial offsets

class TestRadialProject:
    def test_already_radial(self):
        cloud = PointCloud(np.array([[10.0, 0.0, 0.0]]))
        field = radial_project(cloud, np.array([[1.0, 0.0, 0.0]]))
        assert field.signed[0] == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(field.radial[0], [1.0, 0.0, 0.0],
                                   atol=1e-15)

    def test_tangential_annihilated(self):
        cloud = PointCloud(np.array([[10.0, 0.0, 0.0]]))
        field = radial_project(cloud, np.array([[0.0, 3.0, 0.0]]))
        assert field.signed[0] == 0.0
        np.testing.assert_array_equal(field.radial[0], [0.0, 0.0, 0.0])

    def test_scalar_anchor(self):
        # p=(3,4,0), o=(1,1,0): s=(3+4)/5=1.4, radial=(0.84, 1.12, 0)
        cloud = PointCloud(np.array([[3.0, 4.0, 0.0]]))
        field = radial_project(cloud, np.array([[1.0, 1.0, 0.0]]))
        assert field.signed[0] == pytest.approx(1.4, abs=1e-15)
        np.testing.assert_allclose(field.radial[0], [0.84, 1.12, 0.0],
                                   rtol=1e-14)

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        points = rng.uniform(-30, 30, size=(300, 3))
        points[np.linalg.norm(points, axis=1) < 1] += 5.0
        cloud = PointCloud(points)
        field = radial_project(cloud, rng.normal(size=(300, 3)))
        again = radial_project(cloud, field.radial)
        np.testing.assert_allclose(again.signed, field.signed, rtol=1e-12,
                                   atol=1e-12)
        np.testing.assert_allclose(again.radial, field.radial, rtol=1e-12,
                                   atol=1e-12)

    def test_radial_norm_equals_abs_signed(self):
        rng = np.random.default_rng(12)
        points = rng.uniform(1, 40, size=(200, 3))
        cloud = PointCloud(points)
        field = radial_project(cloud, rng.normal(size=(200, 3)))
        np.testing.assert_allclose(np.linalg.norm(field.radial, axis=1),
                                   np.abs(field.signed), rtol=1e-12)

    def test_zero_point_rejected(self):
        with pytest.raises(ValueError):
            radial_project(PointCloud(np.zeros((1, 3))),
                           np.ones((1, 3)))


class TestApplyOffsets:
    def test_zero_offsets_identity(self):
        rng = np.random.default_rng(1)
        points = rng.uniform(1, 30, size=(50, 3))
        cloud = PointCloud(points, intensity=rng.random(50))
        field = radial_project(cloud, np.zeros((50, 3)))
        moved, clamped = apply_offsets(cloud, field)
        np.testing.assert_array_equal(moved.points, points)
        np.testing.assert_array_equal(moved.intensity, cloud.intensity)
        assert not clamped.any()

    def test_colinear_subtraction(self):
        cloud = PointCloud(np.array([[10.0, 0.0, 0.0]]))
        field = radial_project(cloud, np.array([[-2.0, 0.0, 0.0]]))
        moved, clamped = apply_offsets(cloud, field)
        np.testing.assert_allclose(moved.points[0], [8.0, 0.0, 0.0],
                                   atol=1e-12)
        assert not clamped.any()

    def test_through_origin_clamps_and_flags(self):
        cloud = PointCloud(np.array([[4.0, 0.0, 0.0]]))
        field = radial_project(cloud, np.array([[-9.0, 0.0, 0.0]]))
        moved, clamped = apply_offsets(cloud, field)
        assert clamped[0]
        assert np.linalg.norm(moved.points[0]) == pytest.approx(EPS_DEPTH)

    def test_radial_invariance_of_angles(self):
        # moving along the ray never changes the projection angles
        cfg = uniform_config()
        rng = np.random.default_rng(21)
        n = 500
        theta = rng.uniform(np.deg2rad(-24), np.deg2rad(1.5), n)
        phi = rng.uniform(-np.pi, np.pi, n)
        d = rng.uniform(2.0, 60.0, n)
        points = np.stack([d * np.cos(theta) * np.cos(phi),
                           -d * np.cos(theta) * np.sin(phi),
                           d * np.sin(theta)], axis=1)
        cloud = PointCloud(points)
        field = radial_project(cloud, rng.normal(scale=0.5, size=(n, 3)))
        keep = d + field.signed > 0.5
        moved, _ = apply_offsets(cloud, field)
        for i in np.nonzero(keep)[0][:100]:
            e0, a0, d0 = rvp_angles(points[i], cfg)
            e1, a1, d1 = rvp_angles(moved.points[i], cfg)
            assert abs(e1 - e0) < 1e-12
            assert abs(a1 - a0) < 1e-12
            assert d1 == pytest.approx(d0 + field.signed[i], rel=1e-9)
