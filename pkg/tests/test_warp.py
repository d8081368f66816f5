"""Bilinear sampling and inverse-warp tests.

Interpolation oracles are evaluated by hand on tiny images where the
weights can be written out: on the 2x2 image [[0, 1], [2, 3]] the sample at
(u, v) is u + 2v (bilinear in both axes simultaneously). Warp oracles use
constant-depth pure-translation setups where the flow is a uniform shift
fx * tx / z computable on paper.
"""

from __future__ import annotations

import numpy as np
import pytest

from egowarp import (
    CameraIntrinsics,
    DepthMap,
    ImageBuffer,
    Pixel,
    SE3Transform,
    ValidityMask,
    bilinear_sample,
    bilinear_sample_grad,
    inverse_warp,
    pixel_grid,
    warp_jacobians,
)

RAMP22 = ImageBuffer.grayscale(np.array([[0.0, 1.0], [2.0, 3.0]]) / 3.0)


def _gray(img: ImageBuffer) -> np.ndarray:
    return img.data[:, :, 0]


class TestBufferValidation:
    def test_image_needs_3_axes(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4)))

    def test_image_rejects_nan(self):
        data = np.zeros((2, 2, 1))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ImageBuffer(data)

    def test_depth_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            DepthMap(np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_validity_rejects_fractional_entries(self):
        with pytest.raises(ValueError):
            ValidityMask(np.full((2, 2), 0.5))

    def test_validity_coerces_01(self):
        m = ValidityMask(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert m.data.dtype == np.bool_ and m.count == 3

    def test_validity_count(self):
        m = ValidityMask(np.array([[True, False], [True, True]]))
        assert m.count == 3


class TestPixelGrid:
    def test_layout(self):
        g = pixel_grid(2, 3)
        assert g.shape == (2, 3, 2)
        np.testing.assert_array_equal(g[1, 2], [2.0, 1.0])  # (u, v)
        np.testing.assert_array_equal(g[0, 0], [0.0, 0.0])


class TestBilinearSample:
    def test_exact_at_pixel_centers(self):
        for (u, v), want in [((0, 0), 0.0), ((1, 0), 1.0), ((0, 1), 2.0), ((1, 1), 3.0)]:
            val, ok = bilinear_sample(RAMP22, Pixel(float(u), float(v)))
            assert ok
            assert val[0] * 3.0 == pytest.approx(want, abs=1e-15)

    def test_center_is_mean(self):
        val, ok = bilinear_sample(RAMP22, Pixel(0.5, 0.5))
        assert ok
        assert val[0] * 3.0 == pytest.approx(1.5, abs=1e-15)

    def test_separable_hand_formula(self):
        # On [[0,1],[2,3]]/3 the interpolant is (u + 2 v) / 3.
        rng = np.random.default_rng(0)
        for _ in range(100):
            u, v = rng.uniform(0, 1, size=2)
            val, ok = bilinear_sample(RAMP22, Pixel(u, v))
            assert ok
            assert val[0] == pytest.approx((u + 2 * v) / 3.0, abs=1e-14)

    def test_out_of_bounds_zero_and_invalid(self):
        for p in [Pixel(-0.5, 0.0), Pixel(0.0, -0.01), Pixel(1.5, 0.0), Pixel(0.0, 1.0001)]:
            val, ok = bilinear_sample(RAMP22, p)
            assert not ok
            np.testing.assert_array_equal(val, [0.0])

    def test_border_is_valid(self):
        val, ok = bilinear_sample(RAMP22, Pixel(1.0, 1.0))
        assert ok and val[0] == pytest.approx(1.0)

    def test_epsilon_over_border_still_valid(self):
        # Round-off tolerance: 1e-10 beyond the edge clamps to the edge value.
        val, ok = bilinear_sample(RAMP22, Pixel(1.0 + 1e-10, 0.5))
        assert ok
        assert val[0] * 3.0 == pytest.approx(2.0, abs=1e-9)

    def test_multichannel(self):
        plane = _gray(RAMP22)
        img = ImageBuffer(np.stack([plane, 1.0 - plane, plane * 0.5], axis=-1))
        val, ok = bilinear_sample(img, Pixel(0.5, 0.5))
        assert ok
        np.testing.assert_allclose(val, [0.5, 0.5, 0.25], atol=1e-15)


class TestBilinearSampleGrad:
    def test_hand_slopes(self):
        g = bilinear_sample_grad(RAMP22, Pixel(0.3, 0.6))
        # d/du (u + 2v)/3 = 1/3, d/dv = 2/3
        np.testing.assert_allclose(g[:, 0], [1.0 / 3.0, 2.0 / 3.0], atol=1e-14)

    def test_matches_fd_off_grid(self):
        rng = np.random.default_rng(1)
        img = ImageBuffer.grayscale(rng.uniform(0, 1, size=(8, 8)))
        h = 1e-7
        for _ in range(50):
            u = rng.uniform(0.01, 6.99)
            v = rng.uniform(0.01, 6.99)
            if min(u % 1, 1 - u % 1) < 1e-3 or min(v % 1, 1 - v % 1) < 1e-3:
                continue
            g = bilinear_sample_grad(img, Pixel(u, v))
            fu = (bilinear_sample(img, Pixel(u + h, v))[0]
                  - bilinear_sample(img, Pixel(u - h, v))[0]) / (2 * h)
            fv = (bilinear_sample(img, Pixel(u, v + h))[0]
                  - bilinear_sample(img, Pixel(u, v - h))[0]) / (2 * h)
            np.testing.assert_allclose(g[0], fu, atol=1e-6)
            np.testing.assert_allclose(g[1], fv, atol=1e-6)

    def test_grid_line_uses_right_cell(self):
        # At u = 1.0 on a 1x3 ramp [0, 1, 5], the derivative is the right
        # cell's slope 5 - 1 = 4 (floor binning).
        img = ImageBuffer.grayscale(np.array([[0.0, 1.0, 5.0]]) / 5.0)
        g = bilinear_sample_grad(img, Pixel(1.0, 0.0))
        assert g[0, 0] * 5.0 == pytest.approx(4.0, abs=1e-13)


class TestInverseWarpIdentity:
    def test_reproduces_source_exactly(self):
        rng = np.random.default_rng(2)
        k = CameraIntrinsics(fx=40.0, fy=40.0, cx=15.5, cy=11.5)
        src = ImageBuffer.grayscale(rng.uniform(0, 1, size=(24, 32)))
        depth = DepthMap(rng.uniform(0.5, 20.0, size=(24, 32)))
        recon, valid = inverse_warp(src, depth, SE3Transform.identity(), k)
        assert valid.data.all()
        np.testing.assert_allclose(recon.data, src.data, atol=1e-12)

    def test_any_positive_depth_irrelevant(self):
        k = CameraIntrinsics(fx=10.0, fy=10.0, cx=2.0, cy=2.0)
        src = ImageBuffer.grayscale(np.linspace(0, 1, 25).reshape(5, 5))
        for scale in (1e-3, 1.0, 1e4):
            recon, valid = inverse_warp(
                src, DepthMap(np.full((5, 5), scale)), SE3Transform.identity(), k
            )
            assert valid.data.all()
            np.testing.assert_allclose(recon.data, src.data, atol=1e-12)


class TestInverseWarpShift:
    def test_integer_shift_translation(self):
        # Fronto setup: depth z = 5, tx = 0.5, fx = 20 -> shift of exactly
        # 2 px. recon(u) = src(u + 2) where u + 2 <= w - 1.
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        rng = np.random.default_rng(3)
        src = ImageBuffer.grayscale(rng.uniform(0, 1, size=(8, 8)))
        depth = DepthMap(np.full((8, 8), 5.0))
        pose = SE3Transform.from_translation(np.array([0.5, 0.0, 0.0]))
        recon, valid = inverse_warp(src, depth, pose, k)
        np.testing.assert_allclose(
            _gray(recon)[:, :6], _gray(src)[:, 2:], atol=1e-12
        )
        assert valid.data[:, :6].all()
        assert not valid.data[:, 6:].any()
        np.testing.assert_array_equal(_gray(recon)[:, 6:], 0.0)

    def test_fractional_shift_on_linear_ramp(self):
        # A ramp image is reproduced exactly under subpixel shifts because
        # bilinear interpolation is exact for linear functions.
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        u = np.tile(np.arange(8.0), (8, 1))
        src = ImageBuffer.grayscale(u / 10.0)
        depth = DepthMap(np.full((8, 8), 5.0))
        pose = SE3Transform.from_translation(np.array([0.1, 0.0, 0.0]))  # 0.4 px
        recon, valid = inverse_warp(src, depth, pose, k)
        expected = (u + 0.4) / 10.0
        got = _gray(recon)
        np.testing.assert_allclose(got[valid.data], expected[valid.data], atol=1e-12)

    def test_behind_camera_masked(self):
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        src = ImageBuffer.grayscale(np.ones((8, 8)) * 0.5)
        depth = DepthMap(np.full((8, 8), 5.0))
        pose = SE3Transform.from_translation(np.array([0.0, 0.0, -20.0]))
        recon, valid = inverse_warp(src, depth, pose, k)
        assert not valid.data.any()
        np.testing.assert_array_equal(recon.data, 0.0)

    def test_size_mismatch_rejected(self):
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        src = ImageBuffer.grayscale(np.ones((8, 8)))
        with pytest.raises(ValueError):
            inverse_warp(src, DepthMap(np.ones((4, 4))), SE3Transform.identity(), k)


class TestWarpJacobians:
    def test_zero_for_constant_image(self):
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        src = ImageBuffer.grayscale(np.full((8, 8), 0.7))
        depth = DepthMap(np.full((8, 8), 5.0))
        pose = SE3Transform.from_translation(np.array([0.1, 0.05, 0.0]))
        d_depth, d_pose = warp_jacobians(src, depth, pose, k)
        np.testing.assert_array_equal(d_depth, 0.0)
        np.testing.assert_array_equal(d_pose, 0.0)

    def test_invalid_pixels_zeroed(self):
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        rng = np.random.default_rng(4)
        src = ImageBuffer.grayscale(rng.uniform(0, 1, size=(8, 8)))
        depth = DepthMap(np.full((8, 8), 5.0))
        pose = SE3Transform.from_translation(np.array([0.5, 0.0, 0.0]))  # 2 px
        _, valid = inverse_warp(src, depth, pose, k)
        d_depth, d_pose = warp_jacobians(src, depth, pose, k)
        np.testing.assert_array_equal(d_depth[~valid.data], 0.0)
        np.testing.assert_array_equal(d_pose[~valid.data], 0.0)

    def test_translation_column_matches_fd(self):
        # Smooth image, fractional shift: central differences on tx.
        k = CameraIntrinsics(fx=20.0, fy=20.0, cx=3.5, cy=3.5)
        v, u = np.mgrid[0:8, 0:8].astype(float)
        src = ImageBuffer.grayscale((np.sin(u * 0.7) + np.cos(v * 0.9) + 2.0) / 4.0)
        depth = DepthMap(np.full((8, 8), 5.0))
        h = 1e-6

        def recon_at(tx):
            pose = SE3Transform.from_translation(np.array([tx, 0.0, 0.0]))
            recon, valid = inverse_warp(src, depth, pose, k)
            return _gray(recon), valid.data

        pose = SE3Transform.from_translation(np.array([0.1, 0.0, 0.0]))
        _, d_pose = warp_jacobians(src, depth, pose, k)
        hi, v_hi = recon_at(0.1 + h)
        lo, v_lo = recon_at(0.1 - h)
        fd = (hi - lo) / (2 * h)
        stable = v_hi & v_lo
        # 0.4 px shift keeps every sample 0.4 away from grid lines.
        np.testing.assert_allclose(d_pose[:, :, 0, 3][stable], fd[stable], atol=1e-5)
