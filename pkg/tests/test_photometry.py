import numpy as np
import pytest

from oracles import circle_sum_grid, aperture_sum_grid, kron_pixel_loop, quad_coeffs
from kira.errors import DimensionMismatch, InvalidAxes, NegativeRadius
from kira.extraction import FLAG_TRUNCATED
from kira.photometry import (ApertureBatch, kron_radius, mask_ellipse,
                             sum_circle, sum_ellipse)


@pytest.fixture(scope="module")
def uniform():
    return np.ones((64, 64))


@pytest.fixture(scope="module")
def random_img():
    return np.random.default_rng(5).uniform(0.5, 1.5, (64, 64))


class TestSumCircle:
    def test_zero_radius(self, uniform):
        flux, err, flag = sum_circle(uniform, ApertureBatch.circles(32.0, 32.0, 0.0))
        assert flux[0] == 0.0 and err[0] == 0.0 and flag[0] == 0

    def test_uniform_matches_area(self, uniform):
        for cx, cy in ((32.0, 32.0), (32.23, 31.818)):
            flux, _, flag = sum_circle(uniform, ApertureBatch.circles(cx, cy, 5.0))
            assert flag[0] == 0
            assert abs(flux[0] - np.pi * 25.0) <= 0.005 * np.pi * 25.0

    def test_matches_fine_grid_oracle(self, random_img):
        rng = np.random.default_rng(1)
        for _ in range(5):
            cx, cy = rng.uniform(12, 52, 2)
            r = rng.uniform(2.0, 6.0)
            flux, _, _ = sum_circle(random_img, ApertureBatch.circles(cx, cy, r))
            oracle, _ = circle_sum_grid(random_img, cx, cy, r)
            assert abs(flux[0] - oracle) <= 0.005 * oracle

    def test_truncated_aperture_clipped_oracle(self, uniform):
        flux, _, flag = sum_circle(uniform, ApertureBatch.circles(1.0, 32.0, 5.0))
        assert flag[0] & FLAG_TRUNCATED
        oracle, _ = circle_sum_grid(uniform, 1.0, 32.0, 5.0)  # in-image only
        assert abs(flux[0] - oracle) <= 0.005 * oracle

    def test_fluxerr_from_variance(self, random_img):
        batch = ApertureBatch.circles(30.0, 30.0, 4.0)
        flux, err, _ = sum_circle(random_img, batch, var=random_img)
        # var == image means err^2 accumulates the same weighted sum as flux
        assert err[0] == pytest.approx(np.sqrt(flux[0]), rel=1e-12)

    def test_nan_pixels_do_not_contribute(self, uniform):
        img = uniform.copy()
        clean, _, _ = sum_circle(img, ApertureBatch.circles(32.0, 32.0, 4.0))
        img[32, 32] = np.nan
        holed, _, _ = sum_circle(img, ApertureBatch.circles(32.0, 32.0, 4.0))
        assert holed[0] == pytest.approx(clean[0] - 1.0, rel=1e-12)

    def test_batch_order_and_length(self, random_img):
        rng = np.random.default_rng(2)
        xs = rng.uniform(10, 54, 17)
        ys = rng.uniform(10, 54, 17)
        rs = rng.uniform(1.0, 5.0, 17)
        flux, err, flag = sum_circle(random_img, ApertureBatch.circles(xs, ys, rs))
        assert len(flux) == len(err) == len(flag) == 17
        for i in (0, 7, 16):
            single, _, _ = sum_circle(
                random_img, ApertureBatch.circles(xs[i], ys[i], rs[i]))
            assert flux[i] == single[0]

    def test_negative_radius(self):
        with pytest.raises(NegativeRadius):
            ApertureBatch.circles(1.0, 1.0, -1.0)

    def test_var_shape_mismatch(self, uniform):
        with pytest.raises(DimensionMismatch):
            sum_circle(uniform, ApertureBatch.circles(1.0, 1.0, 1.0),
                       var=np.zeros((3, 3)))


class TestSumEllipse:
    def test_circle_degeneracy(self, random_img):
        for th in (0.0, 0.3, -1.2):
            fe, _, _ = sum_ellipse(random_img,
                                   ApertureBatch.ellipses(31.7, 32.4, 3.0, 3.0, th))
            fc, _, _ = sum_circle(random_img, ApertureBatch.circles(31.7, 32.4, 3.0))
            assert fe[0] == pytest.approx(fc[0], rel=1e-9)

    def test_r_scale_degeneracy(self, random_img):
        fe, _, _ = sum_ellipse(random_img,
                               ApertureBatch.ellipses(30.0, 30.0, 2.0, 2.0, 0.0),
                               r_scale=2.5)
        fc, _, _ = sum_circle(random_img, ApertureBatch.circles(30.0, 30.0, 5.0))
        assert fe[0] == pytest.approx(fc[0], rel=1e-9)

    def test_uniform_matches_area(self, uniform):
        flux, _, _ = sum_ellipse(uniform,
                                 ApertureBatch.ellipses(32.1, 31.8, 4.0, 2.0, 0.0))
        assert abs(flux[0] - np.pi * 8.0) <= 0.005 * np.pi * 8.0

    def test_matches_fine_grid_oracle(self, random_img):
        rng = np.random.default_rng(3)
        for _ in range(5):
            cx, cy = rng.uniform(14, 50, 2)
            b = rng.uniform(1.5, 3.0)
            a = b * rng.uniform(1.0, 2.0)
            th = rng.uniform(-np.pi / 2, np.pi / 2)
            flux, _, _ = sum_ellipse(random_img,
                                     ApertureBatch.ellipses(cx, cy, a, b, th))
            cxx, cyy, cxy = quad_coeffs(a, b, th)
            oracle, _ = aperture_sum_grid(random_img, cx, cy, cxx, cyy, cxy, a)
            assert abs(flux[0] - oracle) <= 0.005 * oracle

    def test_theta_plus_pi_identical(self, random_img):
        f1, _, _ = sum_ellipse(random_img,
                               ApertureBatch.ellipses(30.0, 33.0, 4.0, 2.0, 0.4))
        f2, _, _ = sum_ellipse(random_img,
                               ApertureBatch.ellipses(30.0, 33.0, 4.0, 2.0, 0.4 + np.pi))
        assert f1[0] == pytest.approx(f2[0], rel=1e-9)

    def test_invalid_axes(self):
        with pytest.raises(InvalidAxes):
            ApertureBatch.ellipses(1.0, 1.0, 1.0, 2.0, 0.0)
        with pytest.raises(InvalidAxes):
            ApertureBatch.ellipses(1.0, 1.0, 2.0, 0.0, 0.0)

    def test_truncation_flag(self, uniform):
        _, _, flag = sum_ellipse(uniform,
                                 ApertureBatch.ellipses(2.0, 32.0, 5.0, 2.0, 0.0))
        assert flag[0] & FLAG_TRUNCATED


class TestKron:
    def disk(self, radius=20.0, size=80):
        yy, xx = np.mgrid[0:size, 0:size]
        c = size / 2.0
        return ((xx - c) ** 2 + (yy - c) ** 2 <= radius ** 2).astype(float), c

    def test_zero_image(self):
        img = np.zeros((32, 32))
        kr, flag = kron_radius(img, ApertureBatch.ellipses(16.0, 16.0, 2.0, 2.0, 0.0),
                               r_max=6.0)
        assert kr[0] == 0.0
        assert flag[0] != 0

    def test_uniform_disk_analytic(self):
        img, c = self.disk(20.0)
        batch = ApertureBatch.ellipses(c, c, 1.0, 1.0, 0.0)
        kr, flag = kron_radius(img, batch, r_max=25.0)
        expected = 2.0 * 20.0 / 3.0
        assert abs(kr[0] * 1.0 - expected) <= 0.02 * expected
        oracle = kron_pixel_loop(img, c, c, 1.0, 1.0, 0.0, 25.0)
        assert kr[0] == pytest.approx(oracle, rel=1e-12)

    def test_scaling_invariance(self):
        img, c = self.disk(12.0, size=48)
        batch = ApertureBatch.ellipses(c, c, 1.5, 1.0, 0.3)
        k1, _ = kron_radius(img, batch, r_max=20.0)
        k2, _ = kron_radius(img * 7.0, batch, r_max=20.0)
        assert k2[0] == pytest.approx(k1[0], rel=1e-12)

    def test_r_max_validation(self):
        with pytest.raises(ValueError):
            kron_radius(np.ones((8, 8)),
                        ApertureBatch.ellipses(4.0, 4.0, 1.0, 1.0, 0.0), r_max=0.0)


class TestMaskEllipse:
    def test_empty_batch_unchanged(self):
        mask = np.zeros((16, 16), dtype=bool)
        out = mask_ellipse(mask, ApertureBatch.ellipses([], [], [], [], []))
        assert out is mask
        assert not mask.any()

    def test_center_in_circle_count_oracle(self):
        mask = np.zeros((24, 24), dtype=np.uint8)
        mask_ellipse(mask, ApertureBatch.ellipses(10.0, 10.0, 3.0, 3.0, 0.0))
        count = 0
        for y in range(24):
            for x in range(24):
                count += (x - 10.0) ** 2 + (y - 10.0) ** 2 <= 9.0
        assert int(mask.sum()) == count

    def test_union_and_idempotence(self):
        mask = np.zeros((24, 24), dtype=np.uint8)
        mask[0, 0] = 1
        batch = ApertureBatch.ellipses(12.0, 12.0, 4.0, 2.0, 0.7)
        mask_ellipse(mask, batch, r_scale=1.0)
        once = mask.copy()
        mask_ellipse(mask, batch, r_scale=1.0)
        np.testing.assert_array_equal(mask, once)
        assert mask[0, 0] == 1

    def test_bool_dtype_updated_in_place_semantics(self):
        mask = np.zeros((24, 24), dtype=bool)
        out = mask_ellipse(mask, ApertureBatch.ellipses(12.0, 12.0, 2.0, 1.0, 0.0))
        assert out is mask
        assert mask.any()
