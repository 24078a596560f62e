import numpy as np
import pytest

from oracles import sigma_clipped_cell
from kira.background import (BackgroundModel, backarray, makeback, rmsarray,
                             subbackarray)
from kira.errors import DimensionMismatch


def model(levels, cell_size, image_w, image_h, rms=None):
    levels = np.asarray(levels, dtype=np.float64)
    rms = np.zeros_like(levels) if rms is None else np.asarray(rms, dtype=np.float64)
    mh, mw = levels.shape
    return BackgroundModel(mesh_w=mw, mesh_h=mh, cell_size=cell_size,
                           levels=levels, rms=rms, image_w=image_w, image_h=image_h)


class TestMakeback:
    def test_constant_image(self):
        bkg = makeback(np.full((96, 96), 100.0), cell_size=32)
        assert bkg.levels.shape == (3, 3)
        np.testing.assert_array_equal(bkg.levels, 100.0)
        np.testing.assert_array_equal(bkg.rms, 0.0)

    def test_single_outlier_is_clipped(self):
        img = np.full((128, 128), 100.0)
        img[5, 7] = 10000.0
        bkg = makeback(img, cell_size=64, clip_sigma=3.0, clip_iters=5)
        level, rms, kept = sigma_clipped_cell(img[:64, :64].ravel(), 3.0, 5)
        assert abs(level - 100.0) < 1e-6
        assert bkg.levels[0, 0] == pytest.approx(level, abs=1e-9)
        assert bkg.rms[0, 0] == pytest.approx(rms, abs=1e-9)
        assert kept == 64 * 64 - 1

    def test_noise_field_statistics(self):
        rng = np.random.default_rng(7)
        img = 100.0 + rng.normal(0.0, 5.0, (256, 256))
        bkg = makeback(img, cell_size=64)
        assert np.all(np.abs(bkg.levels - 100.0) < 0.5)
        assert np.all(np.abs(bkg.rms - 5.0) < 0.5)

    def test_mask_excludes_pixels(self):
        img = np.full((64, 64), 100.0)
        mask = np.zeros((64, 64), dtype=bool)
        img[:16, :16] = 1.0e6
        mask[:16, :16] = True
        bkg = makeback(img, mask, cell_size=32)
        np.testing.assert_array_equal(bkg.levels, 100.0)

    def test_nan_excluded(self):
        img = np.full((64, 64), 100.0)
        img[3, 3] = np.nan
        bkg = makeback(img, cell_size=32)
        np.testing.assert_array_equal(bkg.levels, 100.0)

    def test_empty_cell_filled_from_neighbors(self):
        img = np.full((96, 96), 100.0)
        img[32:64, 32:64] = 7777.0
        mask = np.zeros((96, 96), dtype=bool)
        mask[32:64, 32:64] = True  # center cell fully masked
        bkg = makeback(img, mask, cell_size=32)
        np.testing.assert_array_equal(bkg.levels, 100.0)
        assert np.all(np.isfinite(bkg.rms))

    def test_single_cell_degenerate_image(self):
        bkg = makeback(np.full((6, 5), 3.0), cell_size=8)
        assert (bkg.mesh_h, bkg.mesh_w) == (1, 1)
        assert bkg.levels[0, 0] == 3.0

    def test_cell_size_validation(self):
        with pytest.raises(ValueError):
            makeback(np.zeros((16, 16)), cell_size=4)

    def test_mesh_shape_is_ceil(self):
        bkg = makeback(np.zeros((100, 70)), cell_size=32)
        assert (bkg.mesh_h, bkg.mesh_w) == (4, 3)


class TestBackarray:
    def test_constant_model(self):
        bkg = model([[5.0, 5.0], [5.0, 5.0]], 8, 16, 16)
        np.testing.assert_array_equal(backarray(bkg), 5.0)

    def test_interpolation_anchor_at_cell_centers(self):
        # cell_size 9 on an 18-wide image: centers at columns 4 and 13
        bkg = model([[0.0, 10.0]], 9, 18, 9)
        arr = backarray(bkg)
        assert arr[0, 4] == 0.0
        assert arr[0, 13] == 10.0
        # midpoint between centers interpolates halfway
        assert arr[0, 8] == pytest.approx(10.0 * (8 - 4) / 9.0)

    def test_edges_clamp_to_nearest_cell(self):
        bkg = model([[0.0, 10.0]], 8, 16, 8)
        arr = backarray(bkg)
        assert np.all(arr[:, 0] == 0.0)
        assert np.all(arr[:, :4] == 0.0)   # left of first center (3.5)
        assert np.all(arr[:, 12:] == 10.0)  # right of last center (11.5)

    def test_gradient_plane_reconstruction(self):
        h = w = 128
        yy, xx = np.mgrid[0:h, 0:w]
        plane = 100.0 + 0.5 * xx + 0.25 * yy
        bkg = makeback(plane, cell_size=16)
        diff = backarray(bkg) - plane
        rms = np.sqrt(np.mean(diff ** 2))
        assert rms <= 0.02 * np.sqrt(np.mean(plane ** 2))

    def test_rmsarray_interpolates_rms_mesh(self):
        bkg = model([[1.0, 1.0]], 8, 16, 8, rms=[[2.0, 2.0]])
        np.testing.assert_array_equal(rmsarray(bkg), 2.0)


class TestSubback:
    def test_exact_model_gives_zero(self):
        bkg = model([[4.0, 8.0]], 8, 16, 8)
        img = backarray(bkg)
        np.testing.assert_array_equal(subbackarray(img, bkg), 0.0)

    def test_constant_difference(self):
        img = np.full((8, 16), 100.0)
        bkg = model([[40.0, 40.0]], 8, 16, 8)
        np.testing.assert_array_equal(subbackarray(img, bkg), 60.0)

    def test_input_unmodified(self):
        img = np.full((8, 16), 100.0)
        keep = img.copy()
        subbackarray(img, model([[40.0, 40.0]], 8, 16, 8))
        np.testing.assert_array_equal(img, keep)

    def test_noise_only_residual_within_cell_rms(self):
        rng = np.random.default_rng(21)
        img = 50.0 + rng.normal(0.0, 4.0, (256, 256))
        bkg = makeback(img, cell_size=64)
        res = subbackarray(img, bkg)
        for jy in range(bkg.mesh_h):
            for jx in range(bkg.mesh_w):
                cell = res[jy * 64:(jy + 1) * 64, jx * 64:(jx + 1) * 64]
                assert abs(cell.mean()) <= bkg.rms[jy, jx]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            subbackarray(np.zeros((4, 4)), model([[1.0]], 8, 8, 8))

    def test_background_shift_invariance(self):
        rng = np.random.default_rng(3)
        img = 10.0 + rng.normal(0.0, 1.0, (128, 128))
        r1 = subbackarray(img, makeback(img, cell_size=32))
        shifted = img + 500.0
        r2 = subbackarray(shifted, makeback(shifted, cell_size=32))
        np.testing.assert_allclose(r1, r2, atol=1e-9)
