"""PSNR and normal angular-error metrics."""

import numpy as np
import pytest

import reflfield.metrics as mt


class TestPsnr:
    def test_known_mse(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.1)
        # mse = 0.01 -> 20 dB
        assert mt.psnr(a, b) == pytest.approx(20.0)

    def test_thirty_db(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), np.sqrt(1e-3))
        assert mt.psnr(a, b) == pytest.approx(30.0)

    def test_identical_images_hit_ceiling(self):
        img = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert mt.psnr(img, img.copy()) == 99.0

    def test_tiny_error_capped_at_ceiling(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 1e-7)
        assert mt.psnr(a, b) <= 99.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes"):
            mt.psnr(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_order_invariant(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(size=(5, 5)), rng.uniform(size=(5, 5))
        assert mt.psnr(a, b) == mt.psnr(b, a)


class TestNormalMae:
    def test_exact_match_zero_error(self):
        n = np.zeros((2, 2, 3))
        n[..., 2] = 1.0
        mask = np.ones((2, 2), dtype=bool)
        assert mt.normal_mae(n, n.copy(), mask) == pytest.approx(0.0, abs=1e-10)

    def test_half_antipodal_is_ninety(self):
        gt = np.zeros((2, 1, 3))
        gt[..., 2] = 1.0
        pred = gt.copy()
        pred[1, 0, 2] = -1.0
        mask = np.ones((2, 1), dtype=bool)
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(90.0)

    def test_known_angle(self):
        gt = np.array([[[0.0, 0.0, 1.0]]])
        pred = np.array([[[0.0, 1.0, 1.0]]]) / np.sqrt(2.0)
        mask = np.ones((1, 1), dtype=bool)
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(45.0)

    def test_prediction_scale_invariant(self):
        rng = np.random.default_rng(2)
        gt = rng.normal(size=(3, 3, 3))
        gt /= np.linalg.norm(gt, axis=-1, keepdims=True)
        pred = gt + 0.1 * rng.normal(size=gt.shape)
        mask = np.ones((3, 3), dtype=bool)
        assert mt.normal_mae(pred * 7.3, gt, mask) == pytest.approx(
            mt.normal_mae(pred, gt, mask)
        )

    def test_quantized_ground_truth_renormalized(self):
        gt = np.array([[[0.0, 0.0, 0.97]]])  # slightly short, as from a PNG
        pred = np.array([[[0.0, 0.0, 1.0]]])
        mask = np.ones((1, 1), dtype=bool)
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(0.0, abs=1e-10)

    def test_zero_prediction_counts_ninety(self):
        gt = np.array([[[0.0, 0.0, 1.0]]])
        pred = np.zeros((1, 1, 3))
        mask = np.ones((1, 1), dtype=bool)
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(90.0)

    def test_mask_excludes_pixels(self):
        gt = np.zeros((1, 2, 3))
        gt[..., 2] = 1.0
        pred = gt.copy()
        pred[0, 1] = [1.0, 0.0, 0.0]  # 90 degrees, but masked out
        mask = np.array([[True, False]])
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(0.0, abs=1e-10)

    def test_pooling_over_stacked_images(self):
        # two images, unequal masked counts: pooled mean weights pixels equally
        gt = np.zeros((2, 1, 2, 3))
        gt[..., 2] = 1.0
        pred = gt.copy()
        pred[0, 0, 0] = [1.0, 0.0, 0.0]  # one 90-degree pixel
        mask = np.array([[[True, True]], [[True, False]]])
        assert mt.normal_mae(pred, gt, mask) == pytest.approx(30.0)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="mask"):
            mt.normal_mae(
                np.zeros((1, 1, 3)), np.ones((1, 1, 3)), np.zeros((1, 1), dtype=bool)
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            mt.normal_mae(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((3,), dtype=bool))
