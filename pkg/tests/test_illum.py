import numpy as np
import pytest
import torch

from illumfuse.errors import ShapeError
from illumfuse.illum import (
    EPS_L,
    EnhancerConfig,
    EnhancerModel,
    enhance,
    enhancement_loss,
    estimate_illumination,
)

from oracles import enhancement_loss_oracle


class TestEstimate:
    def test_range_random_weights(self):
        rng = np.random.default_rng(0)
        lo, hi = 1.0, 0.0
        for seed in range(1000):
            torch.manual_seed(seed)
            model = EnhancerModel(EnhancerConfig(width=8))
            img = rng.random((6, 6, 3))
            L = estimate_illumination(model, img)
            assert np.all(L >= img)
            lo, hi = min(lo, L.min()), max(hi, L.max())
        assert lo >= EPS_L and hi <= 1.0

    def test_all_ones(self):
        torch.manual_seed(0)
        L = estimate_illumination(EnhancerModel(), np.ones((5, 5, 3)))
        np.testing.assert_array_equal(L, 1.0)

    def test_literal_residual_form(self):
        torch.manual_seed(0)
        model = EnhancerModel(EnhancerConfig(floor_exponent=1.0))
        img = np.random.default_rng(1).random((6, 7, 3)) * 0.5
        with torch.no_grad():
            s = torch.sigmoid(model.body(torch.as_tensor(img.transpose(2, 0, 1)[None], dtype=torch.float32)))
        expected = np.clip(img + s[0].permute(1, 2, 0).double().numpy(), EPS_L, 1.0)
        np.testing.assert_allclose(estimate_illumination(model, img), expected, atol=1e-6)

    def test_deterministic(self):
        torch.manual_seed(3)
        model = EnhancerModel()
        img = np.random.default_rng(2).random((8, 8, 3))
        np.testing.assert_array_equal(estimate_illumination(model, img), estimate_illumination(model, img))

    def test_rejects_gray(self):
        with pytest.raises(ShapeError):
            estimate_illumination(EnhancerModel(), np.zeros((4, 4, 1)))

    def test_trained_half_brightness(self, tmp_path):
        from illumfuse.synthetic import write_dataset
        from illumfuse.trainer import FusionConfig, load_dataset, train_enhancer

        write_dataset(tmp_path, 4, h=24, w=24, seed=0)
        cfg = FusionConfig(patch_w=16, patch_h=16, stage1_epochs=3, stage1_batch=4, enhancer_width=8)
        model = train_enhancer(load_dataset(tmp_path), cfg).model
        L = estimate_illumination(model, np.full((10, 10, 3), 0.5))
        assert L.min() >= 0.5 and L.max() <= 1.0

    def test_parameter_budget(self):
        n = sum(p.numel() for p in EnhancerModel().parameters())
        assert n <= 100_000


class TestEnhance:
    def test_identity_divisor(self):
        img = np.random.default_rng(0).random((4, 5, 3))
        np.testing.assert_array_equal(enhance(img, np.ones_like(img)), img)

    def test_scalar_division(self):
        np.testing.assert_allclose(enhance(np.full((3, 3, 3), 0.25), np.full((3, 3, 3), 0.5)), 0.5)

    def test_saturation(self):
        np.testing.assert_allclose(enhance(np.full((2, 2, 3), 0.1), np.full((2, 2, 3), 0.1)), 1.0)

    def test_never_darkens(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            img = rng.random((6, 6, 3))
            L = np.clip(img + rng.random(img.shape) * (1 - img), EPS_L, 1.0)
            assert np.all(enhance(img, L) >= img - 1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            enhance(np.zeros((2, 2, 3)), np.ones((2, 3, 3)))


class TestEnhancementLoss:
    def test_zero(self):
        img = np.full((4, 4, 3), 0.3)
        assert enhancement_loss(img, img.copy()) == 0.0

    def test_constant_offset(self):
        img = np.full((4, 4, 3), 0.3)
        assert enhancement_loss(img, img + 0.1) == pytest.approx(0.01, abs=1e-12)

    def test_random_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            img = rng.random((4, 4, 3))
            L = rng.random((4, 4, 3))
            assert enhancement_loss(img, L, 0.15) == pytest.approx(enhancement_loss_oracle(img, L, 0.15), abs=1e-6)

    def test_nonnegative(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            assert enhancement_loss(rng.random((3, 5, 3)), rng.random((3, 5, 3))) >= 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            enhancement_loss(np.zeros((2, 2, 3)), np.zeros((2, 2, 1)))
