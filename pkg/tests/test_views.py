import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from climregime.exceptions import ConfigError
from climregime.model.views import (
    ANCHOR,
    TARGET,
    CropBox,
    View,
    ViewConfig,
    full_view,
    make_views,
    mask_patches,
    masked_patch_count,
    random_resized_crop,
    sample_crop_box,
)


def _field(height: int = 12, width: int = 10, channels: int = 2, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=(height, width, channels))


def _unmasked_view(size: int = 16, channels: int = 2, seed: int = 0) -> View:
    values = np.random.default_rng(seed).normal(size=(size, size, channels))
    return View(
        values=values,
        mask=np.zeros((size // 4, size // 4), dtype=bool),
        crop_box=CropBox(0, 0, size, size),
    )


class TestRandomResizedCrop:
    """Test crop sampling and resampling"""

    def test_identity_crop(self):
        """Test that a full-scale square crop of a view-sized field is the field"""
        field = _field(8, 8)
        view = random_resized_crop(field, (1.0, 1.0), 8, np.random.default_rng(0), ratio=(1.0, 1.0))
        assert view.crop_box == CropBox(0, 0, 8, 8)
        np.testing.assert_allclose(view.values, field, rtol=0, atol=1e-12)

    def test_constant_field(self):
        field = np.full((9, 13, 3), 4.25)
        view = random_resized_crop(field, (0.2, 0.6), 16, np.random.default_rng(1))
        assert view.values.shape == (16, 16, 3)
        np.testing.assert_allclose(view.values, 4.25, rtol=0, atol=1e-12)

    def test_deterministic(self):
        field = _field()
        first = random_resized_crop(field, (0.3, 0.9), 8, np.random.default_rng(42))
        second = random_resized_crop(field, (0.3, 0.9), 8, np.random.default_rng(42))
        assert first.crop_box == second.crop_box
        np.testing.assert_array_equal(first.values, second.values)

    def test_corners_aligned(self):
        """Test that the view's corner cells sit on the crop's corner cells"""
        field = _field(20, 20, 1)
        view = random_resized_crop(field, (0.3, 0.5), 8, np.random.default_rng(3))
        box = view.crop_box
        np.testing.assert_allclose(view.values[0, 0, 0], field[box.top, box.left, 0])
        np.testing.assert_allclose(
            view.values[-1, -1, 0],
            field[box.top + box.height - 1, box.left + box.width - 1, 0],
        )

    def test_mask_laid_out_per_patch(self):
        """Test that a crop carries an empty mask with one entry per patch, like full_view"""
        view = random_resized_crop(_field(), (0.3, 0.9), 8, np.random.default_rng(4), patch_size=4)
        assert view.mask.shape == full_view(_field(), 8, 4).mask.shape == (2, 2)
        assert view.mask.dtype == bool
        assert not view.mask.any()

    def test_indivisible_patch_size(self):
        with pytest.raises(ConfigError):
            random_resized_crop(_field(), (0.3, 0.9), 10, np.random.default_rng(0), patch_size=4)

    @settings(max_examples=60, deadline=None)
    @given(
        height=st.integers(min_value=2, max_value=40),
        width=st.integers(min_value=2, max_value=40),
        low=st.floats(min_value=0.05, max_value=1.0),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_crop_box_inside_field(self, height: int, width: int, low: float, seed: int):
        box = sample_crop_box(height, width, (low, 1.0), np.random.default_rng(seed))
        assert 2 <= box.height <= height
        assert 2 <= box.width <= width
        assert 0 <= box.top <= height - box.height
        assert 0 <= box.left <= width - box.width

    def test_full_view_has_empty_mask(self):
        view = full_view(_field(), 8, 4)
        assert view.mask.shape == (2, 2)
        assert not view.mask.any()
        assert view.crop_box == CropBox(0, 0, 12, 10)


class TestMaskPatches:
    """Test whole-patch masking"""

    def test_rounding(self):
        assert masked_patch_count(0.15, 16) == 2
        assert masked_patch_count(0.5, 1) == 1
        assert masked_patch_count(0.0, 64) == 0

    def test_zero_ratio(self):
        view = _unmasked_view()
        masked = mask_patches(view, 4, 0.0, np.random.default_rng(0))
        assert not masked.mask.any()
        np.testing.assert_array_equal(masked.values, view.values)

    def test_fifteen_percent_of_sixteen(self):
        view = _unmasked_view()
        masked = mask_patches(view, 4, 0.15, np.random.default_rng(5))
        assert masked.mask.sum() == 2
        assert masked.kind == ANCHOR
        for i, j in zip(*np.nonzero(masked.mask)):
            block = masked.values[4 * i : 4 * i + 4, 4 * j : 4 * j + 4]
            assert np.all(block == 0.0)
        keep = ~np.kron(masked.mask, np.ones((4, 4), dtype=bool)).astype(bool)
        np.testing.assert_array_equal(masked.values[keep], view.values[keep])

    def test_full_ratio_zeroes_everything(self):
        masked = mask_patches(_unmasked_view(), 4, 1.0, np.random.default_rng(0))
        assert masked.mask.all()
        assert np.all(masked.values == 0.0)

    def test_indivisible_side(self):
        with pytest.raises(ConfigError):
            mask_patches(_unmasked_view(size=10), 4, 0.2, np.random.default_rng(0))


class TestMakeViews:
    """Test target and anchor view generation"""

    def test_target_and_anchors(self):
        cfg = ViewConfig(out_size=16, patch_size=4, n_anchors=3, mask_ratio=0.15)
        target, anchors = make_views(_field(), cfg, np.random.default_rng(0))
        assert target.kind == TARGET
        assert target.mask.shape == (4, 4)
        assert not target.mask.any()
        assert len(anchors) == 3
        for anchor in anchors:
            assert anchor.kind == ANCHOR
            assert anchor.values.shape == (16, 16, 2)
            assert abs(int(anchor.mask.sum()) - 0.15 * 16) <= 1

    def test_single_anchor(self):
        cfg = ViewConfig(out_size=8, patch_size=4, n_anchors=1, mask_ratio=0.25)
        _, anchors = make_views(_field(), cfg, np.random.default_rng(0))
        assert len(anchors) == 1

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_target_never_masked(self, seed: int):
        cfg = ViewConfig(out_size=8, patch_size=2, n_anchors=2, mask_ratio=0.5)
        target, _ = make_views(_field(seed=seed), cfg, np.random.default_rng(seed))
        assert not target.mask.any()

    def test_streams_differ(self):
        """Test that distinct generator streams give distinct anchors"""
        cfg = ViewConfig(out_size=8, patch_size=4, n_anchors=2, mask_ratio=0.25)
        field = _field(30, 30)
        _, first = make_views(field, cfg, np.random.default_rng([9, 0]))
        _, second = make_views(field, cfg, np.random.default_rng([9, 1]))
        assert not np.array_equal(first[0].values, second[0].values)


class TestViewConfig:
    """Test view configuration validation"""

    def test_defaults_are_valid(self):
        cfg = ViewConfig()
        cfg.validate()
        assert cfg.n_patches == 64
        assert cfg.n_masked == 10

    def test_indivisible_patch_size(self):
        with pytest.raises(ConfigError):
            ViewConfig(out_size=10, patch_size=4).validate()

    def test_ratio_masking_everything(self):
        with pytest.raises(ConfigError):
            ViewConfig(out_size=8, patch_size=4, mask_ratio=0.9).validate()

    def test_dict_round_trip(self):
        cfg = ViewConfig(out_size=16, patch_size=2, n_anchors=4, target_scale=(0.5, 1.0))
        assert ViewConfig.from_dict(cfg.to_dict()) == cfg
