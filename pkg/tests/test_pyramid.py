"""Smoothing pyramid: full-resolution grids, stride-based scales."""

import numpy as np
import pytest

from sceneflow.pyramid import build_scale_pyramid


def _noise_image(h, w, seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, (h, w))


class TestBuildScalePyramid:
    def test_zero_subscales_is_identity(self):
        img = _noise_image(16, 24)
        pyr = build_scale_pyramid([img], 0)
        assert pyr.factors == [1]
        assert np.array_equal(pyr.levels[0][0], img)

    def test_factors_double(self):
        img = _noise_image(16, 16)
        pyr = build_scale_pyramid([img], 2)
        assert pyr.factors == [1, 2, 4]
        assert len(pyr.levels) == 3

    def test_constant_image_stays_constant(self):
        img = np.full((32, 40), 0.375)
        pyr = build_scale_pyramid([img], 3)
        for level in pyr.levels:
            assert np.allclose(level[0], 0.375, atol=1e-6)

    def test_levels_keep_full_resolution(self):
        img = _noise_image(33, 47)  # not divisible by the factors
        pyr = build_scale_pyramid([img], 3)
        for level in pyr.levels:
            assert level[0].shape == img.shape

    def test_total_variation_decreases_with_scale(self):
        img = _noise_image(64, 64, seed=5)
        pyr = build_scale_pyramid([img], 3)
        tv = [
            np.abs(np.diff(lvl[0], axis=0)).sum() + np.abs(np.diff(lvl[0], axis=1)).sum()
            for lvl in pyr.levels
        ]
        assert all(tv[i + 1] < tv[i] for i in range(len(tv) - 1))

    def test_values_stay_in_range(self):
        img = _noise_image(32, 32, seed=9)
        pyr = build_scale_pyramid([img], 2)
        for level in pyr.levels:
            assert level[0].min() >= 0.0 and level[0].max() <= 1.0

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            build_scale_pyramid([_noise_image(8, 8)], -1)
        with pytest.raises(ValueError):
            build_scale_pyramid([], 1)
        with pytest.raises(ValueError):
            build_scale_pyramid([_noise_image(8, 8), _noise_image(8, 9)], 1)

    def test_multiple_images_smoothed_independently(self):
        a = _noise_image(24, 24, seed=1)
        b = _noise_image(24, 24, seed=2)
        pyr = build_scale_pyramid([a, b], 1)
        solo_a = build_scale_pyramid([a], 1)
        solo_b = build_scale_pyramid([b], 1)
        assert np.array_equal(pyr.levels[1][0], solo_a.levels[1][0])
        assert np.array_equal(pyr.levels[1][1], solo_b.levels[1][0])
