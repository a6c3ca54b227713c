"""Semi-global matching sanity checks on synthetic stereo pairs."""

import numpy as np
import pytest

from sceneflow.sgm import sgm_disparity, sgm_disparity_pair


def shifted_pair(h=48, w=100, shift=7, seed=3):
    rng = np.random.default_rng(seed)
    tex = rng.uniform(0.05, 0.95, (h, w + shift))
    return tex[:, :w].copy(), tex[:, shift:].copy()


def test_constant_shift_recovered():
    s = 7
    left, right = shifted_pair(shift=s)
    disp, valid, _ = sgm_disparity_pair(left, right, max_disparity=32)
    inner = np.s_[3:-3, s + 4 : -4]
    assert valid[inner].mean() > 0.9
    err = np.abs(disp[inner][valid[inner]] - s)
    assert err.max() <= 0.5


def test_identical_images_zero_disparity():
    left, _ = shifted_pair(shift=0)
    disp, valid = sgm_disparity(left, left, max_disparity=32)
    inner = np.s_[3:-3, 3:-3]
    assert valid[inner].mean() > 0.9
    assert np.nanmax(np.abs(disp[inner])) == 0.0


def test_textureless_images_mostly_invalid():
    flat = np.full((40, 80), 0.5)
    disp, valid = sgm_disparity(flat, flat, max_disparity=32)
    assert valid.mean() < 0.2
    assert np.isnan(disp[~valid]).all()


def test_left_right_check_bound_holds():
    left, right = shifted_pair(h=40, w=96, shift=5, seed=11)
    disp, valid, disp_r = sgm_disparity_pair(left, right, max_disparity=24, lr_tolerance=1.0)
    ys, xs = np.nonzero(valid)
    xr = np.round(xs - disp[ys, xs]).astype(int)
    assert (xr >= 0).all()
    partner = disp_r[ys, xr]
    assert np.isfinite(partner).all()
    assert np.all(np.abs(disp[ys, xs].round() - partner.round()) <= 1.0)


def test_invalid_pixels_are_nan():
    left, right = shifted_pair(h=32, w=64, shift=9, seed=5)
    disp, valid = sgm_disparity(left, right, max_disparity=16)
    assert np.isnan(disp[~valid]).all()
    assert np.isfinite(disp[valid]).all()


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sgm_disparity(np.zeros((10, 20)), np.zeros((10, 21)))
