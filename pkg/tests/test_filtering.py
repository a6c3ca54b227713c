"""Consistency, region and sparsification filters on hand-built fields."""

import numpy as np

from sceneflow.filtering import (
    build_seeds,
    consistency_filter,
    disparity_fill,
    region_filter,
    sparsify,
)
from sceneflow.matcher import MatchField


def make_field(flow):
    flow = np.asarray(flow, dtype=np.float64)
    h, w = flow.shape[:2]
    return MatchField(flow=flow, cost=np.zeros((h, w)), stride=1, image_shape=(h, w))


def constant_field(h, w, vec):
    flow = np.broadcast_to(np.asarray(vec, float), (h, w, 4)).copy()
    return make_field(flow)


# -- consistency --------------------------------------------------------------


def test_exact_inverse_survives_with_zero_error():
    h, w = 20, 30
    fwd = constant_field(h, w, (2.0, 1.0, 3.0, 5.0))
    inv = constant_field(h, w, (-2.0, -1.0, 5.0, 3.0))
    mask, errors = consistency_filter(fwd, inv, tau_c=1.0)
    # cross correspondence lands at (x - 3, y + 1)
    assert mask[: h - 1, 3:].all()
    assert (errors[: h - 1, 3:] == 0.0).all()
    assert not mask[:, :3].any()
    assert not mask[h - 1].any()
    assert np.isinf(errors[:, :3]).all()


def test_small_deviation_kept_large_removed():
    h, w = 12, 24
    fwd = constant_field(h, w, (2.0, 1.0, 3.0, 5.0))
    inv_ok = constant_field(h, w, (-1.5, -1.0, 5.0, 3.0))
    mask, errors = consistency_filter(fwd, inv_ok, tau_c=1.0)
    assert mask[: h - 1, 3:].all()
    assert np.allclose(errors[: h - 1, 3:], 0.5)

    inv_bad = constant_field(h, w, (0.0, -1.0, 5.0, 3.0))
    mask, errors = consistency_filter(fwd, inv_bad, tau_c=1.0)
    assert not mask.any()
    assert np.allclose(errors[: h - 1, 3:], 2.0)


def test_disparity_roles_swap_in_comparison():
    # inverse d0 must mirror forward d1 and vice versa
    h, w = 10, 20
    fwd = constant_field(h, w, (0.0, 0.0, 3.0, 5.0))
    swapped = constant_field(h, w, (0.0, 0.0, 3.0, 5.0))
    mask, errors = consistency_filter(fwd, swapped, tau_c=1.0)
    assert not mask.any()  # deviations |5 - 3| = 2 in both disparities

    mirrored = constant_field(h, w, (0.0, 0.0, 5.0, 3.0))
    mask, _ = consistency_filter(fwd, mirrored, tau_c=1.0)
    assert mask[:, 5:].all()


def test_invalid_inverse_target_removed():
    h, w = 10, 16
    fwd = constant_field(h, w, (0.0, 0.0, 2.0, 2.0))
    inv = constant_field(h, w, (0.0, 0.0, 2.0, 2.0))
    inv.flow[4, 7] = np.nan
    mask, errors = consistency_filter(fwd, inv, tau_c=3.0)
    assert not mask[4, 9]  # forward pixel whose correspondence lands on (4, 7)
    assert np.isinf(errors[4, 9])
    assert mask[4, 8]


# -- region filter ------------------------------------------------------------


def region_scene(h=40, w=40):
    # dissimilar background everywhere; carve clusters into it
    flow = np.broadcast_to(np.array([50.0, 50.0, 4.0, 4.0]), (h, w, 4)).copy()
    return flow


def test_small_isolated_cluster_deleted():
    flow = region_scene()
    flow[5:15, 5:15] = (0.0, 0.0, 4.0, 4.0)
    mask = np.zeros((40, 40), bool)
    mask[5:15, 5:15] = True  # 100 matches, nothing to grow into
    out = region_filter(make_field(flow), mask, np.zeros((40, 40)), min_size=150)
    assert not out.any()


def test_large_cluster_kept():
    flow = region_scene()
    flow[5:15, 5:25] = (0.0, 0.0, 4.0, 4.0)
    mask = np.zeros((40, 40), bool)
    mask[5:15, 5:25] = True  # 200 matches
    out = region_filter(make_field(flow), mask, np.zeros((40, 40)), min_size=150)
    assert out[5:15, 5:25].all()
    assert out.sum() == 200


def test_growth_into_removed_neighbors_rescues_cluster():
    flow = region_scene()
    flow[5:15, 5:21] = (0.0, 0.0, 4.0, 4.0)  # 10 x 16 similar patch
    mask = np.zeros((40, 40), bool)
    mask[5:15, 5:15] = True  # 100 survive, 60 similar neighbors removed
    out = region_filter(make_field(flow), mask, np.zeros((40, 40)), min_size=150)
    assert out[5:15, 5:21].all()  # grown to 160, re-admitted restored
    assert out.sum() == 160


def test_independent_regions_filtered_separately():
    flow = region_scene()
    flow[2:12, 2:12] = (0.0, 0.0, 4.0, 4.0)
    flow[20:30, 2:22] = (10.0, 0.0, 4.0, 4.0)
    mask = np.zeros((40, 40), bool)
    mask[2:12, 2:12] = True
    mask[20:30, 2:22] = True
    out = region_filter(make_field(flow), mask, np.zeros((40, 40)), min_size=150)
    assert not out[2:12, 2:12].any()
    assert out[20:30, 2:22].all()


def test_region_filter_never_invents_matches():
    rng = np.random.default_rng(7)
    flow = rng.uniform(1.0, 9.0, (30, 30, 4))
    mask = rng.uniform(size=(30, 30)) < 0.5
    out = region_filter(make_field(flow), mask, np.zeros((30, 30)), min_size=10)
    # output pixels either survived the input mask or carry a valid vector
    assert np.isfinite(flow[out]).all()


# -- disparity fill -----------------------------------------------------------


def test_fill_requires_sgm_agreement():
    h, w = 9, 9
    fwd = constant_field(h, w, (0.0, 0.0, 4.0, 4.0))
    mask = np.zeros((h, w), bool)
    mask[0, 0] = True
    sgm = np.full((h, w), np.nan)
    sgm[2, 2] = 4.3  # agrees within 0.3
    sgm[3, 3] = 6.0  # off by 2
    sgm[0, 0] = 4.0  # already matched
    fill = disparity_fill(fwd, mask, sgm, tau_c=1.0)
    assert fill[2, 2]
    assert not fill[3, 3]
    assert not fill[0, 0]
    assert fill.sum() == 1


def test_fill_skips_invalid_forward():
    h, w = 6, 6
    fwd = constant_field(h, w, (0.0, 0.0, 4.0, 4.0))
    fwd.flow[1, 1] = np.nan
    sgm = np.full((h, w), 4.0)
    fill = disparity_fill(fwd, np.zeros((h, w), bool), sgm, tau_c=1.0)
    assert not fill[1, 1]
    assert fill.sum() == h * w - 1


# -- sparsification -----------------------------------------------------------


def test_sparsify_one_winner_per_block_min_error():
    rng = np.random.default_rng(1)
    h, w = 11, 14
    errors = rng.uniform(size=(h, w))
    mask = rng.uniform(size=(h, w)) < 0.7
    xs, ys = sparsify(mask, errors)
    assert xs.size <= -(-w // 3) * -(-h // 3)
    seen = set()
    for x, y in zip(xs, ys):
        b = (y // 3, x // 3)
        assert b not in seen
        seen.add(b)
        by, bx = 3 * b[0], 3 * b[1]
        blk_mask = mask[by : by + 3, bx : bx + 3]
        blk_err = errors[by : by + 3, bx : bx + 3]
        assert errors[y, x] == blk_err[blk_mask].min()
    # every occupied block is represented
    occupied = {(y // 3, x // 3) for y, x in zip(*np.nonzero(mask))}
    assert seen == occupied


def test_sparsify_tie_breaks_row_major():
    mask = np.zeros((3, 3), bool)
    mask[1, 2] = True
    mask[2, 0] = True
    errors = np.zeros((3, 3))
    xs, ys = sparsify(mask, errors)
    assert xs.tolist() == [2] and ys.tolist() == [1]


def test_seed_set_motion_subset_of_geometry():
    rng = np.random.default_rng(5)
    h, w = 21, 27
    flow = rng.uniform(1.0, 8.0, (h, w, 4))
    field = make_field(flow)
    mask = rng.uniform(size=(h, w)) < 0.4
    errors = np.where(mask, rng.uniform(size=(h, w)), np.inf)
    sgm = flow[:, :, 2] + rng.uniform(-0.5, 0.5, (h, w))
    fill = disparity_fill(field, mask, sgm, tau_c=1.0)
    seeds = build_seeds(field, mask, errors, fill, sgm_disp=sgm)

    motion = {tuple(p) for p in seeds.motion_xy}
    geo = {tuple(p) for p in seeds.geo_xy}
    assert motion <= geo
    assert len(geo) <= -(-w // 3) * -(-h // 3)
    # carried vectors match the field
    for (x, y), vec in zip(seeds.motion_xy, seeds.motion_vec):
        assert np.array_equal(vec, flow[y, x])
    for (x, y), d0 in zip(seeds.geo_xy, seeds.geo_d0):
        assert d0 == flow[y, x, 2]


def test_seed_errors_for_fill_pixels_use_sgm_difference():
    h, w = 3, 3
    field = constant_field(h, w, (0.0, 0.0, 4.0, 4.0))
    mask = np.zeros((h, w), bool)
    errors = np.full((h, w), np.inf)
    sgm = np.full((h, w), np.nan)
    sgm[1, 1] = 4.25
    fill = disparity_fill(field, mask, sgm, tau_c=1.0)
    seeds = build_seeds(field, mask, errors, fill, sgm_disp=sgm)
    assert seeds.motion_xy.shape == (0, 2)
    assert seeds.geo_xy.tolist() == [[1, 1]]
    assert np.isclose(seeds.geo_err[0], 0.25)
