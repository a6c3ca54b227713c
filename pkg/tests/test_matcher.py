"""Stochastic matcher: cost definition, tree seeding, propagation."""

import numpy as np
import pytest

from sceneflow.matcher import (
    MatchField,
    build_kd_forest,
    inverse_images,
    kdtree_init,
    match_dense,
    matching_cost,
    propagate_and_search,
    recompute_costs,
    unflip_inverse_field,
    upsample_field,
)
from sceneflow.pyramid import build_scale_pyramid


def translating_quad(h, w, u, v, d0, d1, seed=0):
    """Four wrap-around images whose true scene flow is constant.

    The temporal image shows the reference shifted by (u, v), the stereo
    partner by (d0, 0) and the cross image by (u - d1, v). Correspondences
    are exact except near the wrap seams.
    """
    rng = np.random.default_rng(seed)
    ref = rng.uniform(0.0, 1.0, (h, w))
    temporal = np.roll(ref, (v, u), axis=(0, 1))
    stereo = np.roll(ref, (0, -d0), axis=(0, 1))
    cross = np.roll(ref, (v, u - d1), axis=(0, 1))
    return ref, temporal, stereo, cross


TRUTH = (8, 0, 8, 16)  # multiples of 8 so every pyramid level stays exact


class TestMatchingCost:
    def test_constant_maps_zero_cost(self):
        maps = [np.full((20, 20), 0.5)] * 4
        assert matching_cost([3.0, -2.0, 4.0, 1.5], 10, 10, maps) == 0.0

    def test_zero_displacement_identical_images(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 1, (24, 24))
        # tiny disparities quantize to the same pixel
        c = matching_cost([0.0, 0.0, 0.25, 0.25], 12, 12, [img] * 4)
        assert c == 0.0

    def test_true_vector_beats_perturbations(self):
        u, v, d0, d1 = TRUTH
        maps = translating_quad(48, 64, u, v, d0, d1, seed=2)
        x, y = 32, 24
        truth_cost = matching_cost([u, v, d0, d1], x, y, maps)
        assert truth_cost == 0.0
        for delta in np.eye(4):
            c = matching_cost(np.array(TRUTH, dtype=float) + delta, x, y, maps)
            assert c > 0.0

    def test_rejects_non_finite_vector(self):
        maps = [np.zeros((8, 8))] * 4
        with pytest.raises(ValueError):
            matching_cost([np.nan, 0, 1, 1], 4, 4, maps)

    def test_cost_is_finite_for_out_of_bounds_targets(self):
        rng = np.random.default_rng(3)
        maps = [rng.uniform(0, 1, (16, 16)) for _ in range(4)]
        c = matching_cost([500.0, -300.0, 900.0, 200.0], 8, 8, maps)
        assert np.isfinite(c) and c >= 0.0


class TestKdtreeInit:
    def test_translating_scene_mostly_exact(self):
        u, v, d0, d1 = TRUTH
        imgs = translating_quad(48, 64, u, v, d0, d1, seed=4)
        forest = build_kd_forest(imgs, stride=1)
        field = kdtree_init(forest, imgs, (48, 64))
        interior = field.flow[16:32, 24:48]
        good = np.all(np.abs(interior - np.array(TRUTH, float)) <= 1.0, axis=-1)
        assert good.mean() >= 0.95

    def test_invalid_cells_have_nan_and_inf(self):
        u, v, d0, d1 = TRUTH
        imgs = translating_quad(32, 32, u, v, d0, d1, seed=5)
        forest = build_kd_forest(imgs, stride=1)
        field = kdtree_init(forest, imgs, (32, 32))
        invalid = ~np.isfinite(field.cost)
        assert np.all(np.isnan(field.flow[invalid]))


class TestPropagation:
    def _random_field(self, hs, ws, stride, shape, seed):
        rng = np.random.default_rng(seed)
        flow = np.stack(
            [
                rng.uniform(-16, 16, (hs, ws)),
                rng.uniform(-16, 16, (hs, ws)),
                rng.uniform(1, 24, (hs, ws)),
                rng.uniform(1, 24, (hs, ws)),
            ],
            axis=-1,
        )
        return MatchField(flow=flow, cost=np.zeros((hs, ws)), stride=stride, image_shape=shape)

    def test_ground_truth_is_a_fixpoint(self):
        imgs = translating_quad(48, 64, *TRUTH, seed=6)
        flow = np.broadcast_to(np.array(TRUTH, float), (48, 64, 4)).copy()
        field = MatchField(flow=flow, cost=np.zeros((48, 64)), stride=1, image_shape=(48, 64))
        recompute_costs(field, imgs)
        before = field.flow.copy()
        propagate_and_search(field, imgs, 4, np.random.default_rng(0))
        assert np.array_equal(field.flow, before)

    def test_costs_never_increase(self):
        imgs = translating_quad(32, 48, *TRUTH, seed=7)
        field = self._random_field(32, 48, 1, (32, 48), seed=8)
        recompute_costs(field, imgs)
        rng = np.random.default_rng(9)
        prev = field.cost.copy()
        for it in range(8):
            propagate_and_search(field, imgs, 1, rng, first_quadrant=it)
            assert np.all(field.cost <= prev)
            prev = field.cost.copy()

    def test_stored_cost_matches_reevaluation(self):
        imgs = translating_quad(32, 48, *TRUTH, seed=10)
        field = self._random_field(32, 48, 1, (32, 48), seed=11)
        recompute_costs(field, imgs)
        propagate_and_search(field, imgs, 3, np.random.default_rng(12))
        rng = np.random.default_rng(13)
        for _ in range(30):
            i = rng.integers(0, 32)
            j = rng.integers(0, 48)
            c = matching_cost(field.flow[i, j], j, i, imgs)
            assert c == field.cost[i, j]

    def test_deterministic_given_seed(self):
        imgs = translating_quad(32, 32, *TRUTH, seed=14)
        runs = []
        for _ in range(2):
            field = self._random_field(32, 32, 1, (32, 32), seed=15)
            recompute_costs(field, imgs)
            propagate_and_search(field, imgs, 4, np.random.default_rng(16))
            runs.append((field.flow.tobytes(), field.cost.tobytes()))
        assert runs[0] == runs[1]

    def test_single_seed_fills_scene(self):
        h, w = 64, 96
        imgs = translating_quad(h, w, *TRUTH, seed=17)
        pyr = build_scale_pyramid(imgs, 3)
        stride = 8
        hs, ws = h // stride, w // stride
        coarse = self._random_field(hs, ws, stride, (h, w), seed=18)
        coarse.flow[hs // 2, ws // 2] = np.array(TRUTH, float)
        recompute_costs(coarse, pyr.levels[3])
        field = match_dense(
            imgs,
            subscales=3,
            iterations=12,
            seed=19,
            init_field=coarse,
            features_by_level=pyr.levels,
        )
        interior = field.flow[16 : h - 16, 24 : w - 24]
        good = np.all(np.abs(interior - np.array(TRUTH, float)) <= 1.0, axis=-1)
        assert good.mean() >= 0.99


class TestUpsampling:
    def test_preserves_carried_vectors(self):
        imgs = translating_quad(32, 48, *TRUTH, seed=20)
        pyr = build_scale_pyramid(imgs, 1)
        flow = np.broadcast_to(np.array(TRUTH, float), (16, 24, 4)).copy()
        field = MatchField(flow=flow, cost=np.zeros((16, 24)), stride=2, image_shape=(32, 48))
        recompute_costs(field, pyr.levels[1])
        fine = upsample_field(field, pyr.levels[0])
        assert fine.stride == 1
        assert fine.flow.shape == (32, 48, 4)
        assert np.array_equal(fine.flow[::2, ::2], field.flow)
        # in-between cells start invalid
        assert np.all(np.isnan(fine.flow[1::2, :]))
        assert np.all(np.isinf(fine.cost[1::2, :]))

    def test_rejects_full_resolution_input(self):
        field = MatchField(
            flow=np.zeros((4, 4, 4)), cost=np.zeros((4, 4)), stride=1, image_shape=(4, 4)
        )
        with pytest.raises(ValueError):
            upsample_field(field, [np.zeros((4, 4))] * 4)


class TestInverseProblem:
    def test_role_mapping_and_mirroring(self):
        base = np.arange(12.0).reshape(3, 4) / 12.0
        il0, il1, ir0, ir1 = base, base + 1 / 24, base + 2 / 24, base + 3 / 24
        inv = inverse_images(il0, il1, ir0, ir1)
        assert np.array_equal(inv[0], ir1[:, ::-1])  # new reference
        assert np.array_equal(inv[1], ir0[:, ::-1])  # new temporal partner
        assert np.array_equal(inv[2], il1[:, ::-1])  # new stereo partner
        assert np.array_equal(inv[3], il0[:, ::-1])  # new cross image

    def test_unflip_negates_horizontal_flow(self):
        flow = np.zeros((2, 3, 4))
        flow[0, 0] = (5.0, 2.0, 3.0, 4.0)
        field = MatchField(flow=flow, cost=np.zeros((2, 3)), stride=1, image_shape=(2, 3))
        out = unflip_inverse_field(field)
        assert np.allclose(out.flow[0, 2], (-5.0, 2.0, 3.0, 4.0))

    def test_static_scene_inverse_recovers_disparity(self):
        # time-static scene: both pairs identical, constant disparity 8
        rng = np.random.default_rng(21)
        left = rng.uniform(0, 1, (48, 64))
        right = np.roll(left, -8, axis=1)
        inv_imgs = inverse_images(left, left, right, right)
        field = match_dense(
            inv_imgs,
            subscales=2,
            iterations=8,
            seed=22,
            features_by_level=[lvl for lvl in build_scale_pyramid(inv_imgs, 2).levels],
        )
        out = unflip_inverse_field(field)
        interior = out.flow[16:32, 24:48]
        good = np.all(
            np.abs(interior - np.array([0.0, 0.0, 8.0, 8.0])) <= 1.0, axis=-1
        )
        assert good.mean() >= 0.9
