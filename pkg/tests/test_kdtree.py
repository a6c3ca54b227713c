"""kD-tree candidate pools and the per-row epipolar forest."""

import numpy as np
import pytest

from sceneflow.kdtree import EpipolarForest, KdTree


class TestKdTree:
    def test_leaf_pool_size(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(200, 16))
        tree = KdTree(data, leaf_size=8)
        for i in range(0, 200, 7):
            cand = tree.query(data[i])
            assert 1 <= cand.size <= 8

    def test_query_finds_exact_element(self):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(300, 16))
        tree = KdTree(data, leaf_size=8)
        hits = sum(i in tree.query(data[i]) for i in range(300))
        # exact descriptors descend into their own leaf
        assert hits == 300

    def test_small_input_single_leaf(self):
        data = np.arange(12.0).reshape(4, 3)
        tree = KdTree(data, leaf_size=8)
        assert set(tree.query(data[2])) == {0, 1, 2, 3}

    def test_duplicate_data_is_one_leaf(self):
        data = np.ones((50, 4))
        tree = KdTree(data, leaf_size=8)
        assert tree.query(data[0]).size == 50

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            KdTree(np.empty((0, 4)))


class TestEpipolarForest:
    def test_candidates_share_query_row(self):
        rng = np.random.default_rng(2)
        xs, ys = np.meshgrid(np.arange(20), np.arange(10))
        pixels = np.column_stack([xs.ravel(), ys.ravel()])
        desc = rng.normal(size=(200, 16))
        forest = EpipolarForest(pixels, desc, leaf_size=8)
        for row in (0, 3, 9):
            cand = forest.query(rng.normal(size=16), row)
            assert cand.size >= 1
            assert np.all(pixels[cand, 1] == row)

    def test_unknown_row_is_empty(self):
        pixels = np.array([[0, 0], [1, 0]])
        forest = EpipolarForest(pixels, np.eye(2))
        assert forest.query(np.zeros(2), 5).size == 0
