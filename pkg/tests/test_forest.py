import math

import numpy as np
import pytest

from hcd.errors import DimensionMismatchError, InputError, ParseError
from hcd.forest import (Forest, Tree, forest_from_json, forest_to_json,
                        leaf_tree, load_forest, save_forest)
from hcd.training import TrainConfig, train_realboost


def random_tree(rng, feature_dim, depth=3):
    """Random full binary tree of the given depth, nodes in preorder."""
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(d):
        i = len(feature)
        if d == 0:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(rng.normal()))
        else:
            feature.append(int(rng.integers(0, feature_dim)))
            threshold.append(float(rng.normal()))
            value.append(0.0)
            left.append(-1)
            right.append(-1)
            left[i] = grow(d - 1)
            right[i] = grow(d - 1)
        return i

    grow(depth)
    return Tree(feature, threshold, left, right, value)


class TestScoring:
    def test_empty_forest_logit_half_is_zero(self):
        forest = Forest(4, "logit", stage0_weight=1.0)
        assert forest.score(np.zeros(4, np.float32), proposal_score=0.5) == 0.0

    def test_single_leaf_tree_constant(self, rng):
        forest = Forest(3, "none", trees=[leaf_tree(0.75)])
        for _ in range(5):
            x = rng.normal(size=3).astype(np.float32)
            assert forest.score(x) == 0.75

    def test_additivity_against_retraversal(self, rng):
        forest = Forest(6, "logit", stage0_weight=0.8,
                        trees=[random_tree(rng, 6) for _ in range(10)])
        X = rng.normal(size=(20, 6)).astype(np.float32)
        s = np.clip(rng.random(20), 0.01, 0.99)
        got = forest.score_many(X, s)
        for i in range(20):
            expected = forest.stage0_term(np.array([s[i]]))[0]
            expected += sum(t.apply_one(X[i]) for t in forest.trees)
            assert got[i] == pytest.approx(expected, abs=1e-12)

    def test_stage0_transforms(self):
        f = Forest(1, "logit", stage0_weight=2.0)
        s = np.array([0.5, 0.9])
        np.testing.assert_allclose(f.stage0_term(s),
                                   2.0 * np.log(s / (1 - s)), atol=1e-12)
        f = Forest(1, "linear", stage0_weight=0.5)
        np.testing.assert_allclose(f.stage0_term(s), 0.5 * s)
        f = Forest(1, "none")
        np.testing.assert_allclose(f.stage0_term(s), 0.0)

    def test_logit_clamps_extreme_scores(self):
        f = Forest(1, "logit", stage0_weight=1.0)
        vals = f.stage0_term(np.array([0.0, 1.0]))
        assert np.isfinite(vals).all()
        assert vals[0] == pytest.approx(math.log(1e-6 / (1 - 1e-6)))

    def test_dimension_mismatch(self, rng):
        forest = Forest(5, "none", trees=[leaf_tree(1.0)])
        with pytest.raises(DimensionMismatchError) as err:
            forest.score_many(np.zeros((2, 7), np.float32))
        assert "5" in str(err.value) and "7" in str(err.value)

    def test_stage0_requires_scores(self):
        forest = Forest(2, "logit", stage0_weight=1.0)
        with pytest.raises(InputError):
            forest.score_many(np.zeros((1, 2), np.float32))


class TestSeparableTraining:
    def test_two_point_problem_single_tree(self):
        X = np.array([[1.0], [0.0]], np.float32)
        y = np.array([1, -1])
        forest = Forest(1, "none")
        train_realboost(X, 1, forest, TrainConfig(stages=(1,), final_trees=1,
                                                  stage0="none"), labels=y)
        tree = forest.trees[0]
        assert tree.feature[0] == 0
        assert 0.0 < tree.threshold[0] < 1.0
        scores = forest.score_many(X)
        assert scores[0] > 0 > scores[1]

    def test_depth_bound_holds(self, rng):
        X = rng.normal(size=(64, 3)).astype(np.float32)
        y = np.where(rng.random(64) < 0.5, 1, -1)
        forest = Forest(3, "none")
        cfg = TrainConfig(stages=(5,), final_trees=5, max_depth=2, stage0="none")
        train_realboost(X, 5, forest, cfg, labels=y)
        assert all(t.depth() <= 2 for t in forest.trees)

    def test_all_one_class_rejected(self):
        X = np.zeros((4, 2), np.float32)
        with pytest.raises(InputError):
            train_realboost(X, 1, Forest(2, "none"), TrainConfig(stage0="none"),
                            labels=np.ones(4, int))

    def test_non_finite_features_rejected(self):
        X = np.full((4, 2), np.nan, np.float32)
        with pytest.raises(InputError):
            train_realboost(X, 1, Forest(2, "none"), TrainConfig(stage0="none"),
                            labels=np.array([1, 1, -1, -1]))


class TestSerialization:
    def test_binary_roundtrip_bit_exact(self, rng, tmp_path):
        forest = Forest(9, "logit", stage0_weight=1.25,
                        trees=[random_tree(rng, 9, d) for d in (0, 1, 3, 5)],
                        config_snapshot={"preset": "test", "nested": {"a": 1}})
        p1, p2 = tmp_path / "a.hcdf", tmp_path / "b.hcdf"
        save_forest(forest, p1)
        loaded = load_forest(p1)
        save_forest(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert loaded.feature_dim == 9
        assert loaded.stage0_transform == "logit"
        assert loaded.stage0_weight == 1.25
        assert loaded.config_snapshot == forest.config_snapshot
        X = rng.normal(size=(10, 9)).astype(np.float32)
        s = np.clip(rng.random(10), 0.01, 0.99)
        np.testing.assert_array_equal(loaded.score_many(X, s),
                                      forest.score_many(X, s))

    def test_json_export_is_lossless(self, rng):
        forest = Forest(4, "linear", stage0_weight=-0.5,
                        trees=[random_tree(rng, 4, 4)])
        clone = forest_from_json(forest_to_json(forest))
        X = rng.normal(size=(8, 4)).astype(np.float32)
        np.testing.assert_array_equal(clone.score_many(X, np.full(8, 0.5)),
                                      forest.score_many(X, np.full(8, 0.5)))
        assert clone.trees[0] == forest.trees[0]

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.hcdf"
        p.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ParseError):
            load_forest(p)

    def test_truncated_file(self, rng, tmp_path):
        p = tmp_path / "t.hcdf"
        save_forest(Forest(3, "none", trees=[random_tree(rng, 3, 2)]), p)
        data = p.read_bytes()
        p.write_bytes(data[:-10])
        with pytest.raises(ParseError) as err:
            load_forest(p)
        assert "truncated" in str(err.value)
