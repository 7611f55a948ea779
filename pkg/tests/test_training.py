import numpy as np
import pytest

from hcd.boxes import Box, Proposal
from hcd.errors import ConfigError, InputError
from hcd.forest import Forest, save_forest
from hcd.training import (ArrayTrainingSource, ImageSamples, LabeledSample,
                          TrainConfig, bootstrap_train, fit_stage0_weight,
                          label_proposals, train_realboost)


def gaussian_problem(rng, n=120, dim=4, sep=2.0):
    npos = n // 2
    X = rng.normal(0.0, 1.0, (n, dim)).astype(np.float32)
    X[:npos, 0] += sep
    y = np.array([1] * npos + [-1] * (n - npos))
    return X, y


def overlapping_source(rng, n_images=5, per_image=40, hard=6):
    """Source with planted hard negatives: near-duplicates of positives."""
    parts = []
    hard_ids = []
    offset = 0
    for i in range(n_images):
        X = rng.normal(0.0, 1.0, (per_image, 6)).astype(np.float32)
        y = np.where(rng.random(per_image) < 0.4, 1, -1).astype(np.int8)
        if not (y > 0).any():
            y[0] = 1
        if not (y < 0).any():
            y[1] = -1
        X[y > 0, 0] += 2.5
        neg = np.nonzero(y < 0)[0][:hard]
        X[neg, 0] += 2.0  # hard: close to the positive cluster
        scores = np.clip(0.5 + 0.25 * y + rng.normal(0, 0.2, per_image), 0.01, 0.99)
        parts.append(ImageSamples(f"im{i}", X, y, scores))
        hard_ids.extend(offset + j for j in neg)
        offset += per_image
    return ArrayTrainingSource(parts), np.array(hard_ids)


class TestLabelProposals:
    def gt(self):
        return [Box(10, 10, 20, 40)]

    def test_identical_box_is_positive(self):
        props = [Proposal(Box(10, 10, 20, 40), 0.5, "i")]
        assert label_proposals(props, self.gt()).tolist() == [1]

    def test_disjoint_box_is_negative(self):
        props = [Proposal(Box(100, 100, 5, 5), 0.5, "i")]
        assert label_proposals(props, self.gt()).tolist() == [-1]

    def test_half_shift_is_negative_at_default_threshold(self):
        # 50% area shift of an equal box has IoU exactly 1/3
        props = [Proposal(Box(20, 10, 20, 40), 0.5, "i")]
        assert label_proposals(props, self.gt()).tolist() == [-1]

    def test_gap_zone_is_excluded(self):
        props = [Proposal(Box(14, 10, 20, 40), 0.5, "i")]  # IoU = 16/24 = 0.667
        labels = label_proposals(props, self.gt(), pos_iou=0.8, neg_iou=0.4)
        assert labels.tolist() == [0]

    def test_no_ground_truth_all_negative(self):
        props = [Proposal(Box(1, 1, 2, 2), 0.5, "i")]
        assert label_proposals(props, []).tolist() == [-1]

    def test_threshold_validation(self):
        with pytest.raises(ConfigError):
            label_proposals([], [], pos_iou=0.3, neg_iou=0.5)


class TestTrainConfig:
    def test_stage_totals_must_increase(self):
        with pytest.raises(ConfigError):
            TrainConfig(stages=(64, 64))
        with pytest.raises(ConfigError):
            TrainConfig(stages=(64, 32))

    def test_final_trees_not_below_last_stage(self):
        with pytest.raises(ConfigError):
            TrainConfig(stages=(8, 16), final_trees=12)

    def test_default_schedule_matches_deployment_size(self):
        cfg = TrainConfig()
        assert cfg.stages == (64, 128, 256, 512, 1024, 1536)
        assert cfg.final_trees == 2048
        assert cfg.max_depth == 5


class TestRealBoost:
    def test_loss_non_increasing_and_weak_learners_useful(self, rng):
        X, y = gaussian_problem(rng, sep=1.0)
        forest = Forest(X.shape[1], "none")
        log = []
        train_realboost(X, 20, forest, TrainConfig(stages=(20,), final_trees=20,
                                                   stage0="none"),
                        labels=y, log=log)
        losses = [r["train_loss"] for r in log]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
        assert all(r["weighted_error"] < 0.5 for r in log)

    def test_monotone_feature_transform_preserves_structure(self, rng):
        X, y = gaussian_problem(rng, n=80, dim=3, sep=1.2)
        X2 = X.copy()
        X2[:, 1] = np.exp(X2[:, 1])  # strictly increasing transform
        cfg = TrainConfig(stages=(6,), final_trees=6, stage0="none", rng_seed=5)
        f1, f2 = Forest(3, "none"), Forest(3, "none")
        train_realboost(X, 6, f1, cfg, labels=y)
        train_realboost(X2, 6, f2, cfg, labels=y)
        for t1, t2 in zip(f1.trees, f2.trees):
            np.testing.assert_array_equal(t1.feature, t2.feature)
            np.testing.assert_array_equal(t1.left, t2.left)
            np.testing.assert_allclose(t1.value, t2.value, atol=1e-9)
        np.testing.assert_allclose(f1.score_many(X), f2.score_many(X2), atol=1e-9)

    def test_labeled_sample_api(self, rng):
        X, y = gaussian_problem(rng, n=30, dim=2)
        samples = [LabeledSample(X[i], int(y[i]), 0.5, 1.0) for i in range(30)]
        forest = Forest(2, "none")
        train_realboost(samples, 3, forest,
                        TrainConfig(stages=(3,), final_trees=3, stage0="none"))
        assert forest.num_trees == 3

    def test_feature_subsampling_is_seeded(self, rng):
        X, y = gaussian_problem(rng, n=60, dim=8)
        cfg = TrainConfig(stages=(4,), final_trees=4, stage0="none",
                          feature_fraction=0.5, rng_seed=9)
        f1, f2 = Forest(8, "none"), Forest(8, "none")
        train_realboost(X, 4, f1, cfg, labels=y)
        train_realboost(X, 4, f2, cfg, labels=y)
        for t1, t2 in zip(f1.trees, f2.trees):
            assert t1 == t2


class TestStage0:
    def test_informative_scores_get_positive_weight(self, rng):
        y = np.where(rng.random(200) < 0.5, 1, -1)
        scores = np.clip(0.5 + 0.3 * y + rng.normal(0, 0.1, 200), 0.01, 0.99)
        a = fit_stage0_weight("logit", scores, y)
        assert a > 0.1

    def test_uninformative_scores_get_near_zero_weight(self, rng):
        y = np.where(rng.random(400) < 0.5, 1, -1)
        scores = np.full(400, 0.5)
        assert fit_stage0_weight("logit", scores, y) == 0.0

    def test_none_transform_zero(self):
        assert fit_stage0_weight("none", np.array([0.9]), np.array([1])) == 0.0

    def test_stage0_lowers_first_stage_loss(self, rng):
        X, y = gaussian_problem(rng, n=150, dim=4, sep=0.8)
        scores = np.clip(0.5 + 0.28 * y + rng.normal(0, 0.15, 150), 0.01, 0.99)
        src = ArrayTrainingSource(
            [ImageSamples("im0", X, y.astype(np.int8), scores)])
        losses = {}
        for mode in ("logit", "none"):
            cfg = TrainConfig(stages=(6,), final_trees=6, stage0=mode, rng_seed=2)
            _, report = bootstrap_train(src, cfg)
            losses[mode] = report["rounds"][-1]["train_loss"]
        assert losses["logit"] < losses["none"]


class TestBootstrap:
    def test_stage_totals_follow_schedule(self, rng):
        src, _ = overlapping_source(rng)
        cfg = TrainConfig(stages=(2, 4, 6, 8, 10, 12), final_trees=16, rng_seed=0)
        forest, report = bootstrap_train(src, cfg)
        assert forest.num_trees == 16
        assert [s["trees_total"] for s in report["stages"]] == [2, 4, 6, 8, 10, 12, 16]
        assert len(report["stages"]) == 7  # 6 mined stages + final growth

    def test_mined_negatives_are_hot_false_positives(self, rng):
        src, _ = overlapping_source(rng)
        cfg = TrainConfig(stages=(1, 2, 3, 4, 5, 6), final_trees=6, rng_seed=0,
                          hard_negative_score_floor=-1e9,
                          negatives_per_stage_cap=10)
        _, report = bootstrap_train(src, cfg)
        y = np.concatenate([p.labels for p in src.parts])
        for stage in report["stages"][:-1]:
            assert stage["mined"] == 10  # cap respected with floor wide open
            assert np.all(y[stage["mined_indices"]] == -1)

    def test_score_floor_blocks_mining(self, rng):
        src, _ = overlapping_source(rng)
        cfg = TrainConfig(stages=(1, 2), final_trees=2, rng_seed=0,
                          hard_negative_score_floor=1e9)
        _, report = bootstrap_train(src, cfg)
        assert all(s["mined"] == 0 for s in report["stages"])

    def test_planted_hard_negatives_sink_after_mining(self, rng):
        src, hard_ids = overlapping_source(rng, n_images=6, per_image=50, hard=8)
        cfg = TrainConfig(stages=(4, 8, 12, 16, 20, 24), final_trees=24,
                          rng_seed=1, hard_negative_score_floor=-1e9)
        X = np.concatenate([p.features for p in src.parts])
        scores = np.concatenate([p.proposal_scores for p in src.parts])
        snapshots = {}

        def callback(forest, stage):
            snapshots[stage] = forest.score_many(X, scores)[hard_ids].mean()

        bootstrap_train(src, cfg, stage_callback=callback)
        later = [snapshots[s] for s in sorted(snapshots) if s >= 2]
        assert min(later) < snapshots[1]
        assert snapshots[max(snapshots)] < snapshots[1]

    def test_empty_positive_pool_rejected(self, rng):
        X = rng.normal(0, 1, (20, 3)).astype(np.float32)
        src = ArrayTrainingSource([ImageSamples(
            "im0", X, np.full(20, -1, np.int8), np.full(20, 0.5))])
        with pytest.raises(InputError, match="positive"):
            bootstrap_train(src, TrainConfig(stages=(2,), final_trees=2))

    def test_fixed_seed_reproduces_forest_file(self, rng, tmp_path):
        src, _ = overlapping_source(rng)
        cfg = TrainConfig(stages=(2, 4), final_trees=6, rng_seed=7,
                          feature_fraction=0.5)
        f1, _ = bootstrap_train(src, cfg)
        f2, _ = bootstrap_train(src, cfg)
        p1, p2 = tmp_path / "f1.hcdf", tmp_path / "f2.hcdf"
        save_forest(f1, p1)
        save_forest(f2, p2)
        assert p1.read_bytes() == p2.read_bytes()
