import json

import numpy as np
import pytest

from hcd.boxes import Box, Proposal
from hcd.channels import ChannelStack
from hcd.config import RunConfig, config_from_dict, preset_config
from hcd.errors import ConfigError, InputError
from hcd.io import load_manifest, save_stack
from hcd.pipeline import (bank_channel_count, detect_entry, evaluate_run,
                          feature_dim, proposal_features, run_detect, train_run)


TOY = {"stages": [2, 3], "final_trees": 4, "rng_seed": 0}


def cnn_stack(rng, c=4, h=60, w=80, ds=4):
    planes = rng.random((c, h, w)).astype(np.float32)
    return ChannelStack(tuple(f"f{i}" for i in range(c)), planes, "cnn:synth", ds)


class TestFeatureDim:
    def test_bank_channel_counts(self):
        assert bank_channel_count(RunConfig(bank="hogluv")) == 10
        assert bank_channel_count(RunConfig(bank="cb11")) == 110
        assert bank_channel_count(RunConfig(bank="rf9")) == 90
        assert bank_channel_count(RunConfig(bank="none", use_cnn=True)) == 0

    def test_fused_dim(self):
        cfg = RunConfig(bank="rf9", handcrafted_roi=20, use_cnn=True, cnn_roi=7)
        assert feature_dim(cfg, cnn_channels=256) == 90 * 400 + 256 * 49

    def test_bank_none_requires_cnn(self):
        with pytest.raises(ConfigError):
            RunConfig(bank="none", use_cnn=False)


class TestProposalFeatures:
    def test_l2_normalization_applies_to_cnn_block_only(self, rng):
        hand = ChannelStack(("m",), rng.random((1, 60, 80)).astype(np.float32),
                            "hogluv", 1)
        cnn = cnn_stack(rng)
        props = [Proposal(Box(8, 8, 40, 48), 0.5, "i")]
        cfg = config_from_dict({"l2_normalize_cnn": True})
        X, layout = proposal_features([(hand, 4), (cnn, 3)], props, cfg)
        hand_len = 1 * 16
        cnn_part = X[0, hand_len:]
        assert np.linalg.norm(cnn_part) == pytest.approx(1.0, abs=1e-5)
        cfg_off = config_from_dict({"l2_normalize_cnn": False})
        X2, _ = proposal_features([(hand, 4), (cnn, 3)], props, cfg_off)
        np.testing.assert_array_equal(X2[0, :hand_len], X[0, :hand_len])
        assert np.linalg.norm(X2[0, hand_len:]) > 1.0


class TestCnnConsistency:
    def test_mismatched_cnn_dims_rejected(self, tiny_dataset, rng, tmp_path):
        manifest = load_manifest(tiny_dataset["test"])
        entry = manifest.entries[0]
        bad = tmp_path / "bad.hcdt"
        save_stack(cnn_stack(rng, c=2, h=10, w=10, ds=4), bad)
        object.__setattr__(entry, "cnn_tensor", str(bad))
        cfg = config_from_dict({"bank": "none", "use_cnn": True, "train": TOY})
        from hcd.forest import Forest, leaf_tree
        forest = Forest(2 * 49, "none", trees=[leaf_tree(0.0)])
        with pytest.raises(InputError, match="inconsistent"):
            detect_entry(manifest, entry, cfg, forest)

    def test_missing_cnn_tensor_named(self, tiny_dataset):
        manifest = load_manifest(tiny_dataset["test"])
        entry = manifest.entries[0]
        object.__setattr__(entry, "cnn_tensor", None)
        cfg = config_from_dict({"bank": "none", "use_cnn": True, "train": TOY})
        from hcd.forest import Forest, leaf_tree
        forest = Forest(10, "none", trees=[leaf_tree(0.0)])
        with pytest.raises(InputError, match=entry.image_id):
            detect_entry(manifest, entry, cfg, forest)


class TestAspectStandardization:
    def test_hook_changes_matching(self, tiny_dataset):
        manifest = load_manifest(tiny_dataset["test"])
        gt = manifest.entries[0].annotations[0]
        # detection with the right height but a much wider box
        det = Proposal(Box(gt.box.x - gt.box.w, gt.box.y, gt.box.w * 3, gt.box.h),
                       0.9, manifest.entries[0].image_id)
        plain = config_from_dict({"eval_subsets": ["reasonable"]})
        std = config_from_dict({"eval_subsets": ["reasonable"],
                                "standardize_aspect": 0.41})
        mr_plain = evaluate_run([det], manifest, plain)["reasonable"].log_avg_mr
        mr_std = evaluate_run([det], manifest, std)["reasonable"].log_avg_mr
        # standardized widths make the wide detection match its pedestrian
        assert mr_std < mr_plain


class TestRunDeterminismAndJobs:
    def test_detect_parallel_matches_serial(self, tiny_dataset):
        manifest_train = load_manifest(tiny_dataset["train"])
        manifest_test = load_manifest(tiny_dataset["test"])
        cfg = config_from_dict({"bank": "hogluv", "handcrafted_roi": 7,
                                "train": TOY})
        forest, _ = train_run(manifest_train, cfg)
        serial = run_detect(manifest_test, cfg, forest, jobs=1)
        parallel = run_detect(manifest_test, cfg, forest, jobs=2)
        assert serial == parallel

    def test_preset_roundtrip_hash_stability(self):
        a = preset_config("table1-rf")
        b = config_from_dict(json.loads(json.dumps(a.to_dict())))
        assert a.config_hash() == b.config_hash()
