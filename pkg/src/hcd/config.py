"""Run configuration: bank/resolution presets, file loading, config hash."""

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .channels import ChannelConfig
from .errors import ConfigError, ParseError
from .training import TrainConfig

_BANKS = ("hogluv", "cb11", "rf9", "none")  # "none" = CNN features only
_ROI_SIZES = (7, 14, 20, 28)


@dataclass(frozen=True)
class RunConfig:
    """Everything that shapes a pipeline run.

    Fields that only steer execution (paths, worker count) are excluded
    from the config hash so they never change results.
    """

    bank: str = "rf9"
    handcrafted_roi: int = 20
    cnn_roi: int = 7
    use_cnn: bool = False
    l2_normalize_cnn: bool = False
    cb11_cell_px: int = 4
    rf_cell_px: int = 1
    channels: ChannelConfig = field(default_factory=ChannelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    nms_iou: float = 0.7
    train_topk: int = 1000
    test_topk: int = 100
    final_nms_iou: float = 0.5  # NMS over scored detections; None disables
    eval_subsets: tuple = ("reasonable",)
    eval_iou: float = 0.5
    standardize_aspect: float = 0.0  # >0: force w = ratio * h before matching
    manifest: str = None
    output_dir: str = None
    jobs: int = None

    def __post_init__(self):
        if self.bank not in _BANKS:
            raise ConfigError(f"bank must be one of {_BANKS}, got {self.bank!r}")
        if self.bank == "none" and not self.use_cnn:
            raise ConfigError("bank 'none' needs use_cnn=true (no features otherwise)")
        if self.handcrafted_roi not in _ROI_SIZES:
            raise ConfigError(
                f"handcrafted_roi must be one of {_ROI_SIZES}, got {self.handcrafted_roi}")
        if self.cnn_roi < 1:
            raise ConfigError(f"cnn_roi must be >= 1, got {self.cnn_roi}")
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ConfigError(f"nms_iou must be in [0, 1], got {self.nms_iou}")
        if self.train_topk < 1 or self.test_topk < 1:
            raise ConfigError("top-k counts must be >= 1")
        for name in self.eval_subsets:
            from .evaluation import STANDARD_SUBSETS
            if name not in STANDARD_SUBSETS:
                raise ConfigError(f"unknown eval subset {name!r} "
                                  f"(have {sorted(STANDARD_SUBSETS)})")
        object.__setattr__(self, "eval_subsets", tuple(self.eval_subsets))

    def to_dict(self, include_paths=True):
        d = dataclasses.asdict(self)
        d["channels"] = dataclasses.asdict(self.channels)
        d["train"] = dataclasses.asdict(self.train)
        d["train"]["stages"] = list(self.train.stages)
        d["eval_subsets"] = list(self.eval_subsets)
        if not include_paths:
            for key in ("manifest", "output_dir", "jobs"):
                d.pop(key, None)
        return d

    def config_hash(self):
        """Short hex digest over the fields that shape produced artifacts.

        Evaluation-stage knobs (subsets, matching IoU, box standardization)
        are excluded: they never change channels, forests or detections,
        and one detections file is routinely evaluated under several
        subsets. Those knobs are recorded in summary.json instead.
        """
        d = self.to_dict(include_paths=False)
        for key in ("eval_subsets", "eval_iou", "standardize_aspect"):
            d.pop(key, None)
        blob = json.dumps(d, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_from_dict(d):
    d = dict(d)
    if "channels" in d and isinstance(d["channels"], dict):
        d["channels"] = ChannelConfig(**d["channels"])
    if "train" in d and isinstance(d["train"], dict):
        td = dict(d["train"])
        if "stages" in td:
            td["stages"] = tuple(td["stages"])
        d["train"] = TrainConfig(**td)
    if "eval_subsets" in d:
        d["eval_subsets"] = tuple(d["eval_subsets"])
    try:
        return RunConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc


def load_config(path):
    """Read a RunConfig from a JSON or TOML file."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            if sys.version_info >= (3, 11):
                import tomllib
            else:
                import tomli as tomllib
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        else:
            with open(path) as fh:
                d = json.load(fh)
    except (json.JSONDecodeError, ValueError) as exc:
        raise ParseError(f"bad config file: {exc}", path=str(path)) from exc
    return config_from_dict(d)


def apply_overrides(cfg, overrides):
    """Apply dotted key=value overrides, e.g. train.rng_seed=3, bank=cb11."""
    d = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings
        target = d
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if p not in target or not isinstance(target[p], dict):
                raise ConfigError(f"unknown config section {p!r} in {key!r}")
            target = target[p]
        if parts[-1] not in target:
            raise ConfigError(f"unknown config key {key!r}")
        target[parts[-1]] = value
    return config_from_dict(d)


# Ablation-arm presets: the three handcrafted banks at 20x20 RoI resolution
# without CNN features, and the fused rf9 + ingested-CNN configuration.
PRESETS = {
    "table1-hogluv": {"bank": "hogluv", "handcrafted_roi": 20, "use_cnn": False},
    "table1-cb11": {"bank": "cb11", "handcrafted_roi": 20, "use_cnn": False},
    "table1-rf": {"bank": "rf9", "handcrafted_roi": 20, "use_cnn": False},
    "table2-rf-conv3": {"bank": "rf9", "handcrafted_roi": 20, "use_cnn": True,
                        "cnn_roi": 7},
    # desk-scale schedule for the bundled synthetic dataset
    "toy-rf": {
        "bank": "rf9", "handcrafted_roi": 20, "use_cnn": False,
        "train": {"stages": [8, 16, 24, 32, 48, 64], "final_trees": 80,
                  "feature_fraction": 0.25, "rng_seed": 0},
    },
}


def preset_config(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    return config_from_dict(PRESETS[name])
