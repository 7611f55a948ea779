"""RealBoost forest training with bootstrapped hard-negative mining.

Sample weights follow w_i ~ exp(-y_i * F(x_i)) with F including the
stage-0 term. Each tree is grown greedily, level by level, choosing the
split that minimizes Z = 2 * sum_leaves sqrt(W+ * W-); leaf values are
0.5 * ln((W+ + eps) / (W- + eps)). Mining appends the highest-scoring
false positives to the negative pool between stages (represented as a
per-sample multiplicity, which is equivalent to appending duplicates).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .boxes import iou_matrix
from .errors import ConfigError, DimensionMismatchError, InputError
from .forest import Forest, Tree

_EXP_CLIP = 500.0


@dataclass(frozen=True)
class TrainConfig:
    """Schedule and knobs for boosted-forest training.

    ``stages`` are cumulative tree totals after each bootstrapping stage;
    mining runs after every stage. When ``final_trees`` exceeds the last
    stage total, one more growth step (no mining after it) brings the
    deployed forest to that size.
    """

    stages: tuple = (64, 128, 256, 512, 1024, 1536)
    final_trees: int = 2048
    max_depth: int = 5
    leaf_smoothing: float = 1e-3
    negatives_per_stage_cap: int = 10000
    rng_seed: int = 0
    hard_negative_score_floor: float = 0.0
    pos_iou: float = 0.5
    neg_iou: float = 0.5
    stage0: str = "logit"  # "logit" | "linear" | "none"
    feature_fraction: float = 1.0  # per-tree split-search subsample

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(int(s) for s in self.stages))
        if not self.stages or self.stages[0] <= 0:
            raise ConfigError("stages must hold positive cumulative tree totals")
        if any(b <= a for a, b in zip(self.stages, self.stages[1:])):
            raise ConfigError(f"stage totals must be strictly increasing: {self.stages}")
        if self.final_trees < self.stages[-1]:
            raise ConfigError("final_trees must be >= the last stage total")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.leaf_smoothing <= 0:
            raise ConfigError(f"leaf_smoothing must be > 0, got {self.leaf_smoothing}")
        if not 0.0 <= self.neg_iou <= self.pos_iou <= 1.0:
            raise ConfigError(
                f"need 0 <= neg_iou <= pos_iou <= 1, got {self.neg_iou}/{self.pos_iou}")
        if self.stage0 not in ("logit", "linear", "none"):
            raise ConfigError(f"unknown stage0 transform {self.stage0!r}")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ConfigError(
                f"feature_fraction must be in (0, 1], got {self.feature_fraction}")


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    label: int
    proposal_score: float = 0.5
    weight: float = 1.0


@dataclass(frozen=True)
class ImageSamples:
    """Per-image training material produced by a TrainingSource."""

    image_id: str
    features: np.ndarray  # (n, F) float32
    labels: np.ndarray  # (n,) int, +1 / -1 / 0 (0 = excluded)
    proposal_scores: np.ndarray  # (n,) float64


class ArrayTrainingSource:
    """TrainingSource over pre-extracted per-image arrays."""

    def __init__(self, parts):
        self.parts = list(parts)

    def images(self):
        return iter(self.parts)


def label_proposals(proposals, ground_truth, pos_iou=0.5, neg_iou=0.5):
    """+1 where max IoU >= pos_iou, -1 where < neg_iou, 0 in between."""
    if not 0.0 <= neg_iou <= pos_iou <= 1.0:
        raise ConfigError(f"need 0 <= neg_iou <= pos_iou <= 1, got {neg_iou}/{pos_iou}")
    n = len(proposals)
    if n == 0:
        return np.zeros(0, np.int8)
    if len(ground_truth) == 0:
        return np.full(n, -1, np.int8)
    best = iou_matrix([p.box for p in proposals], list(ground_truth)).max(axis=1)
    return np.where(best >= pos_iou, 1, np.where(best < neg_iou, -1, 0)).astype(np.int8)


def presort_features(X):
    """Per-feature stable sort of X, as (F, N) value and index arrays."""
    order = np.argsort(X, axis=0, kind="stable").astype(np.int32)
    vals = np.take_along_axis(X, order, axis=0)
    return np.ascontiguousarray(vals.T), np.ascontiguousarray(order.T)


def _unpack_samples(samples, labels, proposal_scores, sample_weight):
    if isinstance(samples, np.ndarray):
        X = samples
        if labels is None:
            raise InputError("labels required when passing a feature matrix")
    else:
        samples = list(samples)
        X = np.stack([np.asarray(getattr(s.features, "values", s.features), np.float32)
                      for s in samples])
        labels = np.asarray([s.label for s in samples])
        proposal_scores = np.asarray([s.proposal_score for s in samples], np.float64)
        sample_weight = np.asarray([s.weight for s in samples], np.float64)
    X = np.ascontiguousarray(X, np.float32)
    if not np.isfinite(X).all():
        raise InputError("non-finite feature values in training samples")
    y = np.asarray(labels, np.int64)
    if not np.isin(y, (-1, 1)).all():
        raise InputError("labels must be +1 or -1")
    if (y > 0).all() or (y < 0).all():
        raise InputError("training needs at least one sample of each class")
    n = X.shape[0]
    s = (np.full(n, 0.5) if proposal_scores is None
         else np.asarray(proposal_scores, np.float64))
    m = np.ones(n) if sample_weight is None else np.asarray(sample_weight, np.float64)
    if (m < 0).any() or not np.isfinite(m).all():
        raise InputError("sample weights must be finite and >= 0")
    return X, y, s, m


def _fit_tree(X, presorted, w, is_pos, cfg, feat_ids):
    """Grow one tree on weights w; returns (Tree, per-sample leaf index)."""
    n = X.shape[0]
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    node_of = np.zeros(n, np.int64)
    wp = np.where(is_pos != 0, w, 0.0)
    wn = np.where(is_pos != 0, 0.0, w)
    vals_sorted, order = presorted if presorted is not None else (None, None)
    level = [0]
    for _depth in range(cfg.max_depth):
        if not level:
            break
        n_nodes = len(feature)
        node_wpos = np.zeros(n_nodes)
        node_wneg = np.zeros(n_nodes)
        np.add.at(node_wpos, node_of, wp)
        np.add.at(node_wneg, node_of, wn)
        active = [k for k in level if node_wpos[k] > 0.0 and node_wneg[k] > 0.0]
        if not active:
            break
        node_ids = np.asarray(active, np.int64)
        best_z, best_f, best_t = _kernels.best_splits_level(
            X, vals_sorted, order, w, is_pos, node_of, node_ids,
            node_wpos[node_ids], node_wneg[node_ids], feat_ids)
        level = []
        for ki, k in enumerate(active):
            z_node = 2.0 * math.sqrt(node_wpos[k] * node_wneg[k])
            if best_f[ki] < 0 or not best_z[ki] < z_node:
                continue
            li = len(feature)
            feature.extend((-1, -1))
            threshold.extend((0.0, 0.0))
            left.extend((-1, -1))
            right.extend((-1, -1))
            feature[k] = int(best_f[ki])
            threshold[k] = float(best_t[ki])
            left[k] = li
            right[k] = li + 1
            rows = np.nonzero(node_of == k)[0]
            goes_left = X[rows, feature[k]] <= threshold[k]
            node_of[rows[goes_left]] = li
            node_of[rows[~goes_left]] = li + 1
            level.extend((li, li + 1))
    n_nodes = len(feature)
    node_wpos = np.zeros(n_nodes)
    node_wneg = np.zeros(n_nodes)
    np.add.at(node_wpos, node_of, wp)
    np.add.at(node_wneg, node_of, wn)
    value = np.zeros(n_nodes)
    feat_arr = np.asarray(feature, np.int32)
    leaves = feat_arr < 0
    eps = cfg.leaf_smoothing
    value[leaves] = 0.5 * np.log((node_wpos[leaves] + eps) / (node_wneg[leaves] + eps))
    return Tree(feat_arr, threshold, left, right, value), node_of.copy()


def fit_stage0_weight(transform, proposal_scores, labels, sample_weight=None,
                      bracket=32.0):
    """Scale of the stage-0 term, minimizing exponential loss by bisection."""
    if transform == "none":
        return 0.0
    probe = Forest(1, transform, 1.0)
    t = probe.stage0_term(np.asarray(proposal_scores, np.float64))
    yt = np.asarray(labels, np.float64) * t
    m = np.ones(len(yt)) if sample_weight is None else np.asarray(sample_weight, np.float64)
    if np.abs(yt).max(initial=0.0) == 0.0:
        return 0.0

    def grad(a):
        return float(np.sum(-m * yt * np.exp(np.clip(-a * yt, -_EXP_CLIP, _EXP_CLIP))))

    lo, hi = -bracket, bracket
    if grad(lo) >= 0.0:
        return lo
    if grad(hi) <= 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if grad(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def train_realboost(samples, count, forest, cfg, labels=None, proposal_scores=None,
                    sample_weight=None, log=None, presorted=None):
    """Append ``count`` boosted trees to the forest; returns the forest.

    ``samples`` is either an (n, F) float32 matrix (with ``labels``) or a
    sequence of LabeledSample. ``log``, when given, collects one record
    per round: round index, normalized exponential loss after the round,
    and the new tree's weighted error against the weights it was fit on.
    """
    X, y, scores, m = _unpack_samples(samples, labels, proposal_scores, sample_weight)
    if forest.feature_dim != X.shape[1]:
        raise DimensionMismatchError(forest.feature_dim, X.shape[1])
    n, n_features = X.shape
    if presorted is None and _kernels.NEEDS_PRESORT:
        presorted = presort_features(X)
    is_pos = (y > 0).astype(np.uint8)
    margins = forest.score_many(X, scores)
    total_m = m.sum()
    rng = np.random.default_rng(cfg.rng_seed + forest.num_trees)
    for _ in range(count):
        w = m * np.exp(np.clip(-y * margins, -_EXP_CLIP, _EXP_CLIP))
        w /= w.sum()
        if cfg.feature_fraction < 1.0:
            k = max(1, int(round(cfg.feature_fraction * n_features)))
            feat_ids = np.sort(rng.choice(n_features, size=k, replace=False)).astype(np.int64)
        else:
            feat_ids = np.arange(n_features, dtype=np.int64)
        tree, leaf_of = _fit_tree(X, presorted, w, is_pos, cfg, feat_ids)
        contrib = tree.value[leaf_of]
        forest.add_tree(tree)
        werr = float(w[np.sign(contrib) != y].sum())
        margins = margins + contrib
        loss = float(np.sum(m * np.exp(np.clip(-y * margins, -_EXP_CLIP, _EXP_CLIP)))
                     / total_m)
        if log is not None:
            log.append({"round": forest.num_trees, "train_loss": loss,
                        "weighted_error": werr})
    return forest


def bootstrap_train(source, cfg, stage_callback=None):
    """Run the full bootstrapped schedule over a TrainingSource.

    Returns (forest, report) where report holds per-round and per-stage
    records. ``stage_callback(forest, stage_index)`` fires after each
    mining pass, for instrumentation.
    """
    feats, ys, scores_list = [], [], []
    for part in source.images():
        keep = part.labels != 0
        if keep.any():
            feats.append(np.asarray(part.features, np.float32)[keep])
            ys.append(np.asarray(part.labels, np.int64)[keep])
            scores_list.append(np.asarray(part.proposal_scores, np.float64)[keep])
    if not feats:
        raise InputError("training source produced no labeled samples")
    X = np.ascontiguousarray(np.concatenate(feats))
    y = np.concatenate(ys)
    scores = np.concatenate(scores_list)
    if not (y > 0).any():
        raise InputError("empty positive pool: no proposal or ground truth got label +1")
    if not (y < 0).any():
        raise InputError("no negative samples in the training pool")

    forest = Forest(X.shape[1], cfg.stage0, 0.0)
    if cfg.stage0 != "none":
        forest.stage0_weight = fit_stage0_weight(cfg.stage0, scores, y)
    presorted = presort_features(X) if _kernels.NEEDS_PRESORT else None
    m = np.ones(X.shape[0])
    rounds = []
    stages = []
    schedule = list(cfg.stages)
    if cfg.final_trees > cfg.stages[-1]:
        schedule.append(cfg.final_trees)
    for si, total in enumerate(schedule):
        train_realboost(X, count=total - forest.num_trees, forest=forest, cfg=cfg,
                        labels=y, proposal_scores=scores, sample_weight=m,
                        log=rounds, presorted=presorted)
        mined = np.empty(0, np.int64)
        if si < len(cfg.stages):
            s_all = forest.score_many(X, scores)
            cand = np.nonzero((y < 0) & (s_all >= cfg.hard_negative_score_floor))[0]
            mined = cand[np.argsort(-s_all[cand], kind="stable")]
            mined = mined[:cfg.negatives_per_stage_cap]
            m[mined] += 1.0
        stages.append({
            "stage": si + 1,
            "trees_total": forest.num_trees,
            "mined": int(len(mined)),
            "mined_indices": mined.tolist(),
            "train_loss": rounds[-1]["train_loss"] if rounds else None,
        })
        if stage_callback is not None:
            stage_callback(forest, si + 1)
    return forest, {"rounds": rounds, "stages": stages}


def write_training_log(rounds, path):
    """Per-round CSV: round, train loss, tree weighted error."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "train_loss", "weighted_error"])
        for rec in rounds:
            writer.writerow([rec["round"], repr(rec["train_loss"]),
                             repr(rec["weighted_error"])])
