"""Real-valued decision forest: structure, scoring and serialization.

The additive classifier is F(x) = a * T(s) + sum_t tree_t(x), where s is
the proposal score feeding the stage-0 term and T is a logit, linear or
null transform. Trees store flat node arrays; node 0 is the root and
feature == -1 marks a leaf.
"""

import json
import struct

import numpy as np

from . import _kernels
from .errors import DimensionMismatchError, InputError, ParseError

MAGIC = b"HCDF"
VERSION = 1
_TRANSFORMS = ("none", "logit", "linear")
_SCORE_CLAMP = 1e-6
_HEADER = struct.Struct("<4sIIBdI")
_NODE_DTYPE = np.dtype([("feature", "<i4"), ("threshold", "<f8"), ("value", "<f8")])


class Tree:
    """One decision tree as parallel node arrays."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, np.int32)
        self.threshold = np.asarray(threshold, np.float64)
        self.left = np.asarray(left, np.int32)
        self.right = np.asarray(right, np.int32)
        self.value = np.asarray(value, np.float64)
        if not np.isfinite(self.value[self.feature < 0]).all():
            raise InputError("non-finite leaf values")

    @property
    def num_nodes(self):
        return len(self.feature)

    def depth(self):
        """Longest root-to-leaf path in edges."""
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def apply_one(self, x):
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return float(self.value[i])

    def __eq__(self, other):
        return (isinstance(other, Tree)
                and np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right)
                and np.array_equal(self.value, other.value))


def leaf_tree(value):
    """Single-leaf tree returning a constant."""
    return Tree([-1], [0.0], [-1], [-1], [float(value)])


class Forest:
    """Ordered trees plus the stage-0 rule seeded from proposal scores."""

    def __init__(self, feature_dim, stage0_transform="none", stage0_weight=0.0,
                 trees=None, config_snapshot=None):
        if stage0_transform not in _TRANSFORMS:
            raise InputError(f"unknown stage-0 transform {stage0_transform!r}")
        if feature_dim < 1:
            raise InputError(f"feature_dim must be >= 1, got {feature_dim}")
        self.feature_dim = int(feature_dim)
        self.stage0_transform = stage0_transform
        self.stage0_weight = float(stage0_weight)
        self.trees = list(trees) if trees else []
        self.config_snapshot = config_snapshot
        self._packed = None

    @property
    def num_trees(self):
        return len(self.trees)

    def add_tree(self, tree):
        self.trees.append(tree)
        self._packed = None

    def _pack(self):
        if self._packed is None:
            feat, thr, left, right, value, roots = [], [], [], [], [], []
            off = 0
            for t in self.trees:
                roots.append(off)
                feat.append(t.feature)
                thr.append(t.threshold)
                left.append(np.where(t.left >= 0, t.left + off, t.left))
                right.append(np.where(t.right >= 0, t.right + off, t.right))
                value.append(t.value)
                off += t.num_nodes
            self._packed = (
                np.concatenate(feat).astype(np.int32) if feat else np.empty(0, np.int32),
                np.concatenate(thr) if thr else np.empty(0),
                np.concatenate(left).astype(np.int32) if left else np.empty(0, np.int32),
                np.concatenate(right).astype(np.int32) if right else np.empty(0, np.int32),
                np.concatenate(value) if value else np.empty(0),
                np.asarray(roots, np.int64),
            )
        return self._packed

    def stage0_term(self, proposal_scores):
        s = np.asarray(proposal_scores, np.float64)
        if self.stage0_transform == "none":
            return np.zeros_like(s)
        if self.stage0_transform == "logit":
            c = np.clip(s, _SCORE_CLAMP, 1.0 - _SCORE_CLAMP)
            return self.stage0_weight * np.log(c / (1.0 - c))
        return self.stage0_weight * s

    def score_many(self, X, proposal_scores=None):
        """F(x) for each row of X (float64)."""
        X = np.ascontiguousarray(X, np.float32)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise DimensionMismatchError(self.feature_dim,
                                         X.shape[1] if X.ndim == 2 else X.shape)
        if self.stage0_transform != "none":
            if proposal_scores is None:
                raise InputError("proposal scores required for the stage-0 term")
            out = self.stage0_term(proposal_scores).copy()
        else:
            out = np.zeros(X.shape[0])
        if self.trees:
            feat, thr, left, right, value, roots = self._pack()
            out += _kernels.forest_apply(X, feat, thr, left, right, value, roots)
        return out

    def score(self, x, proposal_score=0.5):
        """F(x) for a single feature vector."""
        x = np.asarray(getattr(x, "values", x), np.float32)
        return float(self.score_many(x[None, :], np.asarray([proposal_score]))[0])


def _preorder_records(tree):
    recs = np.empty(tree.num_nodes, _NODE_DTYPE)
    pos = [0]

    def walk(i):
        p = pos[0]
        pos[0] += 1
        if tree.feature[i] < 0:
            recs[p] = (-1, 0.0, tree.value[i])
        else:
            recs[p] = (tree.feature[i], tree.threshold[i], 0.0)
            walk(tree.left[i])
            walk(tree.right[i])

    walk(0)
    return recs


def _tree_from_records(recs, path=None):
    feature, threshold, left, right, value = [], [], [], [], []
    pos = [0]

    def parse():
        if pos[0] >= len(recs):
            raise ParseError("truncated tree: ran out of node records", path=path)
        p = pos[0]
        pos[0] += 1
        f, t, v = recs[p]
        feature.append(int(f))
        threshold.append(float(t) if f >= 0 else 0.0)
        value.append(float(v) if f < 0 else 0.0)
        left.append(-1)
        right.append(-1)
        if f >= 0:
            left[p] = parse()
            right[p] = parse()
        return p

    parse()
    if pos[0] != len(recs):
        raise ParseError(f"tree has {len(recs) - pos[0]} trailing node records", path=path)
    return Tree(feature, threshold, left, right, value)


def save_forest(forest, path):
    """Write the versioned binary forest file (magic HCDF)."""
    snapshot = b""
    if forest.config_snapshot is not None:
        snapshot = json.dumps(forest.config_snapshot, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, forest.feature_dim,
                              _TRANSFORMS.index(forest.stage0_transform),
                              forest.stage0_weight, len(snapshot)))
        fh.write(snapshot)
        fh.write(struct.pack("<I", forest.num_trees))
        for t in forest.trees:
            fh.write(struct.pack("<I", t.num_nodes))
            fh.write(_preorder_records(t).tobytes())


def load_forest(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ParseError(f"file too short for header ({len(data)} bytes)", path=path)
    magic, version, feature_dim, tcode, weight, snap_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", path=path, offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", path=path, offset=4)
    if tcode >= len(_TRANSFORMS):
        raise ParseError(f"unknown stage-0 transform code {tcode}", path=path)
    off = _HEADER.size
    if off + snap_len > len(data):
        raise ParseError("truncated config snapshot", path=path, offset=off)
    snapshot = None
    if snap_len:
        snapshot = json.loads(data[off:off + snap_len].decode())
    off += snap_len
    if off + 4 > len(data):
        raise ParseError("missing tree count", path=path, offset=off)
    (n_trees,) = struct.unpack_from("<I", data, off)
    off += 4
    trees = []
    for _ in range(n_trees):
        if off + 4 > len(data):
            raise ParseError("missing node count", path=path, offset=off)
        (n_nodes,) = struct.unpack_from("<I", data, off)
        off += 4
        nbytes = n_nodes * _NODE_DTYPE.itemsize
        if off + nbytes > len(data):
            raise ParseError(
                f"truncated tree payload: expected {nbytes} bytes, "
                f"got {len(data) - off}", path=path, offset=off)
        recs = np.frombuffer(data, _NODE_DTYPE, count=n_nodes, offset=off)
        off += nbytes
        trees.append(_tree_from_records(recs, path=path))
    if off != len(data):
        raise ParseError(f"{len(data) - off} trailing bytes", path=path, offset=off)
    return Forest(feature_dim, _TRANSFORMS[tcode], weight, trees, snapshot)


def _tree_to_dict(tree, i=0):
    if tree.feature[i] < 0:
        return {"leaf": tree.value[i].item()}
    return {
        "feature": int(tree.feature[i]),
        "threshold": tree.threshold[i].item(),
        "left": _tree_to_dict(tree, tree.left[i]),
        "right": _tree_to_dict(tree, tree.right[i]),
    }


def _tree_from_dict(d):
    feature, threshold, left, right, value = [], [], [], [], []

    def build(node):
        p = len(feature)
        if "leaf" in node:
            feature.append(-1)
            threshold.append(0.0)
            value.append(float(node["leaf"]))
            left.append(-1)
            right.append(-1)
        else:
            feature.append(int(node["feature"]))
            threshold.append(float(node["threshold"]))
            value.append(0.0)
            left.append(-1)
            right.append(-1)
            left[p] = build(node["left"])
            right[p] = build(node["right"])
        return p

    build(d)
    return Tree(feature, threshold, left, right, value)


def forest_to_json(forest):
    """Lossless human-readable form (floats round-trip via repr)."""
    return {
        "feature_dim": forest.feature_dim,
        "stage0_transform": forest.stage0_transform,
        "stage0_weight": forest.stage0_weight,
        "config_snapshot": forest.config_snapshot,
        "trees": [_tree_to_dict(t) for t in forest.trees],
    }


def forest_from_json(d):
    return Forest(d["feature_dim"], d["stage0_transform"], d["stage0_weight"],
                  [_tree_from_dict(t) for t in d["trees"]], d.get("config_snapshot"))
