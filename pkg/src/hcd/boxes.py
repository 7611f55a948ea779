"""Axis-aligned boxes, proposals, IoU, NMS and top-K selection.

All geometry is on continuous rectangles (no pixel discretization), so
overlap values are exact and testable in closed form.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class Box:
    """Rectangle in image coordinates; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InputError(f"box must have positive size, got w={self.w} h={self.h}")

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def area(self):
        return self.w * self.h

    def scaled(self, s):
        return Box(self.x * s, self.y * s, self.w * s, self.h * s)


@dataclass(frozen=True)
class Proposal:
    """Candidate detection box with a confidence score."""

    box: Box
    score: float
    image_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not math.isfinite(self.score):
            raise InputError(f"non-finite proposal score {self.score}")

    def scaled(self, s):
        return replace(self, box=self.box.scaled(s))


def intersection_area(a, b):
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a, b):
    """Intersection over union of two boxes."""
    inter = intersection_area(a, b)
    return inter / (a.area + b.area - inter)


def ioa(a, b):
    """Intersection over the area of ``a`` (the ignore-region match rule)."""
    return intersection_area(a, b) / a.area


def boxes_to_array(boxes):
    """Stack boxes into an (n, 4) float64 array of (x, y, x2, y2)."""
    arr = np.empty((len(boxes), 4), np.float64)
    for i, b in enumerate(boxes):
        arr[i, 0] = b.x
        arr[i, 1] = b.y
        arr[i, 2] = b.x2
        arr[i, 3] = b.y2
    return arr


def iou_matrix(boxes_a, boxes_b):
    """(len(a), len(b)) array of pairwise IoU values."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = boxes_to_array(boxes_a)
    b = boxes_to_array(boxes_b)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    # areas from w*h, matching the scalar iou() bit for bit
    area_a = np.array([bx.area for bx in boxes_a])
    area_b = np.array([bx.area for bx in boxes_b])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def nms(proposals, iou_threshold):
    """Greedy non-maximum suppression in descending score order.

    A box is suppressed when its IoU with an already-kept box exceeds the
    threshold, so every surviving pair has IoU <= iou_threshold. Scores are
    untouched; ties are broken by input order.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ConfigError(f"NMS IoU threshold must be in [0, 1], got {iou_threshold}")
    n = len(proposals)
    if n == 0:
        return []
    scores = np.array([p.score for p in proposals])
    order = np.argsort(-scores, kind="stable")
    arr = boxes_to_array([p.box for p in proposals])
    areas = np.array([p.box.area for p in proposals])
    keep = []
    suppressed = np.zeros(n, bool)
    for oi in order:
        if suppressed[oi]:
            continue
        keep.append(oi)
        ix = np.minimum(arr[oi, 2], arr[:, 2]) - np.maximum(arr[oi, 0], arr[:, 0])
        iy = np.minimum(arr[oi, 3], arr[:, 3]) - np.maximum(arr[oi, 1], arr[:, 1])
        inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
        ovr = inter / (areas[oi] + areas - inter)
        suppressed |= ovr > iou_threshold
    return [proposals[i] for i in keep]


def select_topk(proposals, k):
    """First min(k, n) proposals by descending score, stable under ties."""
    if k < 1:
        raise ConfigError(f"top-k count must be >= 1, got {k}")
    scores = np.array([p.score for p in proposals])
    order = np.argsort(-scores, kind="stable")[:k]
    return [proposals[i] for i in order]
