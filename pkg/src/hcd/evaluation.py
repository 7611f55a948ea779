"""Detection scoring: matching, FPPI/miss-rate curves, subset filters.

Matching is greedy one-to-one in descending score order at IoU >= 0.5.
Ground truth outside the active subset (or flagged ignore) becomes an
ignore target: detections matching it (intersection over detection area
>= 0.5) count as neither true nor false positives, and such targets may
absorb any number of detections. The summary metric is the log-average
miss rate over nine log-spaced FPPI reference points in [1e-2, 1].
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .boxes import ioa, iou_matrix
from .errors import UndefinedMetricError

MR_EPS = 1e-10
_IGNORE_IOA = 0.5


@dataclass(frozen=True)
class SubsetFilter:
    """Height/visibility window defining an evaluation subset."""

    name: str
    min_height: float = 0.0
    max_height: float = math.inf
    min_visible: float = 0.0
    max_visible: float = 1.0

    def __post_init__(self):
        if self.min_height > self.max_height or self.min_visible > self.max_visible:
            raise ValueError(f"empty subset filter {self}")

    def accepts(self, gt):
        return (self.min_height <= gt.height_px <= self.max_height
                and self.min_visible <= gt.visible_fraction <= self.max_visible)


STANDARD_SUBSETS = {
    "reasonable": SubsetFilter("reasonable", 50, math.inf, 0.65, 1.0),
    "partial": SubsetFilter("partial", 50, math.inf, 0.65, 0.99),
    "heavy": SubsetFilter("heavy", 50, math.inf, 0.20, 0.64),
    "none": SubsetFilter("none", 50, math.inf, 1.0, 1.0),
    "near": SubsetFilter("near", 80, math.inf, 0.0, 1.0),
    "medium": SubsetFilter("medium", 30, 80, 0.0, 1.0),
    "all": SubsetFilter("all"),
}


def filter_subset(gts, subset):
    """Boolean (evaluated, ignored) partition of the ground-truth list."""
    in_mask = np.array([not g.ignore and subset.accepts(g) for g in gts], bool)
    return in_mask, ~in_mask


@dataclass(frozen=True)
class MatchResult:
    """Per-image matching outcome: scores descending, flag 1=TP 0=FP -1=ignored."""

    scores: np.ndarray
    flags: np.ndarray
    n_gt: int


def match_detections(dets, gts, iou_threshold=0.5, subset=STANDARD_SUBSETS["all"]):
    """Greedy one-to-one matching of detections against ground truth.

    Detections are processed in descending score order (stable in input
    order on ties); each takes the best still-unmatched in-subset GT with
    IoU >= threshold, otherwise it may be absorbed by an ignore target,
    otherwise it is a false positive.
    """
    order = np.argsort(-np.array([d.score for d in dets]), kind="stable")
    in_mask, _ = filter_subset(gts, subset)
    eval_idx = [i for i in range(len(gts)) if in_mask[i]]
    ign_idx = [i for i in range(len(gts)) if not in_mask[i]]
    flags = np.zeros(len(dets), np.int8)
    scores = np.empty(len(dets))
    taken = set()
    M = iou_matrix([d.box for d in dets], [g.box for g in gts])
    for rank, di in enumerate(order):
        det = dets[di]
        scores[rank] = det.score
        best_gt, best_iou = -1, -1.0
        for gi in eval_idx:
            if gi in taken:
                continue
            v = M[di, gi]
            if v >= iou_threshold and v > best_iou:
                best_gt, best_iou = gi, v
        if best_gt >= 0:
            taken.add(best_gt)
            flags[rank] = 1
            continue
        absorbed = any(ioa(det.box, gts[gi].box) >= _IGNORE_IOA for gi in ign_idx)
        flags[rank] = -1 if absorbed else 0
    return MatchResult(scores, flags, len(eval_idx))


@dataclass(frozen=True)
class EvalCurve:
    """Threshold sweep plus the nine-point log-average miss rate."""

    thresholds: np.ndarray
    fppi: np.ndarray
    miss_rate: np.ndarray
    reference_fppi: np.ndarray
    reference_mr: np.ndarray
    log_avg_mr: float


def compute_mr(results, num_images):
    """FPPI/miss-rate curve and log-average MR from per-image match results.

    The sweep visits every distinct detection score. At each of the nine
    reference FPPI points the miss rate of the largest achieved FPPI <=
    the reference is taken (the sweep's first point when none qualifies).
    """
    if num_images < 1:
        raise UndefinedMetricError("num_images must be >= 1")
    n_gt = sum(r.n_gt for r in results)
    if n_gt == 0:
        raise UndefinedMetricError("no ground truth under the active subset filter")
    scores = np.concatenate([r.scores for r in results]) if results else np.empty(0)
    flags = np.concatenate([r.flags for r in results]) if results else np.empty(0, np.int8)
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    flags = flags[order]
    # cumulative TP/FP at each distinct-score threshold
    is_last = np.ones(len(scores), bool)
    is_last[:-1] = scores[1:] < scores[:-1]
    cum_tp = np.cumsum(flags == 1)
    cum_fp = np.cumsum(flags == 0)
    thresholds = scores[is_last]
    fppi = cum_fp[is_last] / num_images
    miss = 1.0 - cum_tp[is_last] / n_gt
    if len(thresholds) == 0:
        thresholds = np.array([math.inf])
        fppi = np.array([0.0])
        miss = np.array([1.0])
    refs = np.logspace(-2.0, 0.0, 9)
    ref_mr = np.empty(9)
    for i, ref in enumerate(refs):
        j = np.searchsorted(fppi, ref, side="right") - 1
        ref_mr[i] = miss[j] if j >= 0 else miss[0]
    log_avg = float(np.exp(np.mean(np.log(np.maximum(ref_mr, MR_EPS)))))
    return EvalCurve(thresholds, fppi, miss, refs, ref_mr, log_avg)


def evaluate_detections(dets_by_image, gts_by_image, num_images,
                        iou_threshold=0.5, subset=STANDARD_SUBSETS["reasonable"]):
    """Match every image and reduce to an EvalCurve.

    ``dets_by_image`` and ``gts_by_image`` map image_id to lists; images
    without detections still contribute their ground truth as misses.
    """
    results = []
    ids = set(dets_by_image) | set(gts_by_image)
    for image_id in sorted(ids):
        results.append(match_detections(
            dets_by_image.get(image_id, []), gts_by_image.get(image_id, []),
            iou_threshold, subset))
    return compute_mr(results, num_images)


def write_curve_csv(curve, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fppi", "miss_rate"])
        for t, f, m in zip(curve.thresholds, curve.fppi, curve.miss_rate):
            writer.writerow([repr(float(t)), repr(float(f)), repr(float(m))])


def read_curve_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return data[:, 0], data[:, 1], data[:, 2]


def write_summary_json(summaries, path):
    with open(path, "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_curves_svg(curves, path, title="miss rate vs FPPI"):
    """Log-log miss-rate/FPPI plot of {label: EvalCurve or (fppi, mr)}."""
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6, 4.5))
    ax = fig.add_subplot(111)
    for label, curve in curves.items():
        if isinstance(curve, EvalCurve):
            x, y = curve.fppi, curve.miss_rate
            label = f"{label} ({curve.log_avg_mr * 100:.2f}%)"
        else:
            x, y = curve
        pos = (np.asarray(x) > 0)
        ax.plot(np.maximum(np.asarray(x, float), 1e-4)[pos],
                np.maximum(np.asarray(y, float), MR_EPS)[pos],
                drawstyle="steps-post", label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("false positives per image")
    ax.set_ylabel("miss rate")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.savefig(path, format="svg")
