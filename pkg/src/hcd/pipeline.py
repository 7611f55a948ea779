"""End-to-end flow: channels, RoI features, training, detection, evaluation.

Per-image work is independent; the CLI fans it out over a process pool.
All functions here are deterministic for a fixed config and inputs.
"""

import multiprocessing
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as hio
from .boxes import Box, Proposal, nms, select_topk
from .channels import HOGLUV_NAMES, compute_hogluv
from .errors import InputError, ParseError
from .evaluation import STANDARD_SUBSETS, evaluate_detections
from .filters import apply_bank, get_bank
from .roi import FeatureVector, concat_features, roi_pool
from .training import (ArrayTrainingSource, ImageSamples, bootstrap_train,
                       label_proposals)

# Stand-in proposal score for injected ground-truth positives (train only).
GT_PROPOSAL_SCORE = 1.0


def compute_bank_stack(img, cfg):
    """HOG+LUV channels, filtered by the configured bank (if any)."""
    if cfg.bank == "none":
        raise InputError("bank 'none' has no handcrafted channels to compute")
    stack = compute_hogluv(img, cfg.channels)
    bank = get_bank(cfg.bank, cfg.cb11_cell_px, cfg.rf_cell_px)
    if bank is None:
        return stack
    return apply_bank(stack, bank)


def bank_channel_count(cfg):
    if cfg.bank == "none":
        return 0
    bank = get_bank(cfg.bank, cfg.cb11_cell_px, cfg.rf_cell_px)
    if bank is None:
        return len(HOGLUV_NAMES)
    return len(bank.output_channels(HOGLUV_NAMES))


def feature_dim(cfg, cnn_channels=0):
    """Length of the fused per-proposal feature vector."""
    d = bank_channel_count(cfg) * cfg.handcrafted_roi ** 2
    if cfg.use_cnn:
        d += cnn_channels * cfg.cnn_roi ** 2
    return d


def load_entry_image(manifest, entry):
    img = hio.load_image(manifest.path(entry.image))
    return hio.rescale_for_pipeline(img, manifest.resize_shorter_edge)


def entry_proposals(manifest, entry, scale, cfg, topk, image_shape):
    """Load, rescale, suppress and rank one image's proposals.

    Records must carry the entry's image id; proposals with no overlap
    with the image are dropped (they cannot be pooled).
    """
    props, _ = hio.load_proposals(manifest.path(entry.proposals))
    for p in props:
        if p.image_id != entry.image_id:
            raise ParseError(
                f"proposal for {p.image_id!r} in file of entry {entry.image_id!r}",
                path=manifest.path(entry.proposals))
    h, w = image_shape[:2]
    props = [p.scaled(scale) for p in props]
    props = [p for p in props
             if p.box.x < w and p.box.y < h and p.box.x2 > 0 and p.box.y2 > 0]
    props = nms(props, cfg.nms_iou)
    if props:
        props = select_topk(props, topk)
    return props


def _entry_stacks(manifest, entry, cfg, resized_img):
    """The (stack, pooling resolution) pairs feeding the feature vector."""
    stacks = []
    if cfg.bank != "none":
        stacks.append((compute_bank_stack(resized_img, cfg), cfg.handcrafted_roi))
    if cfg.use_cnn:
        if not entry.cnn_tensor:
            raise InputError(f"entry {entry.image_id!r} has no cnn_tensor but "
                             f"use_cnn is enabled")
        cnn = hio.load_cnn_stack(manifest.path(entry.cnn_tensor))
        ds = cnn.downsample_factor
        H, W = resized_img.shape[:2]
        if not (abs(cnn.height * ds - H) < ds and abs(cnn.width * ds - W) < ds):
            raise InputError(
                f"cnn tensor for {entry.image_id!r} is {cnn.width}x{cnn.height} at "
                f"{ds}x downsampling, inconsistent with resized image {W}x{H}")
        stacks.append((cnn, cfg.cnn_roi))
    return stacks


def proposal_features(stacks, proposals, cfg):
    """(n, F) float32 matrix of fused RoI features, plus the layout."""
    rows = []
    layout = None
    for p in proposals:
        parts = []
        for stack, res in stacks:
            fv = roi_pool(stack, p.box, res, res)
            if cfg.l2_normalize_cnn and stack.provenance.startswith("cnn:"):
                norm = float(np.linalg.norm(fv.values))
                if norm > 0:
                    fv = FeatureVector((fv.values / norm).astype(np.float32), fv.layout)
            parts.append(fv)
        fused = concat_features(parts)
        rows.append(fused.values)
        layout = fused.layout
    X = np.stack(rows) if rows else np.zeros((0, 0), np.float32)
    return np.ascontiguousarray(X, np.float32), layout


def build_training_source(manifest, cfg, progress=None):
    """Labeled per-image feature arrays for bootstrap_train.

    Proposals get IoU-based labels against the non-ignore ground truth;
    the ground-truth boxes themselves are injected as positives with a
    stand-in proposal score.
    """
    parts = []
    for entry in manifest.entries:
        img, scale = load_entry_image(manifest, entry)
        props = entry_proposals(manifest, entry, scale, cfg, cfg.train_topk, img.shape)
        gt_boxes = [g.box.scaled(scale) for g in entry.annotations if not g.ignore]
        labels = label_proposals(props, gt_boxes, cfg.train.pos_iou, cfg.train.neg_iou)
        all_props = props + [Proposal(b, GT_PROPOSAL_SCORE, entry.image_id)
                             for b in gt_boxes]
        all_labels = np.concatenate([labels, np.ones(len(gt_boxes), np.int8)])
        stacks = _entry_stacks(manifest, entry, cfg, img)
        X, _ = proposal_features(stacks, all_props, cfg)
        parts.append(ImageSamples(entry.image_id, X, all_labels,
                                  np.array([p.score for p in all_props])))
        if progress is not None:
            progress(entry.image_id)
    return ArrayTrainingSource(parts)


def train_run(manifest, cfg, stage_callback=None, progress=None):
    """Full bootstrapped training; the forest carries a config snapshot."""
    source = build_training_source(manifest, cfg, progress=progress)
    forest, report = bootstrap_train(source, cfg.train, stage_callback=stage_callback)
    forest.config_snapshot = {
        "config": cfg.to_dict(include_paths=False),
        "config_hash": cfg.config_hash(),
    }
    return forest, report


def detect_entry(manifest, entry, cfg, forest):
    """Score one image's proposals; detections in original coordinates."""
    img, scale = load_entry_image(manifest, entry)
    props = entry_proposals(manifest, entry, scale, cfg, cfg.test_topk, img.shape)
    if not props:
        return []
    stacks = _entry_stacks(manifest, entry, cfg, img)
    X, _ = proposal_features(stacks, props, cfg)
    scores = forest.score_many(X, np.array([p.score for p in props]))
    dets = [Proposal(p.box, float(s), entry.image_id)
            for p, s in zip(props, scores)]
    dets.sort(key=lambda d: -d.score)
    if cfg.final_nms_iou is not None:
        dets = nms(dets, cfg.final_nms_iou)
    return [d.scaled(1.0 / scale) for d in dets]


def proposal_score_baseline_entry(manifest, entry, cfg):
    """Detections ranked by the raw proposal score (no classifier)."""
    img, scale = load_entry_image(manifest, entry)
    props = entry_proposals(manifest, entry, scale, cfg, cfg.test_topk, img.shape)
    props.sort(key=lambda p: -p.score)
    if cfg.final_nms_iou is not None:
        props = nms(props, cfg.final_nms_iou)
    return [p.scaled(1.0 / scale) for p in props]


def _detect_worker(args):
    manifest, entry, cfg, forest = args
    return detect_entry(manifest, entry, cfg, forest)


def worker_pool(jobs):
    """Process pool using spawn (fork is unsafe once OpenMP is live)."""
    return ProcessPoolExecutor(max_workers=jobs,
                               mp_context=multiprocessing.get_context("spawn"))


def run_detect(manifest, cfg, forest, jobs=1, progress=None):
    """Detections for every manifest entry, flattened in entry order."""
    out = []
    if jobs and jobs > 1:
        with worker_pool(jobs) as pool:
            for entry, dets in zip(
                    manifest.entries,
                    pool.map(_detect_worker,
                             [(manifest, e, cfg, forest) for e in manifest.entries])):
                out.extend(dets)
                if progress is not None:
                    progress(entry.image_id)
    else:
        for entry in manifest.entries:
            out.extend(detect_entry(manifest, entry, cfg, forest))
            if progress is not None:
                progress(entry.image_id)
    return out


def _standardize_box(box, ratio):
    w = ratio * box.h
    return Box(box.x + (box.w - w) / 2.0, box.y, w, box.h)


def evaluate_run(detections, manifest, cfg):
    """Per-subset EvalCurve dict for a list of detections."""
    ratio = cfg.standardize_aspect
    dets_by_image = {}
    for d in detections:
        if ratio > 0:
            d = Proposal(_standardize_box(d.box, ratio), d.score, d.image_id)
        dets_by_image.setdefault(d.image_id, []).append(d)
    gts_by_image = {}
    for e in manifest.entries:
        gts = list(e.annotations)
        if ratio > 0:
            gts = [hio.GtBox(_standardize_box(g.box, ratio), g.height_px,
                             g.visible_fraction, g.ignore) for g in gts]
        gts_by_image[e.image_id] = gts
    curves = {}
    for name in cfg.eval_subsets:
        curves[name] = evaluate_detections(
            dets_by_image, gts_by_image, len(manifest.entries),
            cfg.eval_iou, STANDARD_SUBSETS[name])
    return curves


def _channels_worker(args):
    manifest, entry, cfg, out_path = args
    img, _scale = load_entry_image(manifest, entry)
    stack = compute_bank_stack(img, cfg)
    hio.save_stack(stack, out_path, meta={"config_hash": cfg.config_hash(),
                                          "image_id": entry.image_id})
    return out_path
