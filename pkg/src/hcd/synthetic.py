"""Seeded synthetic pedestrian-blob dataset for tests and demos.

Images contain upright two-tone "pedestrians" (torso ellipse plus head)
over a sky/ground gradient, along with pole- and bush-shaped distractors.
Proposals mimic an external proposal generator: jittered copies of every
object with scores that correlate only loosely with overlap, so learned
rescoring has room to beat the raw scores. An 8-channel blurred and 4x
downsampled tensor per image stands in for ingested CNN feature maps.

Run ``python -m hcd.synthetic OUT_DIR`` to materialize a dataset.
"""

import json
from pathlib import Path

import numpy as np

from . import _kernels
from . import io as hio
from .boxes import Box, Proposal
from .channels import ChannelConfig, ChannelStack, compute_hogluv
from .io import DatasetManifest, GtBox, ManifestEntry

IMAGE_H = 240
IMAGE_W = 320
_ASPECT = 0.41


def _draw_ellipse(img, cx, cy, rx, ry, color, sharp=1.5):
    yy, xx = np.mgrid[0:img.shape[0], 0:img.shape[1]]
    d = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
    alpha = np.clip((1.0 - d) * sharp, 0.0, 1.0)[:, :, None]
    img[:] = img * (1 - alpha) + np.asarray(color)[None, None, :] * alpha


def _background(rng):
    img = np.empty((IMAGE_H, IMAGE_W, 3), np.float64)
    sky = rng.uniform(0.55, 0.75, 3)
    ground = rng.uniform(0.25, 0.45, 3)
    t = np.linspace(0.0, 1.0, IMAGE_H)[:, None, None]
    img[:] = sky[None, None, :] * (1 - t) + ground[None, None, :] * t
    img += rng.normal(0.0, 0.02, img.shape)
    return img


def _add_pedestrian(img, rng):
    h = rng.uniform(60.0, 140.0)
    w = _ASPECT * h
    x = rng.uniform(2.0, IMAGE_W - w - 2.0)
    y = rng.uniform(2.0, IMAGE_H - h - 2.0)
    body = rng.uniform(0.05, 0.25, 3)
    body[0] += rng.uniform(0.1, 0.3)  # reddish torso
    head = np.clip(body + rng.uniform(0.25, 0.45), 0.0, 1.0)
    head_r = 0.13 * h
    _draw_ellipse(img, x + w / 2, y + head_r, head_r, head_r, head)
    _draw_ellipse(img, x + w / 2, y + 0.6 * h, w / 2, 0.42 * h, body)
    legs_y = y + 0.87 * h
    for side in (-1, 1):
        _draw_ellipse(img, x + w / 2 + side * 0.18 * w, legs_y,
                      0.13 * w, 0.14 * h, body * 0.8)
    return Box(x, y, w, h)


def _add_distractor(img, rng):
    kind = rng.integers(0, 2)
    if kind == 0:  # pole: thin, too narrow for the pedestrian aspect
        h = rng.uniform(70.0, 150.0)
        w = 0.1 * h
    else:  # bush: wide and flat
        w = rng.uniform(50.0, 90.0)
        h = 0.5 * w
    x = rng.uniform(2.0, IMAGE_W - w - 2.0)
    y = rng.uniform(2.0, IMAGE_H - h - 2.0)
    color = rng.uniform(0.05, 0.35, 3)
    color[0] += rng.uniform(0.0, 0.25)
    _draw_ellipse(img, x + w / 2, y + h / 2, w / 2, h / 2, color)
    return Box(x, y, w, h)


def _jitter_box(box, rng, spread=0.08, scale_sigma=0.06):
    s = float(np.exp(rng.normal(0.0, scale_sigma)))
    w, h = box.w * s, box.h * s
    cx = box.x + box.w / 2 + rng.normal(0.0, spread * box.w)
    cy = box.y + box.h / 2 + rng.normal(0.0, spread * box.h)
    x = float(np.clip(cx - w / 2, -0.2 * w, IMAGE_W - 0.8 * w))
    y = float(np.clip(cy - h / 2, -0.2 * h, IMAGE_H - 0.8 * h))
    return Box(x, y, w, h)


def _proposal_score(rng, overlap):
    # weakly informative: the learned rescoring must earn its keep
    return float(np.clip(0.38 + 0.18 * overlap + rng.normal(0.0, 0.18), 0.02, 0.98))


def _make_cnn_standin(img):
    """Blurred, 4x-downsampled stand-in for an ingested feature map."""
    stack = compute_hogluv(img, ChannelConfig())
    blurred = np.stack([_kernels.box_mean(p, 2) for p in stack.planes[:8]])
    small = _kernels.block_mean(np.ascontiguousarray(blurred), 4)
    names = tuple(f"synth{i}" for i in range(small.shape[0]))
    return ChannelStack(names, small, "cnn:synth", 4)


def generate_image(rng):
    """One synthetic frame: (image, gt_boxes, proposals-without-ids)."""
    from .boxes import iou

    img = _background(rng)
    gts = [_add_pedestrian(img, rng) for _ in range(rng.integers(1, 4))]
    distractors = [_add_distractor(img, rng) for _ in range(rng.integers(1, 4))]
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    proposals = []
    for gt in gts:
        # one tight proposal guarantees a well-overlapping candidate
        b = _jitter_box(gt, rng, spread=0.02, scale_sigma=0.02)
        proposals.append((b, _proposal_score(rng, iou(b, gt))))
        for _ in range(7):
            b = _jitter_box(gt, rng)
            proposals.append((b, _proposal_score(rng, iou(b, gt))))
    for d in distractors:
        for _ in range(4):
            b = _jitter_box(d, rng)
            proposals.append((b, float(np.clip(0.42 + rng.normal(0.0, 0.18), 0.02, 0.98))))
    for _ in range(10):
        h = rng.uniform(30.0, 120.0)
        w = h * rng.uniform(0.3, 1.2)
        x = rng.uniform(0.0, IMAGE_W - w)
        y = rng.uniform(0.0, IMAGE_H - h)
        proposals.append((Box(x, y, w, h),
                          float(np.clip(0.12 + rng.normal(0.0, 0.12), 0.02, 0.98))))
    return img, gts, proposals


def generate_dataset(out_dir, n_train=20, n_test=10, seed=7, with_cnn=True):
    """Write images, proposals, CNN stand-ins and two manifests.

    Returns (train_manifest_path, test_manifest_path).
    """
    out = Path(out_dir)
    for sub in ("images", "proposals", "cnn" if with_cnn else "images"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    split_entries = {"train": [], "test": []}
    for split, count in (("train", n_train), ("test", n_test)):
        for i in range(count):
            image_id = f"{split}{i:03d}"
            img, gts, props = generate_image(rng)
            hio.save_image(img, out / "images" / f"{image_id}.png")
            hio.save_proposals(
                [Proposal(b, s, image_id) for b, s in props],
                out / "proposals" / f"{image_id}.jsonl")
            cnn_rel = None
            if with_cnn:
                cnn_rel = f"cnn/{image_id}.hcdt"
                hio.save_stack(_make_cnn_standin(img), out / cnn_rel)
            split_entries[split].append(ManifestEntry(
                image_id, f"images/{image_id}.png", f"proposals/{image_id}.jsonl",
                tuple(GtBox(b) for b in gts), cnn_rel))
    paths = {}
    for split in ("train", "test"):
        manifest = DatasetManifest(str(out), tuple(split_entries[split]),
                                   resize_shorter_edge=IMAGE_H)
        paths[split] = out / f"manifest_{split}.json"
        hio.save_manifest(manifest, paths[split])
    return paths["train"], paths["test"]


def main(argv=None):
    import argparse

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=20)
    ap.add_argument("--test", type=int, default=10)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--no-cnn", action="store_true")
    args = ap.parse_args(argv)
    train, test = generate_dataset(args.out_dir, args.train, args.test,
                                   args.seed, with_cnn=not args.no_cnn)
    print(json.dumps({"train_manifest": str(train), "test_manifest": str(test)}))


if __name__ == "__main__":
    main()
