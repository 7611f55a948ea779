"""Batch command-line interface.

Subcommands: compute-channels, train, detect, eval, convert, plot.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__, pipeline
from . import io as hio
from .boxes import Box, Proposal
from .config import PRESETS, RunConfig, apply_overrides, load_config, preset_config
from .errors import (ConfigError, DegenerateRoIError, DimensionMismatchError,
                     HcdError, InputError, ParseError, UndefinedMetricError)
from .evaluation import plot_curves_svg, read_curve_csv, write_curve_csv, write_summary_json
from .forest import load_forest, save_forest
from .training import write_training_log


def _add_config_args(sp):
    sp.add_argument("--config", help="JSON or TOML config file")
    sp.add_argument("--preset", choices=sorted(PRESETS), help="named configuration")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    dest="overrides", help="config override, dotted keys "
                    "(e.g. --set train.rng_seed=3 --set bank=cb11)")


def _build_config(args):
    if getattr(args, "preset", None):
        cfg = preset_config(args.preset)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = RunConfig()
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg


def _jobs(args):
    if getattr(args, "jobs", None):
        return args.jobs
    return int(os.environ.get("HCD_JOBS", "1"))


def cmd_compute_channels(args):
    manifest = hio.load_manifest(args.manifest)
    cfg = _build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    skipped = 0
    for entry in manifest.entries:
        path = out / f"{entry.image_id}.{cfg.bank}.hcdt"
        if path.exists():
            skipped += 1
            continue
        tasks.append((manifest, entry, cfg, str(path)))
    failures = []
    jobs = _jobs(args)
    if jobs > 1 and tasks:
        with pipeline.worker_pool(jobs) as pool:
            futures = {pool.submit(pipeline._channels_worker, t): t[1].image_id
                       for t in tasks}
            for fut, image_id in futures.items():
                try:
                    print(f"wrote {fut.result()}")
                except HcdError as exc:
                    failures.append(image_id)
                    print(f"error: {image_id}: {exc}", file=sys.stderr)
    else:
        for t in tasks:
            try:
                print(f"wrote {pipeline._channels_worker(t)}")
            except HcdError as exc:
                failures.append(t[1].image_id)
                print(f"error: {t[1].image_id}: {exc}", file=sys.stderr)
    print(f"{len(tasks) - len(failures)} written, {skipped} skipped, "
          f"{len(failures)} failed")
    return 3 if failures else 0


def cmd_train(args):
    manifest = hio.load_manifest(args.manifest)
    cfg = _build_config(args)

    def progress(stage_forest, stage):
        print(f"stage {stage}: {stage_forest.num_trees} trees")

    forest, report = pipeline.train_run(manifest, cfg, stage_callback=progress)
    save_forest(forest, args.out)
    log_path = args.log or str(Path(args.out).with_suffix(".log.csv"))
    write_training_log(report["rounds"], log_path)
    stage_path = str(Path(args.out).with_suffix(".stages.json"))
    with open(stage_path, "w") as fh:
        json.dump([{k: v for k, v in s.items() if k != "mined_indices"}
                   for s in report["stages"]], fh, indent=2)
    print(f"trained forest of {forest.num_trees} trees "
          f"(config {cfg.config_hash()}) -> {args.out}")
    return 0


def cmd_detect(args):
    manifest = hio.load_manifest(args.manifest)
    cfg = _build_config(args)
    forest = load_forest(args.forest)
    expected = None
    if forest.config_snapshot and "config_hash" in forest.config_snapshot:
        expected = forest.config_snapshot["config_hash"]
        if expected != cfg.config_hash() and not args.allow_hash_mismatch:
            raise ConfigError(
                f"forest was trained with config hash {expected}, current config "
                f"is {cfg.config_hash()}; pass --allow-hash-mismatch to override")
    detections = pipeline.run_detect(manifest, cfg, forest, jobs=_jobs(args),
                                     progress=lambda i: print(f"detected {i}"))
    hio.save_proposals(detections, args.out, meta={
        "format": "hcd-detections",
        "config_hash": cfg.config_hash(),
        "num_images": len(manifest.entries),
    })
    print(f"{len(detections)} detections -> {args.out}")
    return 0


def cmd_eval(args):
    manifest = hio.load_manifest(args.manifest)
    cfg = _build_config(args)
    if args.subsets:
        cfg = apply_overrides(cfg, [f"eval_subsets={json.dumps(args.subsets.split(','))}"])
    detections, meta = hio.load_proposals(args.detections)
    if meta and meta.get("config_hash") and meta["config_hash"] != cfg.config_hash():
        if not args.allow_hash_mismatch:
            raise ConfigError(
                f"detections carry config hash {meta['config_hash']}, current config "
                f"is {cfg.config_hash()}; pass --allow-hash-mismatch to override")
    curves = pipeline.evaluate_run(detections, manifest, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"config_hash": cfg.config_hash(), "num_images": len(manifest.entries),
               "eval_iou": cfg.eval_iou, "standardize_aspect": cfg.standardize_aspect,
               "subsets": {}}
    for i, (name, curve) in enumerate(curves.items()):
        summary["subsets"][name] = {
            "log_avg_miss_rate": curve.log_avg_mr,
            "miss_rate_percent": round(curve.log_avg_mr * 100.0, 2),
            "reference_fppi": [float(v) for v in curve.reference_fppi],
            "reference_miss_rate": [float(v) for v in curve.reference_mr],
        }
        write_curve_csv(curve, out / ("curve.csv" if i == 0 else f"curve-{name}.csv"))
        print(f"{name}: MR = {curve.log_avg_mr * 100.0:.2f}%")
    write_summary_json(summary, out / "summary.json")
    plot_curves_svg(curves, out / "curve.svg")
    return 0


def _read_csv_proposals(path):
    proposals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "image_id":
                continue
            image_id, x, y, w, h, score = [v.strip() for v in row[:6]]
            proposals.append(Proposal(Box(float(x), float(y), float(w), float(h)),
                                      float(score), image_id))
    return proposals


def _read_coco_proposals(path):
    with open(path) as fh:
        data = json.load(fh)
    proposals = []
    for rec in data:
        x, y, w, h = rec["bbox"]
        proposals.append(Proposal(Box(float(x), float(y), float(w), float(h)),
                                  float(rec.get("score", 0.0)), str(rec["image_id"])))
    return proposals


def cmd_convert(args):
    if args.what == "proposals":
        readers = {"csv": _read_csv_proposals, "coco": _read_coco_proposals}
        proposals = readers[args.format](args.input)
        out = Path(args.out)
        if out.suffix == ".jsonl":
            hio.save_proposals(proposals, out)
            print(f"{len(proposals)} proposals -> {out}")
        else:
            out.mkdir(parents=True, exist_ok=True)
            by_image = {}
            for p in proposals:
                by_image.setdefault(p.image_id, []).append(p)
            for image_id, plist in sorted(by_image.items()):
                hio.save_proposals(plist, out / f"{image_id}.jsonl")
            print(f"{len(proposals)} proposals over {len(by_image)} images -> {out}/")
        return 0
    # dataset: images/ + annotations.json + proposals/ -> manifest.json
    root = Path(args.input)
    ann_path = root / "annotations.json"
    if not ann_path.exists():
        raise ParseError("expected annotations.json in the dataset directory",
                         path=str(ann_path))
    with open(ann_path) as fh:
        ann = json.load(fh)
    entries = []
    for image_id in sorted(ann):
        image_rel = None
        for ext in (".png", ".ppm"):
            if (root / "images" / f"{image_id}{ext}").exists():
                image_rel = f"images/{image_id}{ext}"
                break
        if image_rel is None:
            raise ParseError(f"no image found for {image_id!r} under images/",
                             path=str(root))
        boxes = tuple(hio._gtbox_from_dict(b, path=str(ann_path)) for b in ann[image_id])
        cnn_rel = f"cnn/{image_id}.hcdt"
        entries.append(hio.ManifestEntry(
            image_id, image_rel, f"proposals/{image_id}.jsonl", boxes,
            cnn_rel if (root / cnn_rel).exists() else None))
    manifest = hio.DatasetManifest(str(root), tuple(entries),
                                   args.resize_shorter_edge)
    hio.save_manifest(manifest, args.out)
    print(f"{len(entries)} entries -> {args.out}")
    return 0


def cmd_plot(args):
    curves = {}
    for path in args.curves:
        _, fppi, mr = read_curve_csv(path)
        curves[Path(path).stem] = (fppi, mr)
    plot_curves_svg(curves, args.out)
    print(f"plot -> {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="hcd",
        description="Channel-feature pedestrian detection pipeline")
    ap.add_argument("--version", action="version", version=f"hcd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("compute-channels",
                        help="write per-image channel tensor files")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int)
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_compute_channels)

    sp = sub.add_parser("train", help="train the boosted forest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="forest file (.hcdf)")
    sp.add_argument("--log", help="per-round CSV (default: alongside forest)")
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("detect", help="score proposals with a trained forest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--forest", required=True)
    sp.add_argument("--out", required=True, help="detections JSONL")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--allow-hash-mismatch", action="store_true")
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_detect)

    sp = sub.add_parser("eval", help="miss rate / FPPI evaluation")
    sp.add_argument("--detections", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--subsets", help="comma-separated subset names")
    sp.add_argument("--allow-hash-mismatch", action="store_true")
    _add_config_args(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("convert", help="import external proposals or a dataset")
    sp.add_argument("what", choices=("proposals", "dataset"))
    sp.add_argument("--format", choices=("csv", "coco"), default="csv",
                    help="proposals input format")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--resize-shorter-edge", type=int, default=720)
    sp.set_defaults(fn=cmd_convert)

    sp = sub.add_parser("plot", help="render curve CSVs to SVG")
    sp.add_argument("--out", required=True)
    sp.add_argument("curves", nargs="+")
    sp.set_defaults(fn=cmd_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, InputError, DimensionMismatchError, DegenerateRoIError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (UndefinedMetricError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
