"""Data plane: tensor/proposal/annotation/manifest files and image loading.

All formats are documented in docs/formats.md. Loaders reject malformed
input with ParseError (path + byte offset context) rather than repairing
it; save followed by load is an exact identity for every format.
"""

import json
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import _kernels
from .boxes import Box, Proposal
from .channels import ChannelStack
from .errors import InputError, ParseError

TENSOR_MAGIC = b"HCDT"
TENSOR_VERSION = 1
_TENSOR_HEADER = struct.Struct("<4sIIIIII")  # magic, version, C, H, W, ds, meta_len


def save_stack(stack, path, meta=None):
    """Write a ChannelStack as an HCDT tensor file.

    ``meta`` is an optional JSON-serializable dict stored in the header
    (provenance, config hash); the stack's provenance is recorded there.
    """
    meta = dict(meta or {})
    meta.setdefault("provenance", stack.provenance)
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    planes = np.ascontiguousarray(stack.planes, np.float32)
    with open(path, "wb") as fh:
        fh.write(_TENSOR_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION,
                                     stack.num_channels, stack.height, stack.width,
                                     stack.downsample_factor, len(meta_bytes)))
        fh.write(meta_bytes)
        for name in stack.names:
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
        fh.write(planes.tobytes())


def load_stack(path):
    """Read an HCDT tensor file back into a ChannelStack.

    Returns (stack, meta). The second element is the header's meta dict.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _TENSOR_HEADER.size:
        raise ParseError(f"file too short for header ({len(data)} bytes)", path=path)
    magic, version, c, h, w, ds, meta_len = _TENSOR_HEADER.unpack_from(data, 0)
    if magic != TENSOR_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}",
                         path=path, offset=0)
    if version != TENSOR_VERSION:
        raise ParseError(f"unsupported tensor version {version}", path=path, offset=4)
    if c < 1 or h < 1 or w < 1 or ds < 1:
        raise ParseError(f"bad dims C={c} H={h} W={w} ds={ds}", path=path)
    off = _TENSOR_HEADER.size
    if off + meta_len > len(data):
        raise ParseError("truncated meta block", path=path, offset=off)
    try:
        meta = json.loads(data[off:off + meta_len].decode()) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad meta JSON: {exc}", path=path, offset=off) from exc
    off += meta_len
    names = []
    for _ in range(c):
        if off + 2 > len(data):
            raise ParseError("truncated channel name table", path=path, offset=off)
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + ln > len(data):
            raise ParseError("truncated channel name", path=path, offset=off)
        names.append(data[off:off + ln].decode())
        off += ln
    expected = c * h * w * 4
    actual = len(data) - off
    if actual != expected:
        raise ParseError(
            f"payload length mismatch: expected {expected} bytes, got {actual}",
            path=path, offset=off)
    planes = np.frombuffer(data, "<f4", count=c * h * w, offset=off).reshape(c, h, w)
    if not np.isfinite(planes).all():
        raise ParseError("non-finite values in tensor payload", path=path, offset=off)
    provenance = meta.get("provenance", "cnn:external")
    stack = ChannelStack(tuple(names), planes.copy(), provenance, ds)
    return stack, meta


def load_cnn_stack(path):
    """Load an ingested CNN feature-map tensor (provenance forced to cnn:*)."""
    stack, meta = load_stack(path)
    if not stack.provenance.startswith("cnn:"):
        stack = ChannelStack(stack.names, stack.planes, "cnn:external",
                             stack.downsample_factor)
    return stack


# --- proposals / detections (JSON lines) ---

def save_proposals(proposals, path, meta=None):
    """One JSON object per line: {image_id, x, y, w, h, score}.

    An optional leading meta line ({"_meta": {...}}) records provenance
    such as the producing config hash.
    """
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for p in proposals:
            fh.write(json.dumps({
                "image_id": p.image_id,
                "x": p.box.x, "y": p.box.y, "w": p.box.w, "h": p.box.h,
                "score": p.score,
            }, sort_keys=True) + "\n")


def load_proposals(path):
    """Read a proposals/detections JSONL file; returns (proposals, meta)."""
    proposals = []
    meta = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: bad JSON: {exc}", path=path) from exc
            if "_meta" in rec:
                if lineno != 1:
                    raise ParseError(f"line {lineno}: _meta only allowed on line 1",
                                     path=path)
                meta = rec["_meta"]
                continue
            try:
                proposals.append(Proposal(
                    Box(float(rec["x"]), float(rec["y"]),
                        float(rec["w"]), float(rec["h"])),
                    float(rec["score"]), str(rec["image_id"])))
            except (KeyError, TypeError, ValueError, InputError) as exc:
                raise ParseError(f"line {lineno}: bad proposal record: {exc}",
                                 path=path) from exc
    return proposals, meta


# --- annotations / manifest ---

@dataclass(frozen=True)
class GtBox:
    """One annotated pedestrian box."""

    box: Box
    height_px: float = None
    visible_fraction: float = 1.0
    ignore: bool = False

    def __post_init__(self):
        if self.height_px is None:
            object.__setattr__(self, "height_px", float(self.box.h))
        if not 0.0 <= self.visible_fraction <= 1.0:
            raise InputError(
                f"visible_fraction must be in [0, 1], got {self.visible_fraction}")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image: str
    proposals: str
    annotations: tuple = ()
    cnn_tensor: str = None


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    entries: tuple
    resize_shorter_edge: int = 720

    def __post_init__(self):
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ParseError(f"duplicate image ids in manifest: {dupes}")

    def path(self, rel):
        return str(Path(self.root) / rel)


def _gtbox_to_dict(g):
    return {"x": g.box.x, "y": g.box.y, "w": g.box.w, "h": g.box.h,
            "height_px": g.height_px, "visible_fraction": g.visible_fraction,
            "ignore": g.ignore}


def _gtbox_from_dict(d, path=None):
    try:
        return GtBox(Box(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"])),
                     float(d["height_px"]) if "height_px" in d else None,
                     float(d.get("visible_fraction", 1.0)),
                     bool(d.get("ignore", False)))
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise ParseError(f"bad annotation record {d!r}: {exc}", path=path) from exc


def manifest_to_dict(manifest):
    return {
        "schema_version": 1,
        "resize_shorter_edge": manifest.resize_shorter_edge,
        "entries": [
            {
                "image_id": e.image_id,
                "image": e.image,
                "proposals": e.proposals,
                "annotations": [_gtbox_to_dict(g) for g in e.annotations],
                **({"cnn_tensor": e.cnn_tensor} if e.cnn_tensor else {}),
            }
            for e in manifest.entries
        ],
    }


def save_manifest(manifest, path):
    with open(path, "w") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path):
    """Read a dataset manifest (JSON, or TOML by file extension)."""
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
        raise ParseError(f"bad manifest: {exc}", path=str(path)) from exc
    if d.get("schema_version") != 1:
        raise ParseError(f"unsupported manifest schema_version "
                         f"{d.get('schema_version')!r}", path=str(path))
    entries = []
    for ed in d.get("entries", []):
        try:
            entries.append(ManifestEntry(
                str(ed["image_id"]), str(ed["image"]), str(ed["proposals"]),
                tuple(_gtbox_from_dict(g, path=str(path))
                      for g in ed.get("annotations", [])),
                ed.get("cnn_tensor")))
        except KeyError as exc:
            raise ParseError(f"manifest entry missing field {exc}", path=str(path))
    root = d.get("root", str(path.parent))
    return DatasetManifest(root, tuple(entries),
                           int(d.get("resize_shorter_edge", 720)))


# --- images ---

def load_image(path):
    """Decode an 8-bit PNG or PPM into an (H, W, 3) float32 array in [0, 1]."""
    try:
        with PILImage.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot decode image: {exc}", path=path) from exc
    return arr


def save_image(img, path):
    """Write an (H, W, 3) float image in [0, 1] as 8-bit PNG/PPM."""
    arr = np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    PILImage.fromarray(arr).save(path)


def rescale_for_pipeline(img, target_shorter_edge):
    """Resize so the shorter edge hits the target, keeping aspect ratio.

    Returns (resized, scale); boxes map original -> resized by multiplying
    coordinates with ``scale``.
    """
    if target_shorter_edge < 1:
        raise InputError(f"target edge must be >= 1, got {target_shorter_edge}")
    H, W = img.shape[:2]
    shorter = min(H, W)
    if shorter == target_shorter_edge:
        return np.array(img, np.float32, copy=True), 1.0
    scale = target_shorter_edge / shorter
    out_h = int(round(H * scale))
    out_w = int(round(W * scale))
    resized = _kernels.bilinear_resize(np.ascontiguousarray(img, np.float32),
                                       out_h, out_w)
    return resized, scale
