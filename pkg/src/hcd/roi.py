"""Fixed-length feature extraction from channel stacks by RoI max-pooling."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DegenerateRoIError, InputError


@dataclass(frozen=True)
class LayoutEntry:
    """Provenance of one contiguous block of a feature vector."""

    source: str
    channels: int
    out_h: int
    out_w: int

    @property
    def length(self):
        return self.channels * self.out_h * self.out_w


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # 1-D float32
    layout: tuple  # of LayoutEntry

    def __post_init__(self):
        expected = sum(e.length for e in self.layout)
        if self.values.ndim != 1 or len(self.values) != expected:
            raise InputError(
                f"feature vector length {self.values.shape} does not match "
                f"layout total {expected}")
        if not np.isfinite(self.values).all():
            raise InputError("non-finite feature values")

    def __len__(self):
        return len(self.values)

    def block(self, source):
        """The (channels, out_h, out_w) block contributed by one source."""
        off = 0
        for e in self.layout:
            if e.source == source:
                return self.values[off:off + e.length].reshape(e.channels, e.out_h, e.out_w)
            off += e.length
        raise KeyError(source)


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def roi_window(stack, box):
    """Integer pixel window of a box in stack coordinates.

    Box edges are divided by the stack's downsample factor and rounded to
    the nearest pixel edge; sub-pixel boxes are widened to one pixel.
    Raises DegenerateRoIError when the box misses the image entirely.
    """
    ds = stack.downsample_factor
    H, W = stack.height, stack.width
    x0f = max(box.x / ds, 0.0)
    y0f = max(box.y / ds, 0.0)
    x1f = min((box.x + box.w) / ds, float(W))
    y1f = min((box.y + box.h) / ds, float(H))
    if x1f <= x0f or y1f <= y0f:
        raise DegenerateRoIError(
            f"box {(box.x, box.y, box.w, box.h)} has no overlap with "
            f"{W * ds}x{H * ds} image (downsample {ds})")
    x0 = min(_round_half_up(x0f), W - 1)
    y0 = min(_round_half_up(y0f), H - 1)
    x1 = min(max(_round_half_up(x1f), x0 + 1), W)
    y1 = min(max(_round_half_up(y1f), y0 + 1), H)
    return y0, y1, x0, x1


def roi_pool(stack, box, out_h, out_w):
    """Max-pool a box into an out_h x out_w grid per channel.

    Pool bin (i, j) covers rows [floor(i*h/out_h), ceil((i+1)*h/out_h))
    of the window (same for columns), so bins tile the window with full
    coverage. Output is channel-major.
    """
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output resolution must be >= 1, got {out_h}x{out_w}")
    y0, y1, x0, x1 = roi_window(stack, box)
    pooled = _kernels.roi_pool_window(stack.planes, y0, y1, x0, x1, out_h, out_w)
    return FeatureVector(
        pooled.reshape(-1).astype(np.float32),
        (LayoutEntry(stack.provenance, stack.num_channels, out_h, out_w),))


def concat_features(parts):
    """Concatenate feature vectors in order; blocks may differ in length."""
    parts = list(parts)
    if not parts:
        raise InputError("cannot concatenate an empty list of feature vectors")
    values = np.concatenate([p.values for p in parts])
    layout = tuple(e for p in parts for e in p.layout)
    return FeatureVector(values, layout)
