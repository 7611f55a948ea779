"""Checkerboard-style and rotated-step filter banks over the channel stack.

Kernels are committed as literal cell patterns in one source-of-truth
table; cells are replicated to ``cell_pixel_size`` square pixel blocks.
Application is 2-D cross-correlation (no kernel flip) with zero padding
and same-size output, evaluated through run-length decomposition of the
kernel rows so wide kernels stay cheap.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channels import ChannelStack
from .errors import ConfigError, InputError

# The eleven 2x2-cell patterns: a uniform square, horizontal and vertical
# step detectors in both polarities, both checkerboard phases, and the four
# single-cell corner detectors.
_CB11_PATTERNS = (
    ("uniform", ((1, 1), (1, 1))),
    ("hstep", ((1, 1), (-1, -1))),
    ("hstep_inv", ((-1, -1), (1, 1))),
    ("vstep", ((1, -1), (1, -1))),
    ("vstep_inv", ((-1, 1), (-1, 1))),
    ("checker", ((1, -1), (-1, 1))),
    ("checker_inv", ((-1, 1), (1, -1))),
    ("corner_tl", ((-1, 1), (1, 1))),
    ("corner_tr", ((1, -1), (1, 1))),
    ("corner_bl", ((1, 1), (-1, 1))),
    ("corner_br", ((1, 1), (1, -1))),
)

_RF_SCALES = (4, 8, 16)  # kernel sizes in cells
_ORIENT_CHANNELS = ("O0", "O1", "O2", "O3", "O4", "O5")
_PLAIN_CHANNELS = ("M", "L", "U", "V")


@dataclass(frozen=True)
class Filter:
    """One kernel plus the channels it applies to (None = all)."""

    name: str
    kernel: np.ndarray  # 2-D float64
    cell_span: tuple
    applicable_channels: tuple = None

    def __post_init__(self):
        if self.kernel.size == 0:
            raise ConfigError(f"filter {self.name!r} has an empty kernel")

    def applies_to(self, channel_name):
        return self.applicable_channels is None or channel_name in self.applicable_channels


@dataclass(frozen=True)
class FilterBank:
    name: str
    filters: tuple
    cell_pixel_size: int

    def __post_init__(self):
        names = [f.name for f in self.filters]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate filter names in bank {self.name!r}")

    def filters_for(self, channel_name):
        return [f for f in self.filters if f.applies_to(channel_name)]

    def output_channels(self, channel_names):
        """(channel, filter) pairs in output order: channel-major, filter-minor."""
        return [(ch, f) for ch in channel_names for f in self.filters_for(ch)]


def _replicate(pattern, cell_px):
    return np.kron(np.asarray(pattern, np.float64), np.ones((cell_px, cell_px)))


def build_cb11(cell_pixel_size=4):
    """The eleven 2x2-cell checkerboard-like filters, applicable to all channels."""
    if cell_pixel_size < 1:
        raise ConfigError(f"cell_pixel_size must be >= 1, got {cell_pixel_size}")
    filters = tuple(
        Filter(name, _replicate(pat, cell_pixel_size), (2, 2))
        for name, pat in _CB11_PATTERNS
    )
    return FilterBank("cb11", filters, cell_pixel_size)


def _step_cells(n, theta):
    """n x n cells of +-1 split by a line through the center with normal theta.

    Cell centers exactly on the line get an antisymmetric tie-break so the
    kernel always sums to zero (n is even for all the scales used here).
    """
    c = (n - 1) / 2.0
    ct, st = math.cos(theta), math.sin(theta)
    k = np.empty((n, n), np.float64)
    for yy in range(n):
        for xx in range(n):
            u = xx - c
            v = yy - c
            d = ct * u + st * v
            if abs(d) < 1e-9:
                d = u if u != 0.0 else v
            k[yy, xx] = 1.0 if d > 0 else -1.0
    return k


def build_rotated_filters(cell_pixel_size=1):
    """Constant plus two orthogonal step filters per channel at 3 scales.

    The step direction follows each orientation channel's bin center; the
    non-oriented channels use axis-aligned steps. Every channel ends up
    with 9 applicable filters (3 base x 3 scales).
    """
    if cell_pixel_size < 1:
        raise ConfigError(f"cell_pixel_size must be >= 1, got {cell_pixel_size}")
    nbins = len(_ORIENT_CHANNELS)
    # normal angle (degrees) -> channels whose primary or orthogonal step it is
    step_channels = {0: list(_PLAIN_CHANNELS), 90: list(_PLAIN_CHANNELS)}
    for i, ch in enumerate(_ORIENT_CHANNELS):
        primary = round(math.degrees((i + 0.5) * math.pi / nbins))
        for deg in (primary, primary + 90):
            step_channels.setdefault(deg, [])
            step_channels[deg].append(ch)
    filters = []
    for n in _RF_SCALES:
        filters.append(Filter(f"const{n}", _replicate(np.ones((n, n)), cell_pixel_size),
                              (n, n)))
        for deg in sorted(step_channels):
            cells = _step_cells(n, math.radians(deg))
            filters.append(Filter(f"rot{deg}_{n}", _replicate(cells, cell_pixel_size),
                                  (n, n), tuple(step_channels[deg])))
    return FilterBank("rf9", tuple(filters), cell_pixel_size)


def get_bank(name, cb11_cell_px=4, rf_cell_px=1):
    """Bank by config name; 'hogluv' is the identity (no filtering)."""
    if name == "hogluv":
        return None
    if name == "cb11":
        return build_cb11(cb11_cell_px)
    if name == "rf9":
        return build_rotated_filters(rf_cell_px)
    raise ConfigError(f"unknown filter bank {name!r} (use hogluv, cb11 or rf9)")


def _kernel_runs(kernel):
    """Constant runs (row, c0, c1, value) of a kernel's rows, zeros dropped."""
    runs = []
    kh, kw = kernel.shape
    for r in range(kh):
        c = 0
        while c < kw:
            v = kernel[r, c]
            c2 = c
            while c2 < kw and kernel[r, c2] == v:
                c2 += 1
            if v != 0.0:
                runs.append((r, c, c2, float(v)))
            c = c2
    return runs


def _kernel_rects(kernel):
    """Constant rectangles (r0, r1, c0, c1, value) covering a kernel.

    Rows with identical run structure merge into one rectangle per run, so
    cell-replicated kernels decompose into a handful of rectangles and the
    correlation reduces to integral-image box sums.
    """
    kh = kernel.shape[0]
    row_runs = [tuple((c0, c1, v) for (_r, c0, c1, v) in _kernel_runs(kernel[r:r + 1]))
                for r in range(kh)]
    rects = []
    r = 0
    while r < kh:
        r2 = r
        while r2 < kh and row_runs[r2] == row_runs[r]:
            r2 += 1
        for (c0, c1, v) in row_runs[r]:
            rects.append((r, r2, c0, c1, v))
        r = r2
    return rects


def _pack_bank(channel_names, bank):
    """Flattened (channel, filter) rectangle arrays for the kernels."""
    pair_channel, r0s, r1s, c0s, c1s, vals = [], [], [], [], [], []
    start = [0]
    oys, oxs = [], []
    out_names = []
    name_index = {n: i for i, n in enumerate(channel_names)}
    for ch in channel_names:
        for f in bank.filters_for(ch):
            pair_channel.append(name_index[ch])
            for (r0, r1, c0, c1, v) in _kernel_rects(f.kernel):
                r0s.append(r0)
                r1s.append(r1)
                c0s.append(c0)
                c1s.append(c1)
                vals.append(v)
            start.append(len(r0s))
            kh, kw = f.kernel.shape
            oys.append((kh - 1) // 2)
            oxs.append((kw - 1) // 2)
            out_names.append(f"{ch}:{f.name}")
    args = (np.asarray(pair_channel, np.int64), np.asarray(r0s, np.int64),
            np.asarray(r1s, np.int64), np.asarray(c0s, np.int64),
            np.asarray(c1s, np.int64), np.asarray(vals, np.float64),
            np.asarray(start, np.int64), np.asarray(oys, np.int64),
            np.asarray(oxs, np.int64))
    return out_names, args


def apply_bank(stack, bank):
    """Cross-correlate every applicable (channel, filter) pair of the stack.

    Output channels are named "{channel}:{filter}" in channel-major,
    filter-minor order; planes keep the input dimensions (zero padding).
    """
    if stack.provenance != "hogluv":
        raise InputError(
            f"filter banks apply to hogluv stacks, got provenance {stack.provenance!r}")
    H, W = stack.height, stack.width
    for f in bank.filters:
        kh, kw = f.kernel.shape
        if kh > H or kw > W:
            raise ConfigError(
                f"kernel {f.name!r} ({kh}x{kw}) larger than plane ({H}x{W})")

    out_names, args = _pack_bank(stack.names, bank)
    planes = _kernels.apply_filter_bank(np.ascontiguousarray(stack.planes), *args)
    return ChannelStack(tuple(out_names), planes,
                        f"filtered:{bank.name}", stack.downsample_factor)
