"""Gradient and color channels computed from an RGB image.

The 10-channel stack is [M, O0..O5, L, U, V]: normalized gradient
magnitude, six unsigned orientation bins of that magnitude, and the CIE
LUV color planes rescaled to [0, 1]. Channel order is normative so that
downstream feature vectors are byte-for-byte reproducible.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, InputError

HOGLUV_NAMES = ("M", "O0", "O1", "O2", "O3", "O4", "O5", "L", "U", "V")

# sRGB (linear) -> XYZ under D65; the white point is the matrix's row sums
# so neutral inputs land exactly on the reference chromaticity.
_RGB2XYZ = np.array([
    [0.412453, 0.357580, 0.180423],
    [0.212671, 0.715160, 0.072169],
    [0.019334, 0.119193, 0.950227],
])
_WHITE_X, _WHITE_Y, _WHITE_Z = _RGB2XYZ.sum(axis=1)
_WHITE_DEN = _WHITE_X + 15.0 * _WHITE_Y + 3.0 * _WHITE_Z
_WHITE_U = 4.0 * _WHITE_X / _WHITE_DEN
_WHITE_V = 9.0 * _WHITE_Y / _WHITE_DEN
# Fixed affine ranges used to map L*/u*/v* into [0, 1].
_L_MAX = 100.0
_U_MIN, _U_MAX = -134.0, 220.0
_V_MIN, _V_MAX = -140.0, 122.0


@dataclass(frozen=True)
class ChannelStack:
    """Named set of same-shape scalar planes derived from one image."""

    names: tuple
    planes: np.ndarray  # (C, H, W) float32
    provenance: str  # "hogluv" | "filtered:<bank>" | "cnn:<layer>"
    downsample_factor: int = 1

    def __post_init__(self):
        if self.planes.ndim != 3:
            raise InputError(f"planes must be (C, H, W), got shape {self.planes.shape}")
        if len(self.names) != self.planes.shape[0]:
            raise InputError(
                f"{len(self.names)} names for {self.planes.shape[0]} planes")
        if len(set(self.names)) != len(self.names):
            raise InputError("channel names must be unique within a stack")
        if self.downsample_factor < 1:
            raise InputError(f"downsample_factor must be >= 1, got {self.downsample_factor}")
        if not np.isfinite(self.planes).all():
            raise InputError("non-finite values in channel planes")

    @property
    def num_channels(self):
        return self.planes.shape[0]

    @property
    def height(self):
        return self.planes.shape[1]

    @property
    def width(self):
        return self.planes.shape[2]

    def plane(self, name):
        return self.planes[self.names.index(name)]


@dataclass(frozen=True)
class ChannelConfig:
    """Knobs for the gradient/orientation computation."""

    smooth_radius: int = 5
    norm_epsilon: float = 0.005
    num_orientations: int = 6
    binning: str = "hard"  # "hard" | "soft"
    shrink: int = 1

    def __post_init__(self):
        if self.norm_epsilon <= 0:
            raise ConfigError(f"norm_epsilon must be > 0, got {self.norm_epsilon}")
        if self.num_orientations != 6:
            raise ConfigError("num_orientations is fixed at 6")
        if self.binning not in ("hard", "soft"):
            raise ConfigError(f"binning must be 'hard' or 'soft', got {self.binning!r}")
        if self.shrink < 1:
            raise ConfigError(f"shrink must be >= 1, got {self.shrink}")
        if self.smooth_radius < 0:
            raise ConfigError(f"smooth_radius must be >= 0, got {self.smooth_radius}")


def validate_image(img):
    """Check an (H, W, 3) float RGB image with values in [0, 1]."""
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise InputError(f"expected (H, W, 3) RGB array, got "
                         f"{getattr(img, 'shape', type(img))}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InputError(f"image must be at least 1x1, got {img.shape}")
    if not np.isfinite(img).all():
        raise InputError("non-finite pixel values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InputError(f"pixel values outside [0, 1]: "
                         f"min={img.min():.4g} max={img.max():.4g}")
    return np.ascontiguousarray(img, dtype=np.float32)


def rgb_to_luv(img):
    """LUV color planes, each affinely rescaled to [0, 1].

    The input is treated as linear RGB; XYZ uses the D65 matrix above. The
    chromaticity of zero-luminance pixels is defined to equal the white
    point's, so black maps to u* = v* = 0 (the neutral offsets after
    rescaling).
    """
    img = validate_image(img)
    flat = img.reshape(-1, 3).astype(np.float64)
    xyz = flat @ _RGB2XYZ.T
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    big = y > 0.008856
    lstar = np.where(big, 116.0 * np.cbrt(np.maximum(y, 1e-30)) - 16.0, 903.3 * y)
    denom = x + 15.0 * y + 3.0 * z
    safe = denom > 1e-12
    up = np.where(safe, 4.0 * x / np.where(safe, denom, 1.0), _WHITE_U)
    vp = np.where(safe, 9.0 * y / np.where(safe, denom, 1.0), _WHITE_V)
    ustar = 13.0 * lstar * (up - _WHITE_U)
    vstar = 13.0 * lstar * (vp - _WHITE_V)
    h, w = img.shape[:2]
    planes = np.stack([
        np.clip(lstar / _L_MAX, 0.0, 1.0),
        np.clip((ustar - _U_MIN) / (_U_MAX - _U_MIN), 0.0, 1.0),
        np.clip((vstar - _V_MIN) / (_V_MAX - _V_MIN), 0.0, 1.0),
    ]).reshape(3, h, w).astype(np.float32)
    return ChannelStack(("L", "U", "V"), planes, "hogluv")


def _normalized_gradient(img, cfg):
    """(magnitude, orientation) with the magnitude normalized by its local mean."""
    mag, ori = _kernels.gradient_mag_ori(img)
    smooth = _kernels.box_mean(mag, cfg.smooth_radius)
    norm = mag / (smooth + np.float32(cfg.norm_epsilon))
    return norm.astype(np.float32), ori


def gradient_magnitude(img, cfg=ChannelConfig()):
    """Single-channel normalized gradient magnitude stack."""
    img = validate_image(img)
    norm, _ = _normalized_gradient(img, cfg)
    return ChannelStack(("M",), norm[None, :, :], "hogluv")


def orientation_channels(img, cfg=ChannelConfig()):
    """Six orientation channels O0..O5 of the normalized gradient magnitude.

    With hard binning the six planes sum to the magnitude plane exactly;
    soft binning splits each pixel between the two nearest bins.
    """
    img = validate_image(img)
    norm, ori = _normalized_gradient(img, cfg)
    planes = _kernels.bin_orientations(norm, ori, cfg.num_orientations,
                                       cfg.binning == "soft")
    names = tuple(f"O{i}" for i in range(cfg.num_orientations))
    return ChannelStack(names, planes, "hogluv")


def compute_hogluv(img, cfg=ChannelConfig()):
    """The full 10-channel stack in the fixed order [M, O0..O5, L, U, V]."""
    img = validate_image(img)
    norm, ori = _normalized_gradient(img, cfg)
    obins = _kernels.bin_orientations(norm, ori, cfg.num_orientations,
                                      cfg.binning == "soft")
    luv = rgb_to_luv(img)
    planes = np.concatenate([norm[None], obins, luv.planes], axis=0)
    ds = 1
    if cfg.shrink > 1:
        if planes.shape[1] < cfg.shrink or planes.shape[2] < cfg.shrink:
            raise ConfigError(f"shrink {cfg.shrink} larger than image {img.shape[:2]}")
        planes = _kernels.block_mean(planes, cfg.shrink)
        ds = cfg.shrink
    return ChannelStack(HOGLUV_NAMES, np.ascontiguousarray(planes), "hogluv", ds)
