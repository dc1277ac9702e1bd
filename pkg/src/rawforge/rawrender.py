"""Render CIE XYZ images into a target camera's linear raw space.

Chain: interpolate calibration matrices at a CCT, invert the forward matrix
to get white-balanced camera RGB, multiply by the green-normalized illuminant
gains, optionally add heteroscedastic noise, optionally re-mosaic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import color
from .dng import CameraProfile, CfaPattern
from .errors import CalibrationError, RawForgeError, StageError
from .image import ImagePlane, State
from .seeding import SEED_MASK, counter_normal


@dataclass(frozen=True, eq=False)
class IlluminantSpec:
    cct: float
    xyz_white: np.ndarray
    cam_gains: np.ndarray

    def __post_init__(self):
        gains = np.array(self.cam_gains, dtype=np.float64).reshape(3)
        if gains[1] != 1.0 or np.any(gains <= 0) or not np.all(np.isfinite(gains)):
            raise CalibrationError("illuminant gains must be positive with green exactly 1.0")
        white = np.array(self.xyz_white, dtype=np.float64).reshape(3)
        gains.flags.writeable = False
        white.flags.writeable = False
        object.__setattr__(self, "cam_gains", gains)
        object.__setattr__(self, "xyz_white", white)
        object.__setattr__(self, "cct", float(self.cct))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Per-channel shot (``alpha``) and read (``beta``) coefficients, shared strength ``s``.

    Variance at a pixel of channel c with value I is ``s * (alpha[c] * I + beta[c])``.
    """

    alpha: Sequence[float]
    beta: Sequence[float]
    s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=np.float64), (3,)).copy()
        beta = np.broadcast_to(np.asarray(self.beta, dtype=np.float64), (3,)).copy()
        if np.any(alpha < 0) or np.any(beta < 0) or self.s < 0:
            raise RawForgeError("noise coefficients and strength must be non-negative")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "seed", int(self.seed) & SEED_MASK)

    @classmethod
    def from_profile(cls, profile: CameraProfile, s: float = 1.0, seed: int = 0) -> "NoiseSpec":
        return cls(profile.noise_alpha, profile.noise_beta, s, seed)


def build_illuminant(profile: CameraProfile, cct: float,
                     swap_calibration_pairing: bool = False) -> IlluminantSpec:
    """l_RGB = C(T) l_XYZ, divided by its green component."""
    white = color.cct_to_xyz(cct)
    cam = profile.color_matrix_at(cct, swap_calibration_pairing) @ white
    if not cam[1] > 0:
        raise CalibrationError("degenerate illuminant")
    gains = cam / cam[1]
    gains[1] = 1.0
    if np.any(gains <= 0):
        raise CalibrationError("degenerate illuminant")
    return IlluminantSpec(cct=cct, xyz_white=white, cam_gains=gains)


def xyz_to_camera_wb(img: ImagePlane, forward) -> ImagePlane:
    """I_WB = clip(F^-1 @ x_XYZ, 0, 1) per pixel."""
    img.expect(State.XYZ)
    inv = color.mat3_invert(forward)
    return ImagePlane(np.clip(color.apply_mat3(inv, img.data), 0.0, 1.0), State.CAMERA_RGB_WB)


def apply_illuminant(img: ImagePlane, ill: IlluminantSpec) -> ImagePlane:
    img.expect(State.CAMERA_RGB_WB)
    out = img.data.astype(np.float64) * ill.cam_gains
    return ImagePlane(np.clip(out, 0.0, 1.0), State.CAMERA_RAW)


def synthesize_noise(img: ImagePlane, spec: NoiseSpec, cfa: Optional[CfaPattern] = None) -> ImagePlane:
    """Add zero-mean Gaussian noise with variance s(alpha_c I + beta_c), then clip.

    Works on 3-channel camera raw or on a mosaic (``cfa`` then selects each
    site's coefficients). Noise at each pixel depends only on the seed and
    the pixel coordinates.
    """
    img.expect(State.CAMERA_RAW, State.MOSAIC_RAW)
    if spec.s == 0.0:
        return img
    x = img.data.astype(np.float64)
    if img.channels == 1:
        if cfa is None:
            raise StageError("noise on a mosaic needs the CFA pattern")
        cmap = cfa.channel_map(img.height, img.width)[:, :, None]
        alpha, beta = spec.alpha[cmap], spec.beta[cmap]
    else:
        alpha, beta = spec.alpha, spec.beta
    var = spec.s * (alpha * x + beta)
    z = counter_normal(spec.seed, x.shape)
    return ImagePlane(np.clip(x + np.sqrt(np.maximum(var, 0.0)) * z, 0.0, 1.0), img.state)


_MOSAIC_STATE = {
    State.CAMERA_RAW: State.MOSAIC_RAW,
    State.CAMERA_RGB_WB: State.MOSAIC_WB,
}


def mosaic(img: ImagePlane, cfa: CfaPattern) -> ImagePlane:
    """Keep only each site's CFA color sample."""
    img.expect(*_MOSAIC_STATE)
    if img.height % 2 or img.width % 2:
        raise StageError(f"mosaic needs even dimensions, got {img.width}x{img.height}")
    cmap = cfa.channel_map(img.height, img.width)
    out = np.take_along_axis(img.data, cmap[:, :, None], axis=2)
    return ImagePlane(out, _MOSAIC_STATE[img.state])


def render_raw(xyz: ImagePlane, profile: CameraProfile, cct: Optional[float] = None,
               noise: Optional[NoiseSpec] = None, cfa_out: Optional[CfaPattern] = None,
               illuminant: Optional[IlluminantSpec] = None,
               swap_calibration_pairing: bool = False) -> ImagePlane:
    """XYZ image -> linear camera raw (3-channel, or a mosaic if ``cfa_out``).

    ``illuminant`` overrides the gains normally built from ``cct``; the
    forward matrix is still interpolated at ``cct`` (or at the override's
    CCT).
    """
    if illuminant is None:
        if cct is None:
            raise RawForgeError("render_raw needs a CCT or an explicit illuminant")
        illuminant = build_illuminant(profile, cct, swap_calibration_pairing)
    t = illuminant.cct if cct is None else cct
    forward = profile.forward_matrix_at(t, swap_calibration_pairing)
    out = apply_illuminant(xyz_to_camera_wb(xyz, forward), illuminant)
    if noise is not None:
        out = synthesize_noise(out, noise)
    if cfa_out is not None:
        out = mosaic(out, CfaPattern(cfa_out))
    return out
