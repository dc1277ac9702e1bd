"""Forward software ISP.

Stage order is fixed::

    raw -> normalize -> lens_shading_correction -> white_balance -> demosaic
        -> xyz -> srgb -> gamma

Every stage checks the color state of its input, so stages cannot be run out
of order. Mosaic and encoded states are clipped to [0, 1]; XYZ and linear
sRGB are left unclipped until rendering.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from . import color
from .dng import CameraProfile, CfaPattern
from .errors import CalibrationError, StageError
from .image import ImagePlane, State


class Stage(enum.Enum):
    NORMALIZE = "normalize"
    LENS_SHADING = "lens_shading_correction"
    WHITE_BALANCE = "white_balance"
    DEMOSAIC = "demosaic"
    XYZ = "xyz"
    SRGB = "srgb"
    GAMMA = "gamma"


STAGE_ORDER = list(Stage)

STAGE_OUTPUT_STATE = {
    Stage.NORMALIZE: State.MOSAIC_NORMALIZED,
    Stage.LENS_SHADING: State.MOSAIC_NORMALIZED,
    Stage.WHITE_BALANCE: State.MOSAIC_WB,
    Stage.DEMOSAIC: State.CAMERA_RGB_WB,
    Stage.XYZ: State.XYZ,
    Stage.SRGB: State.LINEAR_SRGB,
    Stage.GAMMA: State.ENCODED_SRGB,
}


class Demosaic(enum.Enum):
    BILINEAR = "bilinear"
    EDGE_AWARE = "edge-aware"


@dataclass(frozen=True)
class PipelineConfig:
    """Options for :func:`run_pipeline`.

    ``wb_gains`` defaults to gains derived from the profile's AsShotNeutral.
    The forward matrix is ``forward_matrix`` if given, else the profile's pair
    interpolated at ``cct``, else at the CCT estimated from AsShotNeutral.
    """

    terminal_stage: Stage = Stage.GAMMA
    demosaic: Demosaic = Demosaic.EDGE_AWARE
    wb_gains: Optional[tuple[float, float, float]] = None
    allow_green_gain: bool = False
    forward_matrix: Optional[tuple] = None
    cct: Optional[float] = None
    swap_calibration_pairing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terminal_stage", Stage(self.terminal_stage))
        object.__setattr__(self, "demosaic", Demosaic(self.demosaic))
        if self.wb_gains is not None:
            gains = tuple(float(g) for g in self.wb_gains)
            if len(gains) != 3 or min(gains) <= 0:
                raise StageError("wb_gains must be three positive numbers")
            if gains[1] != 1.0 and not self.allow_green_gain:
                raise StageError("green WB gain is fixed at 1.0 (set allow_green_gain to override)")
            object.__setattr__(self, "wb_gains", gains)


def wb_gains_from_neutral(neutral: Sequence[float]) -> tuple[float, float, float]:
    """gain_c = neutral_green / neutral_c, so the green gain is exactly 1."""
    n = [float(v) for v in neutral]
    if min(n) <= 0:
        raise CalibrationError("invalid calibration: as_shot_neutral must be positive")
    return (n[1] / n[0], 1.0, n[1] / n[2])


# ---------------------------------------------------------------------------
# Stages


def normalize_raw(raw: np.ndarray, black: float, white: float) -> ImagePlane:
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise StageError(f"raw mosaic must be 2-D, got shape {raw.shape}")
    if not white > black:
        raise CalibrationError("invalid calibration: white level must exceed black level")
    out = (raw.astype(np.float64) - black) / (white - black)
    return ImagePlane(np.clip(out, 0.0, 1.0), State.MOSAIC_NORMALIZED)


def _upsample_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear upsampling with grid corners pinned to image corners."""
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, height) if gh > 1 else np.zeros(height)
    xs = np.linspace(0.0, gw - 1.0, width) if gw > 1 else np.zeros(width)
    return ndimage.map_coordinates(grid, np.meshgrid(ys, xs, indexing="ij"), order=1, mode="nearest")


def lens_shading_correct(img: ImagePlane, gain_map: Optional[np.ndarray] = None,
                         cfa: Optional[CfaPattern] = None) -> ImagePlane:
    """Multiply by an upsampled per-channel gain grid and clip to [0, 1].

    ``gain_map`` is (3, gh, gw) or (gh, gw) for a channel-independent grid.
    Mosaics need ``cfa`` to pick each site's channel. No map means identity.
    """
    img.expect(State.MOSAIC_NORMALIZED)
    if gain_map is None:
        return img
    g = np.asarray(gain_map, dtype=np.float64)
    if g.ndim == 2:
        g = np.broadcast_to(g, (3,) + g.shape)
    if g.ndim != 3 or g.shape[0] != 3:
        raise StageError(f"gain map must have shape (3, gh, gw), got {g.shape}")
    if not np.all(g > 0):
        raise CalibrationError("invalid calibration: lens gain map must be positive")
    h, w = img.height, img.width
    full = np.stack([_upsample_bilinear(g[c], h, w) for c in range(3)])
    if cfa is None:
        raise StageError("lens shading on a mosaic needs the CFA pattern")
    gain = np.take_along_axis(full, cfa.channel_map(h, w)[None], axis=0)[0]
    out = img.plane.astype(np.float64) * gain
    return ImagePlane(np.clip(out, 0.0, 1.0), img.state)


def white_balance_mosaic(img: ImagePlane, cfa: CfaPattern, gains: Sequence[float]) -> ImagePlane:
    img.expect(State.MOSAIC_NORMALIZED)
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape != (3,) or np.any(gains <= 0):
        raise StageError("white balance gains must be three positive numbers")
    per_site = gains[cfa.channel_map(img.height, img.width)]
    out = img.plane.astype(np.float64) * per_site
    return ImagePlane(np.clip(out, 0.0, 1.0), State.MOSAIC_WB)


def _check_demosaic_input(img: ImagePlane):
    img.expect(State.MOSAIC_WB, State.MOSAIC_NORMALIZED, State.MOSAIC_RAW)
    h, w = img.height, img.width
    if h < 4 or w < 4 or h % 2 or w % 2:
        raise StageError(f"demosaic needs even dimensions >= 4, got {w}x{h}")


# 'mirror' in scipy.ndimage is reflect-101; it keeps the Bayer phase at the
# border for even-sized mosaics, so these fixed kernels stay exact there too.
_KERNEL_G = np.array([[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]])
_KERNEL_RB = np.array([[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]])


def _interp(values: np.ndarray, mask: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return ndimage.convolve(np.where(mask, values, 0.0), kernel, mode="mirror")


def _bilinear_green(mosaic: np.ndarray, masks: np.ndarray) -> np.ndarray:
    return np.where(masks[1], mosaic, _interp(mosaic, masks[1], _KERNEL_G))


def _output_state(img: ImagePlane) -> State:
    return State.CAMERA_RAW if img.state == State.MOSAIC_RAW else State.CAMERA_RGB_WB


def demosaic_bilinear(img: ImagePlane, cfa: CfaPattern) -> ImagePlane:
    _check_demosaic_input(img)
    mosaic = img.plane.astype(np.float64)
    masks = cfa.masks(img.height, img.width)
    g = _bilinear_green(mosaic, masks)
    r = np.where(masks[0], mosaic, _interp(mosaic, masks[0], _KERNEL_RB))
    b = np.where(masks[2], mosaic, _interp(mosaic, masks[2], _KERNEL_RB))
    return ImagePlane(np.stack([r, g, b], axis=-1), _output_state(img))


def demosaic_edge_aware(img: ImagePlane, cfa: CfaPattern) -> ImagePlane:
    """Gradient-directed green, then bilinear interpolation of R-G and B-G.

    At each red/blue site green is averaged along the direction with the
    smaller absolute neighbor difference; on a tie the four-neighbor
    (bilinear) value is used.
    """
    _check_demosaic_input(img)
    mosaic = img.plane.astype(np.float64)
    masks = cfa.masks(img.height, img.width)

    p = np.pad(mosaic, 1, mode="reflect")
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    grad_h = np.abs(left - right)
    grad_v = np.abs(up - down)
    g_bilinear = _bilinear_green(mosaic, masks)
    g_est = np.where(grad_h < grad_v, 0.5 * (left + right),
                     np.where(grad_v < grad_h, 0.5 * (up + down), g_bilinear))
    g = np.where(masks[1], mosaic, g_est)

    out = [None, g, None]
    for c in (0, 2):
        diff = _interp(mosaic - g, masks[c], _KERNEL_RB)
        out[c] = np.where(masks[c], mosaic, g + diff)
    return ImagePlane(np.clip(np.stack(out, axis=-1), 0.0, 1.0), _output_state(img))


def demosaic(img: ImagePlane, cfa: CfaPattern, method: Demosaic = Demosaic.EDGE_AWARE) -> ImagePlane:
    if Demosaic(method) is Demosaic.BILINEAR:
        return demosaic_bilinear(img, cfa)
    return demosaic_edge_aware(img, cfa)


def camera_to_xyz(img: ImagePlane, forward) -> ImagePlane:
    """x_XYZ = F @ x_camWB per pixel. XYZ is not clipped."""
    img.expect(State.CAMERA_RGB_WB)
    color.mat3_invert(forward)  # singularity check
    return ImagePlane(color.apply_mat3(forward, img.data), State.XYZ)


def xyz_to_linear_srgb(img: ImagePlane) -> ImagePlane:
    img.expect(State.XYZ)
    return ImagePlane(color.xyz_d50_to_linear_srgb(img.data), State.LINEAR_SRGB)


def encode_srgb(img: ImagePlane) -> ImagePlane:
    img.expect(State.LINEAR_SRGB)
    return ImagePlane(color.srgb_encode(img.data), State.ENCODED_SRGB)


def render_srgb(img: ImagePlane) -> ImagePlane:
    """XYZ (D50) -> clipped, sRGB-encoded display image."""
    return encode_srgb(xyz_to_linear_srgb(img))


# ---------------------------------------------------------------------------
# Full chain


def resolve_forward_matrix(profile: CameraProfile, cfg: PipelineConfig) -> np.ndarray:
    if cfg.forward_matrix is not None:
        return np.asarray(cfg.forward_matrix, dtype=np.float64).reshape(3, 3)
    swap = cfg.swap_calibration_pairing
    cct = cfg.cct if cfg.cct is not None else profile.as_shot_cct(swap)
    return profile.forward_matrix_at(cct, swap)


def run_pipeline(raw: np.ndarray, profile: CameraProfile, cfg: PipelineConfig = PipelineConfig()) -> ImagePlane:
    """Run the stage chain on a raw mosaic, stopping after ``cfg.terminal_stage``."""
    terminal = STAGE_ORDER.index(cfg.terminal_stage)
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise StageError(f"raw mosaic must be 2-D, got shape {raw.shape}")
    if raw.shape[0] % 2 or raw.shape[1] % 2:
        raise StageError(f"raw mosaic needs even dimensions, got {raw.shape[1]}x{raw.shape[0]}")
    gains = cfg.wb_gains if cfg.wb_gains is not None else wb_gains_from_neutral(profile.as_shot_neutral)
    forward = resolve_forward_matrix(profile, cfg) if terminal >= STAGE_ORDER.index(Stage.XYZ) else None

    steps = [
        lambda _: normalize_raw(raw, profile.black_level, profile.white_level),
        lambda im: lens_shading_correct(im, profile.lens_gain_map, profile.cfa),
        lambda im: white_balance_mosaic(im, profile.cfa, gains),
        lambda im: demosaic(im, profile.cfa, cfg.demosaic),
        lambda im: camera_to_xyz(im, forward),
        xyz_to_linear_srgb,
        encode_srgb,
    ]
    img = None
    for step in steps[:terminal + 1]:
        img = step(img)
    return img
