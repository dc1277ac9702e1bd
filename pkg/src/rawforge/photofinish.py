"""Photo-finishing variants: WB perturbation, tone mapping and contrast."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import color
from .dng import CameraProfile
from .errors import RawForgeError
from .image import ImagePlane, State
from .isp import Demosaic, PipelineConfig, Stage, resolve_forward_matrix, run_pipeline, wb_gains_from_neutral
from .seeding import SEED_MASK, generator

WB_RANGE = (0.7, 1.3)
BETA_MEAN, BETA_STD, BETA_RANGE = 0.6, 0.1, (0.1, 2.0)
GAMMA_MEAN, GAMMA_STD, GAMMA_RANGE = 0.9, 0.1, (0.5, 1.5)
CONTRAST_RANGE = (0.7, 1.3)
CONTRAST_PIVOT = 0.5


@dataclass(frozen=True)
class PhotoFinishParams:
    r: float
    b: float
    beta: float
    gamma: float
    c: float
    seed: int = 0

    def __post_init__(self):
        checks = {
            "r": WB_RANGE, "b": WB_RANGE, "beta": BETA_RANGE,
            "gamma": GAMMA_RANGE, "c": CONTRAST_RANGE,
        }
        for name, (lo, hi) in checks.items():
            value = float(getattr(self, name))
            if not lo <= value <= hi:
                raise RawForgeError(f"photo-finishing parameter {name}={value} outside [{lo}, {hi}]")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "seed", int(self.seed) & SEED_MASK)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_params(seed: int) -> PhotoFinishParams:
    """Draw r, b, beta, gamma, c (in that order) from a PCG64 seeded with ``seed``.

    Normal draws are clipped to their range, never resampled.
    """
    rng = generator(seed)
    r = rng.uniform(*WB_RANGE)
    b = rng.uniform(*WB_RANGE)
    beta = float(np.clip(rng.normal(BETA_MEAN, BETA_STD), *BETA_RANGE))
    gamma = float(np.clip(rng.normal(GAMMA_MEAN, GAMMA_STD), *GAMMA_RANGE))
    c = rng.uniform(*CONTRAST_RANGE)
    return PhotoFinishParams(r=r, b=b, beta=beta, gamma=gamma, c=c, seed=seed)


def tone_map(e, beta: float, gamma: float):
    """T(E) = (1 + beta) E^gamma / (beta + E^gamma), for linear E in [0, 1]."""
    eg = np.power(np.clip(np.asarray(e, dtype=np.float64), 0.0, 1.0), gamma)
    out = (1.0 + beta) * eg / (beta + eg)
    return float(out) if out.ndim == 0 else out


def inverse_tone_map(t, beta: float, gamma: float):
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    eg = beta * t / (1.0 + beta - t)
    out = np.power(eg, 1.0 / gamma)
    return float(out) if out.ndim == 0 else out


def apply_contrast(i, c: float):
    """Scale about the mid-gray pivot, then clip to [0, 1]."""
    out = np.clip((np.asarray(i, dtype=np.float64) - CONTRAST_PIVOT) * c + CONTRAST_PIVOT, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def variant_wb_gains(profile: CameraProfile, params: PhotoFinishParams) -> tuple[float, float, float]:
    base_r, _, base_b = wb_gains_from_neutral(profile.as_shot_neutral)
    return (base_r * params.r, 1.0, base_b * params.b)


def render_variant(raw: np.ndarray, profile: CameraProfile, params: PhotoFinishParams,
                   demosaic: Demosaic = Demosaic.EDGE_AWARE, apply_tone_map: bool = True) -> ImagePlane:
    """Render one photo-finished sRGB variant of a raw mosaic.

    The pipeline runs to the gamma stage with perturbed WB gains; the result
    is decoded to linear, tone mapped, re-encoded, then contrast is applied
    in the encoded domain. ``apply_tone_map=False`` skips the
    decode/tone-map/encode step entirely.
    """
    cfg = PipelineConfig(terminal_stage=Stage.GAMMA, demosaic=demosaic,
                         wb_gains=variant_wb_gains(profile, params))
    encoded = run_pipeline(raw, profile, cfg).data.astype(np.float64)
    if apply_tone_map:
        encoded = color.srgb_encode(tone_map(color.srgb_decode(encoded), params.beta, params.gamma))
    out = apply_contrast(encoded, params.c)
    return ImagePlane(out, State.ENCODED_SRGB)


def invert_variant(img: ImagePlane, profile: CameraProfile, params: PhotoFinishParams,
                   forward=None) -> ImagePlane:
    """Undo a variant's finishing with its known parameters, back to XYZ.

    Exact (up to float error) wherever nothing clipped along the way; clipped
    pixels come back at the clip boundary. ``forward`` defaults to the matrix
    :func:`run_pipeline` would have used.
    """
    img.expect(State.ENCODED_SRGB)
    x = img.data.astype(np.float64)
    x = (x - CONTRAST_PIVOT) / params.c + CONTRAST_PIVOT
    lin = inverse_tone_map(color.srgb_decode(x), params.beta, params.gamma)
    xyz_variant = color.linear_srgb_to_xyz_d50(lin)
    if forward is None:
        forward = resolve_forward_matrix(profile, PipelineConfig())
    forward = np.asarray(forward, dtype=np.float64)
    # variant WB = anchor WB * diag(r, 1, b) in camera space
    undo = forward @ np.diag([1.0 / params.r, 1.0, 1.0 / params.b]) @ color.mat3_invert(forward)
    return ImagePlane(color.apply_mat3(undo, xyz_variant), State.XYZ)
