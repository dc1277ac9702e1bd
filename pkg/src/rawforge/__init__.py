"""Parametric software ISP, camera-raw rendering and many-to-one dataset tools."""

from .dng import CameraProfile, CfaPattern, parse_dng, profile_from_json, profile_to_json
from .errors import CalibrationError, DngError, ProfileSchemaError, RawForgeError, StageError
from .image import ImagePlane, State
from .isp import Demosaic, PipelineConfig, Stage, run_pipeline
from .photofinish import PhotoFinishParams, render_variant, sample_params
from .rawrender import IlluminantSpec, NoiseSpec, build_illuminant, render_raw

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "CameraProfile", "CfaPattern", "Demosaic", "DngError",
    "IlluminantSpec", "ImagePlane", "NoiseSpec", "PhotoFinishParams",
    "PipelineConfig", "ProfileSchemaError", "RawForgeError", "Stage", "StageError",
    "State", "build_illuminant", "parse_dng", "profile_from_json", "profile_to_json",
    "render_raw", "render_variant", "run_pipeline", "sample_params",
]
