"""Immutable image planes tagged with their color state."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import StageError


class State(enum.Enum):
    MOSAIC_NORMALIZED = "MosaicNormalized"
    MOSAIC_WB = "MosaicWB"
    CAMERA_RGB_WB = "CameraRgbWB"
    XYZ = "Xyz"
    LINEAR_SRGB = "LinearSrgb"
    ENCODED_SRGB = "EncodedSrgb"
    # outputs of the XYZ -> camera raw renderer
    CAMERA_RAW = "CameraRaw"
    MOSAIC_RAW = "MosaicRaw"

    @property
    def is_mosaic(self) -> bool:
        return self in (State.MOSAIC_NORMALIZED, State.MOSAIC_WB, State.MOSAIC_RAW)


_UNIT_RANGE_STATES = {
    State.MOSAIC_NORMALIZED, State.MOSAIC_WB, State.ENCODED_SRGB,
    State.CAMERA_RAW, State.MOSAIC_RAW,
}


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """H x W x C float32 image (C is 1 for mosaics, 3 otherwise).

    The array is stored read-only; stages always return a new plane.
    """

    data: np.ndarray
    state: State

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise StageError(f"image data must be HxWx1 or HxWx3, got shape {arr.shape}")
        state = State(self.state)
        if state.is_mosaic != (arr.shape[2] == 1):
            raise StageError(f"{state.value} images must have {1 if state.is_mosaic else 3} channel(s)")
        if not np.all(np.isfinite(arr)):
            raise StageError("image contains non-finite values")
        if state in _UNIT_RANGE_STATES and arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise StageError(f"{state.value} values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "state", state)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def plane(self) -> np.ndarray:
        """2-D view of a single-channel image."""
        if self.channels != 1:
            raise StageError("plane is only defined for single-channel images")
        return self.data[:, :, 0]

    def expect(self, *states: State) -> "ImagePlane":
        if self.state not in states:
            names = ", ".join(s.value for s in states)
            raise StageError(f"stage expects {names} input, got {self.state.value}")
        return self

    def __eq__(self, other):
        if not isinstance(other, ImagePlane):
            return NotImplemented
        return self.state == other.state and np.array_equal(self.data, other.data)

    __hash__ = None
