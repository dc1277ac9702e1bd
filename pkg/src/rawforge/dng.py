"""Camera calibration metadata: DNG/TIFF tag parsing and the JSON profile format.

Only metadata is read. Raw pixel payloads are never decoded; sensor data
comes in separately as 16-bit PNG/PGM (see :mod:`rawforge.imageio`).
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import jsonschema
import numpy as np

from . import color
from .errors import CalibrationError, DngError, ProfileSchemaError


class CfaPattern(enum.Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    @property
    def tile(self) -> np.ndarray:
        """2x2 array of channel indices (0=R, 1=G, 2=B)."""
        idx = {"R": 0, "G": 1, "B": 2}
        return np.array([idx[ch] for ch in self.value]).reshape(2, 2)

    def channel_map(self, height: int, width: int) -> np.ndarray:
        """Channel index of every site of a ``height x width`` mosaic."""
        reps = (-(-height // 2), -(-width // 2))
        return np.tile(self.tile, reps)[:height, :width]

    def masks(self, height: int, width: int) -> np.ndarray:
        """Boolean (3, H, W) masks, one per color channel."""
        cmap = self.channel_map(height, width)
        return np.stack([cmap == c for c in range(3)])


# ---------------------------------------------------------------------------
# EXIF LightSource -> CCT

# Values follow the usual DNG reader convention for the EXIF LightSource table.
ILLUMINANT_CCT = {
    1: 5500.0,   # Daylight
    2: 4150.0,   # Fluorescent
    3: 2850.0,   # Tungsten (incandescent)
    4: 5500.0,   # Flash
    9: 5500.0,   # Fine weather
    10: 6500.0,  # Cloudy
    11: 7500.0,  # Shade
    12: 6430.0,  # Daylight fluorescent (D 5700-7100K)
    13: 5000.0,  # Day white fluorescent (N 4600-5500K)
    14: 4150.0,  # Cool white fluorescent (W 3800-4500K)
    15: 3450.0,  # White fluorescent (WW 3250-3800K)
    16: 2940.0,  # Warm white fluorescent (L 2600-3250K)
    17: 2850.0,  # Standard light A
    18: 4874.0,  # Standard light B
    19: 6774.0,  # Standard light C
    20: 5503.0,  # D55
    21: 6504.0,  # D65
    22: 7504.0,  # D75
    23: 5003.0,  # D50
    24: 3200.0,  # ISO studio tungsten
}


def illuminant_code_to_cct(code: int) -> float:
    try:
        return ILLUMINANT_CCT[int(code)]
    except KeyError:
        raise CalibrationError(f"unsupported illuminant code {code}") from None


# ---------------------------------------------------------------------------
# Camera profile


def _mat3(value) -> np.ndarray:
    m = np.array(value, dtype=np.float64).reshape(3, 3)
    m.flags.writeable = False
    return m


def _vec3(value) -> np.ndarray:
    v = np.array(value, dtype=np.float64).reshape(3)
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class CameraProfile:
    """Calibration data for one camera.

    ``color_matrix_*`` map XYZ to camera RGB; ``forward_matrix_*`` map
    white-balanced camera RGB to XYZ (D50). ``noise_alpha``/``noise_beta`` are
    per-channel shot/read coefficients in normalized-signal units. The optional
    ``lens_gain_map`` is a (3, gh, gw) grid of positive shading gains.
    """

    name: str
    color_matrix_1: np.ndarray
    color_matrix_2: np.ndarray
    forward_matrix_1: np.ndarray
    forward_matrix_2: np.ndarray
    calib_illum_1: float
    calib_illum_2: float
    as_shot_neutral: np.ndarray
    black_level: float
    white_level: float
    cfa: CfaPattern
    noise_alpha: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    noise_beta: np.ndarray = field(default_factory=lambda: _vec3((0.0, 0.0, 0.0)))
    noise_calibrated: bool = False
    lens_gain_map: Optional[np.ndarray] = None

    def __post_init__(self):
        set_ = object.__setattr__
        for key in ("color_matrix_1", "color_matrix_2", "forward_matrix_1", "forward_matrix_2"):
            set_(self, key, _mat3(getattr(self, key)))
        for key in ("as_shot_neutral", "noise_alpha", "noise_beta"):
            set_(self, key, _vec3(getattr(self, key)))
        set_(self, "calib_illum_1", float(self.calib_illum_1))
        set_(self, "calib_illum_2", float(self.calib_illum_2))
        set_(self, "black_level", float(self.black_level))
        set_(self, "white_level", float(self.white_level))
        set_(self, "cfa", CfaPattern(self.cfa))
        if self.lens_gain_map is not None:
            g = np.array(self.lens_gain_map, dtype=np.float64)
            g.flags.writeable = False
            set_(self, "lens_gain_map", g)
        self._validate()

    def _validate(self):
        problems = []
        if not (self.white_level > self.black_level >= 0):
            problems.append("white_level must exceed black_level >= 0")
        for key in ("color_matrix_1", "color_matrix_2", "forward_matrix_1", "forward_matrix_2"):
            try:
                color.mat3_invert(getattr(self, key))
            except CalibrationError:
                problems.append(f"{key} is singular")
        if not np.all(self.as_shot_neutral > 0):
            problems.append("as_shot_neutral must be positive")
        if np.any(self.noise_alpha < 0) or np.any(self.noise_beta < 0):
            problems.append("noise coefficients must be non-negative")
        if self.calib_illum_1 == self.calib_illum_2:
            problems.append("identical calibration illuminants")
        if self.lens_gain_map is not None:
            g = self.lens_gain_map
            if g.ndim != 3 or g.shape[0] != 3 or min(g.shape[1:]) < 1:
                problems.append("lens_gain_map must have shape (3, gh, gw)")
            elif not np.all(g > 0):
                problems.append("lens_gain_map entries must be positive")
        values = np.concatenate([
            self.color_matrix_1.ravel(), self.color_matrix_2.ravel(),
            self.forward_matrix_1.ravel(), self.forward_matrix_2.ravel(),
            self.as_shot_neutral, self.noise_alpha, self.noise_beta,
        ])
        if not np.all(np.isfinite(values)):
            problems.append("non-finite values")
        if problems:
            raise CalibrationError("invalid calibration: " + "; ".join(problems))

    def __eq__(self, other):
        if not isinstance(other, CameraProfile):
            return NotImplemented
        for key in self.__dataclass_fields__:
            a, b = getattr(self, key), getattr(other, key)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None

    def replace(self, **changes) -> "CameraProfile":
        return replace(self, **changes)

    def weight_at(self, cct: float, swap_calibration_pairing: bool = False) -> float:
        """Weight of the first matrix of each pair at ``cct``.

        With the default pairing ``cct == calib_illum_1`` gives weight 0, i.e.
        selects ``*_matrix_2``. ``swap_calibration_pairing`` flips that so
        ``calib_illum_1`` selects ``*_matrix_1``.
        """
        g = color.cct_weight(color.check_cct(cct), self.calib_illum_1, self.calib_illum_2)
        return 1.0 - g if swap_calibration_pairing else g

    def color_matrix_at(self, cct: float, swap_calibration_pairing: bool = False) -> np.ndarray:
        g = self.weight_at(cct, swap_calibration_pairing)
        return color.interpolate_mat3(self.color_matrix_1, self.color_matrix_2, g)

    def forward_matrix_at(self, cct: float, swap_calibration_pairing: bool = False) -> np.ndarray:
        g = self.weight_at(cct, swap_calibration_pairing)
        return color.interpolate_mat3(self.forward_matrix_1, self.forward_matrix_2, g)

    def as_shot_cct(self, swap_calibration_pairing: bool = False, max_iter: int = 30) -> float:
        """Estimate the capture CCT from ``as_shot_neutral``.

        Fixed-point iteration: neutral -> XYZ through the interpolated color
        matrix, XYZ -> xy -> CCT (McCamy), repeat until the CCT settles.
        """
        t = 2.0 / (1.0 / self.calib_illum_1 + 1.0 / self.calib_illum_2)
        for _ in range(max_iter):
            cm = self.color_matrix_at(t, swap_calibration_pairing)
            xyz = color.mat3_invert(cm) @ self.as_shot_neutral
            s = xyz.sum()
            if not s > 0:
                break
            t_new = color.xy_to_cct(xyz[0] / s, xyz[1] / s)
            if abs(t_new - t) < 0.01:
                return t_new
            t = t_new
        return t


# ---------------------------------------------------------------------------
# TIFF / DNG parsing

TAG_SUBIFDS = 330
TAG_CFA_REPEAT_PATTERN_DIM = 33421
TAG_CFA_PATTERN = 33422
TAG_UNIQUE_CAMERA_MODEL = 50708
TAG_BLACK_LEVEL = 50714
TAG_WHITE_LEVEL = 50717
TAG_COLOR_MATRIX_1 = 50721
TAG_COLOR_MATRIX_2 = 50722
TAG_AS_SHOT_NEUTRAL = 50728
TAG_CALIBRATION_ILLUMINANT_1 = 50778
TAG_CALIBRATION_ILLUMINANT_2 = 50779
TAG_FORWARD_MATRIX_1 = 50964
TAG_FORWARD_MATRIX_2 = 50965

TAG_NAMES = {
    TAG_CFA_REPEAT_PATTERN_DIM: "CFARepeatPatternDim",
    TAG_CFA_PATTERN: "CFAPattern",
    TAG_UNIQUE_CAMERA_MODEL: "UniqueCameraModel",
    TAG_BLACK_LEVEL: "BlackLevel",
    TAG_WHITE_LEVEL: "WhiteLevel",
    TAG_COLOR_MATRIX_1: "ColorMatrix1",
    TAG_COLOR_MATRIX_2: "ColorMatrix2",
    TAG_AS_SHOT_NEUTRAL: "AsShotNeutral",
    TAG_CALIBRATION_ILLUMINANT_1: "CalibrationIlluminant1",
    TAG_CALIBRATION_ILLUMINANT_2: "CalibrationIlluminant2",
    TAG_FORWARD_MATRIX_1: "ForwardMatrix1",
    TAG_FORWARD_MATRIX_2: "ForwardMatrix2",
}
REQUIRED_TAGS = (
    TAG_COLOR_MATRIX_1, TAG_COLOR_MATRIX_2,
    TAG_FORWARD_MATRIX_1, TAG_FORWARD_MATRIX_2,
    TAG_CALIBRATION_ILLUMINANT_1, TAG_CALIBRATION_ILLUMINANT_2,
    TAG_AS_SHOT_NEUTRAL, TAG_CFA_PATTERN,
)

# type id -> (struct code, byte size)
_TIFF_TYPES = {
    1: ("B", 1), 2: ("c", 1), 3: ("H", 2), 4: ("I", 4), 5: ("II", 8),
    6: ("b", 1), 7: ("B", 1), 8: ("h", 2), 9: ("i", 4), 10: ("ii", 8),
    11: ("f", 4), 12: ("d", 8), 13: ("I", 4),
}
_MAX_IFDS = 256


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        if len(data) < 8:
            raise DngError("not a TIFF/DNG")
        order = bytes(self.data[:2])
        if order == b"II":
            self.endian = "<"
        elif order == b"MM":
            self.endian = ">"
        else:
            raise DngError("not a TIFF/DNG")
        magic, first = struct.unpack(self.endian + "HI", self.data[2:8])
        if magic != 42:
            raise DngError("not a TIFF/DNG")
        self.first_ifd = first

    def unpack(self, fmt: str, offset: int):
        size = struct.calcsize(self.endian + fmt)
        if offset < 0 or offset + size > len(self.data):
            raise DngError("corrupt IFD entry")
        return struct.unpack_from(self.endian + fmt, self.data, offset)

    def entry_values(self, entry_offset: int):
        tag, typ, count = self.unpack("HHI", entry_offset)
        if typ not in _TIFF_TYPES:
            raise DngError("corrupt IFD entry")
        code, size = _TIFF_TYPES[typ]
        nbytes = size * count
        if nbytes <= 4:
            start = entry_offset + 8
        else:
            (start,) = self.unpack("I", entry_offset + 8)
        if count == 0 or start + nbytes > len(self.data):
            raise DngError("corrupt IFD entry")
        if typ == 2:
            raw = bytes(self.data[start:start + count])
            return raw.split(b"\0", 1)[0].decode("latin-1")
        if typ in (5, 10):
            flat = self.unpack(code[0] * (2 * count), start)
            out = []
            for num, den in zip(flat[0::2], flat[1::2]):
                if den == 0:
                    raise DngError("corrupt IFD entry")
                out.append(num / den)
            return out
        return list(self.unpack(code[0] * count, start))


def _collect_tags(reader: _Reader) -> dict[int, list]:
    """Walk IFD0, its SubIFDs (depth first), then the rest of the main chain.

    The first occurrence of each tag wins.
    """
    found: dict[int, list] = {}
    visited: set[int] = set()

    def walk_chain(offset: int):
        while offset:
            if offset in visited or len(visited) >= _MAX_IFDS:
                raise DngError("corrupt IFD entry")
            visited.add(offset)
            (n,) = reader.unpack("H", offset)
            sub_offsets: list[int] = []
            for i in range(n):
                entry = offset + 2 + 12 * i
                (tag,) = reader.unpack("H", entry)
                if tag == TAG_SUBIFDS:
                    sub_offsets = [int(v) for v in reader.entry_values(entry)]
                elif tag in TAG_NAMES and tag not in found:
                    found[tag] = reader.entry_values(entry)
            (next_offset,) = reader.unpack("I", offset + 2 + 12 * n)
            for sub in sub_offsets:
                walk_chain(sub)
            offset = next_offset

    walk_chain(reader.first_ifd)
    return found


def _cfa_from_tags(tags: dict[int, list]) -> CfaPattern:
    dims = tags.get(TAG_CFA_REPEAT_PATTERN_DIM, [2, 2])
    pattern = tags[TAG_CFA_PATTERN]
    if list(dims) != [2, 2] or len(pattern) != 4:
        raise CalibrationError("invalid calibration: only 2x2 Bayer CFA patterns are supported")
    letters = {0: "R", 1: "G", 2: "B"}
    try:
        return CfaPattern("".join(letters[int(v)] for v in pattern))
    except (KeyError, ValueError):
        raise CalibrationError(f"invalid calibration: unsupported CFA pattern {pattern}") from None


def parse_dng(data: bytes) -> CameraProfile:
    """Extract a :class:`CameraProfile` from DNG (TIFF) bytes.

    Noise coefficients are not DNG tags; they are zero-filled and the profile
    is marked ``noise_calibrated=False``.
    """
    reader = _Reader(bytes(data))
    tags = _collect_tags(reader)
    for tag in REQUIRED_TAGS:
        if tag not in tags:
            raise DngError(f"missing tag {TAG_NAMES[tag]}")

    def matrix(tag):
        values = tags[tag]
        if len(values) != 9:
            raise CalibrationError(
                f"invalid calibration: {TAG_NAMES[tag]} has {len(values)} values, expected 9")
        return np.array(values, dtype=np.float64).reshape(3, 3)

    neutral = tags[TAG_AS_SHOT_NEUTRAL]
    if len(neutral) != 3:
        raise CalibrationError("invalid calibration: AsShotNeutral must have 3 values")
    black = tags.get(TAG_BLACK_LEVEL, [0.0])
    white = tags.get(TAG_WHITE_LEVEL, [65535.0])
    return CameraProfile(
        name=tags.get(TAG_UNIQUE_CAMERA_MODEL, "unknown") or "unknown",
        color_matrix_1=matrix(TAG_COLOR_MATRIX_1),
        color_matrix_2=matrix(TAG_COLOR_MATRIX_2),
        forward_matrix_1=matrix(TAG_FORWARD_MATRIX_1),
        forward_matrix_2=matrix(TAG_FORWARD_MATRIX_2),
        calib_illum_1=illuminant_code_to_cct(tags[TAG_CALIBRATION_ILLUMINANT_1][0]),
        calib_illum_2=illuminant_code_to_cct(tags[TAG_CALIBRATION_ILLUMINANT_2][0]),
        as_shot_neutral=neutral,
        black_level=float(np.mean(black)),
        white_level=float(min(white)),
        cfa=_cfa_from_tags(tags),
    )


def read_dng(path) -> CameraProfile:
    with open(path, "rb") as fh:
        return parse_dng(fh.read())


# ---------------------------------------------------------------------------
# JSON sidecar

SCHEMA_VERSION = 1

_MATRIX_SCHEMA = {
    "type": "array", "minItems": 3, "maxItems": 3,
    "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
}
_TRIPLE_SCHEMA = {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}}

PROFILE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema", "name", "color_matrix_1", "color_matrix_2", "forward_matrix_1",
        "forward_matrix_2", "calib_illum_1", "calib_illum_2", "as_shot_neutral",
        "black_level", "white_level", "cfa", "noise_alpha", "noise_beta",
    ],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "color_matrix_1": _MATRIX_SCHEMA,
        "color_matrix_2": _MATRIX_SCHEMA,
        "forward_matrix_1": _MATRIX_SCHEMA,
        "forward_matrix_2": _MATRIX_SCHEMA,
        "calib_illum_1": {"type": "number"},
        "calib_illum_2": {"type": "number"},
        "as_shot_neutral": _TRIPLE_SCHEMA,
        "black_level": {"type": "number"},
        "white_level": {"type": "number"},
        "cfa": {"enum": [p.value for p in CfaPattern]},
        "noise_alpha": _TRIPLE_SCHEMA,
        "noise_beta": _TRIPLE_SCHEMA,
        "noise_calibrated": {"type": "boolean"},
        "lens_gain_map": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {
                "type": "array", "minItems": 1,
                "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            },
        },
    },
}


def profile_to_dict(p: CameraProfile) -> dict:
    out = {
        "schema": SCHEMA_VERSION,
        "name": p.name,
        "color_matrix_1": p.color_matrix_1.tolist(),
        "color_matrix_2": p.color_matrix_2.tolist(),
        "forward_matrix_1": p.forward_matrix_1.tolist(),
        "forward_matrix_2": p.forward_matrix_2.tolist(),
        "calib_illum_1": p.calib_illum_1,
        "calib_illum_2": p.calib_illum_2,
        "as_shot_neutral": p.as_shot_neutral.tolist(),
        "black_level": p.black_level,
        "white_level": p.white_level,
        "cfa": p.cfa.value,
        "noise_alpha": p.noise_alpha.tolist(),
        "noise_beta": p.noise_beta.tolist(),
        "noise_calibrated": p.noise_calibrated,
    }
    if p.lens_gain_map is not None:
        out["lens_gain_map"] = p.lens_gain_map.tolist()
    return out


def profile_to_json(p: CameraProfile) -> str:
    # json writes floats with repr(), i.e. the shortest round-tripping form
    # (up to 17 significant digits), so the round trip is exact.
    return json.dumps(profile_to_dict(p), indent=2) + "\n"


def _json_path(error: jsonschema.ValidationError) -> str:
    path = error.json_path
    if error.validator == "required":
        missing = [name for name in error.validator_value if name not in error.instance]
        if missing:
            path = f"{path}.{missing[0]}"
    return path


def profile_from_dict(doc) -> CameraProfile:
    validator = jsonschema.Draft202012Validator(PROFILE_SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        raise ProfileSchemaError(f"{_json_path(error)}: {error.message}")
    for key in ("calib_illum_1", "calib_illum_2", "black_level", "white_level"):
        if not math.isfinite(doc[key]):
            raise ProfileSchemaError(f"$.{key}: not a finite number")
    gain_map = doc.get("lens_gain_map")
    if gain_map is not None:
        try:
            gain_map = np.array(gain_map, dtype=np.float64)
        except ValueError:
            raise ProfileSchemaError("$.lens_gain_map: grid rows must all have the same length") from None
    return CameraProfile(
        name=doc["name"],
        color_matrix_1=doc["color_matrix_1"],
        color_matrix_2=doc["color_matrix_2"],
        forward_matrix_1=doc["forward_matrix_1"],
        forward_matrix_2=doc["forward_matrix_2"],
        calib_illum_1=doc["calib_illum_1"],
        calib_illum_2=doc["calib_illum_2"],
        as_shot_neutral=doc["as_shot_neutral"],
        black_level=doc["black_level"],
        white_level=doc["white_level"],
        cfa=CfaPattern(doc["cfa"]),
        noise_alpha=doc["noise_alpha"],
        noise_beta=doc["noise_beta"],
        noise_calibrated=doc.get("noise_calibrated", False),
        lens_gain_map=gain_map,
    )


def profile_from_json(text: str) -> CameraProfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileSchemaError(f"$: malformed JSON ({exc})") from None
    return profile_from_dict(doc)


def load_profile(path) -> CameraProfile:
    with open(path, encoding="utf-8") as fh:
        return profile_from_json(fh.read())
