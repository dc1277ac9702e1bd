from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from _tiffwriter import ASCII, BYTE, LONG, RATIONAL, SHORT, SRATIONAL, rationals, write_tiff
from rawforge.dng import CameraProfile, CfaPattern

# Authored calibration of the fixture camera (values with 4 decimals so the
# rational encoding is exact: parser output must equal num/den bit for bit).
FIXTURE = {
    "name": "Fixture Cam",
    "color_matrix_1": [0.6461, -0.0907, -0.0882, -0.4300, 1.2184, 0.2378, -0.0819, 0.1944, 0.5931],
    "color_matrix_2": [0.6444, -0.0904, -0.0893, -0.4563, 1.2308, 0.2535, -0.0903, 0.2016, 0.6728],
    "forward_matrix_1": [0.7868, 0.0092, 0.1683, 0.2291, 0.8615, -0.0906, 0.0027, -0.4752, 1.2976],
    "forward_matrix_2": [0.7637, 0.1394, 0.0612, 0.2886, 0.9239, -0.2125, 0.0161, -0.2875, 1.0964],
    "illum_codes": (17, 21),
    "as_shot_neutral": [0.4, 1.0, 0.79],
    "black_level": 512,
    "white_level": 15000,
    "cfa_bytes": [0, 1, 1, 2],
}


def rat_value(x: float, den: int = 10000) -> float:
    return round(x * den) / den


def fixture_tags(drop: tuple[int, ...] = ()):
    """IFD0 tags and one raw SubIFD for the fixture camera."""
    f = FIXTURE
    ifd0 = {
        254: (LONG, [1]),
        271: (ASCII, "Fixture"),
        50706: (BYTE, [1, 4, 0, 0]),  # DNGVersion
        50708: (ASCII, f["name"]),
        50721: (SRATIONAL, rationals(f["color_matrix_1"])),
        50722: (SRATIONAL, rationals(f["color_matrix_2"])),
        50728: (RATIONAL, rationals(f["as_shot_neutral"])),
        50778: (SHORT, [f["illum_codes"][0]]),
        50779: (SHORT, [f["illum_codes"][1]]),
        50964: (SRATIONAL, rationals(f["forward_matrix_1"])),
        50965: (SRATIONAL, rationals(f["forward_matrix_2"])),
    }
    raw_ifd = {
        254: (LONG, [0]),
        256: (LONG, [64]),
        257: (LONG, [48]),
        33421: (SHORT, [2, 2]),
        33422: (BYTE, f["cfa_bytes"]),
        50714: (SHORT, [f["black_level"]]),
        50717: (SHORT, [f["white_level"]]),
    }
    for tag in drop:
        ifd0.pop(tag, None)
        raw_ifd.pop(tag, None)
    return ifd0, raw_ifd


def fixture_dng(byte_order: str = "II", drop: tuple[int, ...] = ()) -> bytes:
    ifd0, raw_ifd = fixture_tags(drop)
    return write_tiff(ifd0, [raw_ifd], byte_order)


def expected_fixture_profile() -> CameraProfile:
    f = FIXTURE
    rv = lambda vals: [rat_value(v) for v in vals]  # noqa: E731
    return CameraProfile(
        name=f["name"],
        color_matrix_1=rv(f["color_matrix_1"]),
        color_matrix_2=rv(f["color_matrix_2"]),
        forward_matrix_1=rv(f["forward_matrix_1"]),
        forward_matrix_2=rv(f["forward_matrix_2"]),
        calib_illum_1=2850.0,
        calib_illum_2=6504.0,
        as_shot_neutral=rv(f["as_shot_neutral"]),
        black_level=float(f["black_level"]),
        white_level=float(f["white_level"]),
        cfa=CfaPattern.RGGB,
    )


def identity_profile(**changes) -> CameraProfile:
    eye = np.eye(3)
    base = dict(name="identity", color_matrix_1=eye, color_matrix_2=eye, forward_matrix_1=eye,
                forward_matrix_2=eye, calib_illum_1=2850.0, calib_illum_2=6504.0,
                as_shot_neutral=(1.0, 1.0, 1.0), black_level=0.0, white_level=65535.0,
                cfa=CfaPattern.RGGB)
    base.update(changes)
    return CameraProfile(**base)


def second_profile() -> CameraProfile:
    """A different camera: other matrices, BGGR, non-zero noise."""
    cm = np.array([[0.7034, -0.0804, -0.1014], [-0.4420, 1.1564, 0.3205], [-0.0610, 0.1494, 0.6073]])
    fm = np.array([[0.7412, 0.1078, 0.1152], [0.2734, 0.8011, -0.0745], [0.0053, -0.2317, 1.0513]])
    return CameraProfile(
        name="Second Cam",
        color_matrix_1=cm * 1.05, color_matrix_2=cm,
        forward_matrix_1=fm, forward_matrix_2=fm @ np.diag([1.02, 1.0, 0.97]),
        calib_illum_1=2850.0, calib_illum_2=6504.0,
        as_shot_neutral=(0.52, 1.0, 0.66), black_level=256.0, white_level=16383.0,
        cfa=CfaPattern.BGGR, noise_alpha=(0.004, 0.003, 0.005), noise_beta=(1e-5, 8e-6, 1.2e-5),
        noise_calibrated=True,
    )


@pytest.fixture
def fixture_profile() -> CameraProfile:
    return expected_fixture_profile()


@pytest.fixture
def id_profile() -> CameraProfile:
    return identity_profile()


def scene_linear_rgb(h: int, w: int) -> np.ndarray:
    """Deterministic smooth scene with some edges, linear camera RGB in [0.02, 0.9]."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = x / max(w - 1, 1), y / max(h - 1, 1)
    r = 0.15 + 0.6 * u * (1 - 0.3 * v)
    g = 0.2 + 0.5 * v + 0.1 * np.sin(6.0 * u)
    b = 0.1 + 0.4 * (1 - u) * v + 0.2 * ((x // 8 + y // 8) % 2)
    disk = (x - 0.6 * w) ** 2 + (y - 0.4 * h) ** 2 < (0.15 * min(h, w)) ** 2
    r = np.where(disk, 0.8, r)
    img = np.stack([r, g, b], axis=-1)
    return np.clip(img, 0.02, 0.9)


def scene_raw(profile: CameraProfile, h: int = 48, w: int = 64) -> np.ndarray:
    """uint16 mosaic of :func:`scene_linear_rgb` under the profile's CFA and levels."""
    rgb = scene_linear_rgb(h, w)
    cmap = profile.cfa.channel_map(h, w)
    m = np.take_along_axis(rgb, cmap[:, :, None], axis=2)[:, :, 0]
    counts = profile.black_level + m * (profile.white_level - profile.black_level)
    return np.rint(counts).astype(np.uint16)


def tree_digest(root: Path) -> str:
    """SHA-256 over relative paths and file bytes of a directory tree."""
    h = hashlib.sha256()
    for path in sorted(p for p in Path(root).rglob("*") if p.is_file()):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()


def smooth_xyz(profile: CameraProfile, cct: float, h: int = 256, w: int = 256) -> np.ndarray:
    """Smooth XYZ image whose white-balanced camera RGB stays inside (0.05, 0.6)."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = x / (w - 1), y / (h - 1)
    cam = np.stack([
        0.1 + 0.45 * u,
        0.15 + 0.3 * v + 0.1 * np.sin(3.0 * u),
        0.05 + 0.4 * (1 - u) * (0.5 + 0.5 * v),
    ], axis=-1)
    f = profile.forward_matrix_at(cct)
    return cam @ f.T


def in_gamut_scene_raw(profile: CameraProfile, h: int = 128, w: int = 128) -> np.ndarray:
    """uint16 mosaic of a moderately saturated scene that stays inside the sRGB gamut.

    The scene is authored in linear sRGB, taken to XYZ, then run backwards
    through the profile's forward matrix (at the as-shot CCT) and its
    AsShotNeutral white balance, so the anchor reproduces it without clipping.
    """
    from rawforge import color
    from rawforge.isp import wb_gains_from_neutral

    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    u, v = x / (w - 1), y / (h - 1)
    lin = np.stack([
        0.05 + 0.2 * u + 0.03 * np.sin(9.0 * v),
        0.06 + 0.15 * v + 0.04 * np.cos(7.0 * u),
        0.04 + 0.2 * (1 - u) * v + 0.05 * ((x // 16 + y // 16) % 2),
    ], axis=-1)
    xyz = color.linear_srgb_to_xyz_d50(lin)
    forward = profile.forward_matrix_at(profile.as_shot_cct())
    cam_wb = xyz @ color.mat3_invert(forward).T
    cam = cam_wb / np.array(wb_gains_from_neutral(profile.as_shot_neutral))
    cmap = profile.cfa.channel_map(h, w)
    m = np.take_along_axis(cam, cmap[:, :, None], axis=2)[:, :, 0]
    assert m.min() > 0 and m.max() < 1
    counts = profile.black_level + m * (profile.white_level - profile.black_level)
    return np.rint(counts).astype(np.uint16)


# ---------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion in the terminal summary

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Call with (ok, detail); records and prints a PASS/FAIL line for the test."""
    name = request.node.name

    def record(ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
