"""Color-science primitives.

Matrices are 3x3 float64 numpy arrays, applied to column vectors (``M @ x``).
The row-vector form ``x @ M.T`` used by some references is the same operation.
"""

from __future__ import annotations

import numpy as np

from .errors import CalibrationError

CCT_MIN = 1500.0
CCT_MAX = 25000.0

# sRGB transfer constants (IEC 61966-2-1)
SRGB_LINEAR_THRESHOLD = 0.0031308
SRGB_ENCODED_THRESHOLD = 0.04045
SRGB_SLOPE = 12.92
SRGB_A = 0.055
SRGB_GAMMA = 2.4

# ICC D50-adapted (Bradford) sRGB primaries, XYZ -> linear sRGB.
XYZ_D50_TO_LINEAR_SRGB = np.array([
    [3.1338561, -1.6168667, -0.4906146],
    [-0.9787684, 1.9161415, 0.0334540],
    [0.0719453, -0.2289914, 1.4052427],
])
# Exact inverse of the constant above (the published 7-digit forward matrix
# is not an exact inverse).
LINEAR_SRGB_TO_XYZ_D50 = np.linalg.inv(XYZ_D50_TO_LINEAR_SRGB)
D50_WHITE = np.array([0.96422, 1.0, 0.82521])

_SINGULAR_DET = 1e-12


def srgb_encode(linear):
    """sRGB OETF. Input is clamped to [0, 1]; works on scalars and arrays."""
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    out = np.where(
        x <= SRGB_LINEAR_THRESHOLD,
        SRGB_SLOPE * x,
        (1.0 + SRGB_A) * np.power(x, 1.0 / SRGB_GAMMA) - SRGB_A,
    )
    return float(out) if out.ndim == 0 else out


def srgb_decode(encoded):
    """Inverse of :func:`srgb_encode`."""
    y = np.clip(np.asarray(encoded, dtype=np.float64), 0.0, 1.0)
    out = np.where(
        y <= SRGB_ENCODED_THRESHOLD,
        y / SRGB_SLOPE,
        np.power((y + SRGB_A) / (1.0 + SRGB_A), SRGB_GAMMA),
    )
    return float(out) if out.ndim == 0 else out


def check_cct(t: float) -> float:
    t = float(t)
    if not (CCT_MIN <= t <= CCT_MAX):
        raise CalibrationError(f"CCT {t} K outside [{CCT_MIN:g}, {CCT_MAX:g}] K")
    return t


def cct_weight(t: float, t1: float, t2: float) -> float:
    """Interpolation weight on the reciprocal-temperature (mired) scale.

    ``g = clip((1/t - 1/t1) / (1/t2 - 1/t1), 0, 1)``. Note that ``g`` multiplies
    the *first* matrix in :func:`interpolate_mat3`, so ``t == t1`` selects the
    second matrix. Use ``swap_calibration_pairing`` in the callers to get the
    usual DNG pairing instead.
    """
    if t1 == t2:
        raise CalibrationError("identical calibration illuminants")
    g = (1.0 / t - 1.0 / t1) / (1.0 / t2 - 1.0 / t1)
    return min(max(g, 0.0), 1.0)


def interpolate_mat3(m1, m2, g: float) -> np.ndarray:
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    return g * m1 + (1.0 - g) * m2


def mat3_invert(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise CalibrationError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or abs(np.linalg.det(m)) <= _SINGULAR_DET:
        raise CalibrationError("non-invertible calibration matrix")
    return np.linalg.inv(m)


def _daylight_x(t: float) -> float:
    # CIE daylight locus, valid 4000-25000 K
    if t <= 7000.0:
        return -4.6070e9 / t**3 + 2.9678e6 / t**2 + 0.09911e3 / t + 0.244063
    return -2.0064e9 / t**3 + 1.9018e6 / t**2 + 0.24748e3 / t + 0.237040


def _planckian_xy(t: float) -> tuple[float, float]:
    # Kim et al. cubic-spline fit of the Planckian locus, 1667-4000 K branch
    # (extrapolated down to 1500 K).
    x = -0.2661239e9 / t**3 - 0.2343589e6 / t**2 + 0.8776956e3 / t + 0.179910
    if t <= 2222.0:
        y = -1.1063814 * x**3 - 1.34811020 * x**2 + 2.18555832 * x - 0.20219683
    else:
        y = -0.9549476 * x**3 - 1.37418593 * x**2 + 2.09137015 * x - 0.16748867
    return x, y


def cct_to_xy(t: float) -> tuple[float, float]:
    t = check_cct(t)
    if t >= 4000.0:
        x = _daylight_x(t)
        return x, -3.000 * x * x + 2.870 * x - 0.275
    return _planckian_xy(t)


def cct_to_xyz(t: float) -> np.ndarray:
    """White point for a CCT as XYZ with Y = 1.

    Daylight locus at and above 4000 K, Planckian locus below.
    """
    x, y = cct_to_xy(t)
    return np.array([x / y, 1.0, (1.0 - x - y) / y])


def xy_to_cct(x: float, y: float) -> float:
    """McCamy's cubic approximation, clamped to the supported CCT window."""
    n = (x - 0.3320) / (0.1858 - y)
    t = 449.0 * n**3 + 3525.0 * n**2 + 6823.3 * n + 5520.33
    return min(max(t, CCT_MIN), CCT_MAX)


def xyz_d50_to_linear_srgb(p) -> np.ndarray:
    """Apply the D50-adapted XYZ -> linear sRGB matrix. No clipping."""
    p = np.asarray(p, dtype=np.float64)
    return p @ XYZ_D50_TO_LINEAR_SRGB.T


def linear_srgb_to_xyz_d50(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ LINEAR_SRGB_TO_XYZ_D50.T


def apply_mat3(m, pixels) -> np.ndarray:
    """Apply ``m`` to the last axis of ``pixels`` (column-vector convention)."""
    return np.asarray(pixels, dtype=np.float64) @ np.asarray(m, dtype=np.float64).T
