"""Image quality metrics and PCA cluster compactness."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from .dataset import crop_resize
from .errors import RawForgeError
from .image import ImagePlane

ArrayLike = Union[ImagePlane, np.ndarray]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_hwc(img: ArrayLike) -> np.ndarray:
    arr = img.data if isinstance(img, ImagePlane) else np.asarray(img)
    arr = arr.astype(np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise RawForgeError(f"expected an HxW or HxWxC image, got shape {arr.shape}")
    return arr


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_hwc(a), _as_hwc(b)
    if a.shape != b.shape:
        raise RawForgeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: ArrayLike, b: ArrayLike) -> float:
    """PSNR in dB with peak 1, over all channels jointly. Identical -> inf."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    half = len(taps) // 2
    y = ndimage.correlate1d(x, taps, axis=0, mode="constant")
    y = ndimage.correlate1d(y, taps, axis=1, mode="constant")
    return y[half:x.shape[0] - half, half:x.shape[1] - half]


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Local SSIM over every full 11x11 window position of two 2-D images."""
    taps = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, taps)
    mu_b = _filter_valid(b, taps)
    var_a = _filter_valid(a * a, taps) - mu_a * mu_a
    var_b = _filter_valid(b * b, taps) - mu_b * mu_b
    cov = _filter_valid(a * b, taps) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: ArrayLike, b: ArrayLike) -> float:
    """Mean SSIM (Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=1), averaged over channels."""
    a, b = _pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise RawForgeError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    return float(np.mean([ssim_map(a[:, :, c], b[:, :, c]).mean() for c in range(a.shape[2])]))


@dataclass(frozen=True)
class CompactnessReport:
    method_label: str
    k: int
    mean_dist: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def pca_project(points: np.ndarray, k: int) -> np.ndarray:
    """Center and project onto the top-k principal directions.

    Each direction's sign is fixed so that its largest-magnitude component is
    positive.
    """
    x = np.asarray(points, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:k]
    pivots = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(len(comps)), pivots])
    signs[signs == 0] = 1.0
    return centered @ (comps * signs[:, None]).T


def pca_compactness(points: Sequence, k: int = 2, method_label: str = "") -> CompactnessReport:
    """Mean L2 distance to the centroid after projecting onto the top-k PCs."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise RawForgeError("need at least two points as rows of a 2-D array")
    if not 1 <= k <= x.shape[1]:
        raise RawForgeError(f"k must lie in [1, {x.shape[1]}], got {k}")
    proj = pca_project(x, k)
    dist = np.linalg.norm(proj - proj.mean(axis=0), axis=1)
    return CompactnessReport(method_label=method_label, k=k, mean_dist=float(dist.mean()), n_points=x.shape[0])


def feature_vector(img: ImagePlane, size: int = 32) -> np.ndarray:
    """Flattened ``size x size`` center-crop/Lanczos downsample of an image."""
    return crop_resize(img, size).data.astype(np.float64).ravel()


def format_db(value: float) -> Union[float, str]:
    """JSON/CSV-friendly PSNR: infinity becomes the string "inf"."""
    return "inf" if math.isinf(value) else value
