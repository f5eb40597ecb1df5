"""Image preprocessing primitives for both distance pipelines.

Images are plain 2-D ``float64`` arrays with intensities in ``[0, L]``
(``L = 255`` unless stated otherwise). The OpenCV stages (CLAHE and
non-local means) work on 8-bit data, so their inputs are rounded to
``uint8`` on the way in and converted back to float on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from scipy import ndimage

L_MAX = 255.0

# ITU-R BT.601 luma coefficients, RGB order.
BT601 = (0.299, 0.587, 0.114)


class InvalidImageError(ValueError):
    pass


def check_gray(img, L: float = L_MAX) -> np.ndarray:
    """Validate a grayscale image and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidImageError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidImageError("image contains non-finite values")
    if arr.min() < 0 or arr.max() > L:
        raise InvalidImageError(f"intensities outside [0, {L}]")
    return arr


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read a raster file as an RGB (or single channel) float array."""
    path = Path(path)
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise OSError(f"cannot read image {path}")
    if data.dtype == np.uint16:
        data = data / 257.0
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[:, :, :3]
        data = data[:, :, ::-1]  # BGR -> RGB
    return np.ascontiguousarray(data, dtype=np.float64)


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = to_uint8(img)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]
    if not cv2.imwrite(str(path), arr):
        raise OSError(f"cannot write image {path}")


def to_grayscale(rgb, L: float = L_MAX) -> np.ndarray:
    """Luminance-weighted grayscale (BT.601). 2-D input is returned as is."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.size == 0:
        raise InvalidImageError("empty image")
    if arr.ndim == 2:
        return check_gray(arr, L)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidImageError(f"expected an RGB image, got shape {arr.shape}")
    r, g, b = BT601
    gray = r * arr[:, :, 0] + g * arr[:, :, 1] + b * arr[:, :, 2]
    return check_gray(np.clip(gray, 0.0, L), L)


# --------------------------------------------------------------------------
# Circular crop
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CropSpec:
    """Disk crop settings.

    ``radius=None`` selects the largest disk inscribed in the image about
    the chosen center.
    """

    center_mode: str = "mass_center"
    radius: Optional[float] = None
    fill_value: float = 0.0

    def __post_init__(self):
        if self.center_mode not in ("mass_center", "geometric_center"):
            raise ValueError(f"unknown center_mode {self.center_mode!r}")
        if self.radius is not None and self.radius <= 0:
            raise ValueError("radius must be positive")


def mass_center(img: np.ndarray) -> Optional[tuple[float, float]]:
    """Intensity-weighted centroid ``(x, y)``; None for an all-zero image."""
    total = img.sum()
    if total <= 0:
        return None
    ys, xs = np.indices(img.shape)
    return float((xs * img).sum() / total), float((ys * img).sum() / total)


def geometric_center(img: np.ndarray) -> tuple[float, float]:
    h, w = img.shape
    return (w - 1) / 2.0, (h - 1) / 2.0


def inscribed_radius(shape, center) -> float:
    h, w = shape
    cx, cy = center
    return float(min(cx + 0.5, cy + 0.5, w - 0.5 - cx, h - 0.5 - cy))


def circular_crop(img, spec: CropSpec = CropSpec(), diagnostics: Optional[dict] = None) -> np.ndarray:
    """Set every pixel outside a disk to ``spec.fill_value``.

    In ``mass_center`` mode an all-zero image falls back to the geometric
    center; ``diagnostics["crop_fallback"]`` records that.
    """
    img = check_gray(img)
    fallback = False
    if spec.center_mode == "mass_center":
        center = mass_center(img)
        if center is None:
            center = geometric_center(img)
            fallback = True
    else:
        center = geometric_center(img)

    radius = spec.radius if spec.radius is not None else inscribed_radius(img.shape, center)
    if radius > min(img.shape) / 2.0 + 1e-9:
        raise ValueError(f"radius {radius} exceeds half the smallest image side")

    ys, xs = np.indices(img.shape)
    inside = (xs - center[0]) ** 2 + (ys - center[1]) ** 2 <= radius * radius
    out = np.where(inside, img, spec.fill_value)
    if diagnostics is not None:
        diagnostics.update(crop_center=center, crop_radius=radius, crop_fallback=fallback)
    return out


# --------------------------------------------------------------------------
# Contrast and denoising
# --------------------------------------------------------------------------

def clahe(img, clip_limit: float = 2.0, tile_grid=(8, 8)) -> np.ndarray:
    """Contrast Limited Adaptive Histogram Equalization (OpenCV, 8-bit)."""
    img = check_gray(img)
    op = cv2.createCLAHE(clipLimit=float(clip_limit), tileGridSize=tuple(int(t) for t in tile_grid))
    return op.apply(to_uint8(img)).astype(np.float64)


def nl_means_denoise(img, patch_size: int = 7, search_window: int = 21,
                     filter_strength: float = 10.0) -> np.ndarray:
    """OpenCV fast non-local means on the 8-bit image."""
    img = check_gray(img)
    if not patch_size < search_window:
        raise ValueError("patch_size must be smaller than search_window")
    out = cv2.fastNlMeansDenoising(to_uint8(img), None, h=float(filter_strength),
                                   templateWindowSize=int(patch_size),
                                   searchWindowSize=int(search_window))
    return out.astype(np.float64)


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    # Negative adjoint of _grad.
    dx = np.zeros_like(px)
    dx[:, 0] = px[:, 0]
    dx[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    dx[:, -1] = -px[:, -2]
    dy = np.zeros_like(py)
    dy[0, :] = py[0, :]
    dy[1:-1, :] = py[1:-1, :] - py[:-2, :]
    dy[-1, :] = -py[-2, :]
    if px.shape[1] == 1:
        dx[:] = 0.0
    if py.shape[0] == 1:
        dy[:] = 0.0
    return dx + dy


def total_variation(img) -> float:
    """Isotropic total variation with forward differences."""
    gx, gy = _grad(np.asarray(img, dtype=np.float64))
    return float(np.sqrt(gx * gx + gy * gy).sum())


def tv_denoise(img, weight: float = 0.1, max_iters: int = 200, tol: float = 1e-4,
               L: float = L_MAX, diagnostics: Optional[dict] = None) -> np.ndarray:
    """Total variation (ROF) denoising with Chambolle's projection algorithm.

    ``weight`` is expressed for intensities rescaled to ``[0, 1]``. The
    iterate with the lowest ROF energy is returned (the input itself is a
    candidate), so the total variation never increases. Stops when the
    relative energy change drops below ``tol``.
    """
    if weight <= 0:
        raise ValueError("weight must be positive")
    f = check_gray(img, L) / L
    tau = 0.125
    px = np.zeros_like(f)
    py = np.zeros_like(f)

    def energy(u):
        return float(((u - f) ** 2).sum() / (2.0 * weight) + total_variation(u))

    best = f
    best_e = energy(f)
    prev_e = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gx, gy = _grad(_div(px, py) - f / weight)
        norm = 1.0 + tau * np.sqrt(gx * gx + gy * gy)
        px = (px + tau * gx) / norm
        py = (py + tau * gy) / norm
        u = f - weight * _div(px, py)
        e = energy(u)
        if e < best_e:
            best, best_e = u, e
        if prev_e is not None and abs(prev_e - e) <= tol * max(abs(e), 1e-12):
            converged = True
            break
        prev_e = e

    if diagnostics is not None:
        diagnostics.update(tv_iterations=it, tv_converged=converged)
    return np.clip(best * L, 0.0, L)


def sobel(img, L: float = L_MAX) -> np.ndarray:
    """Sobel gradient magnitude rescaled so its maximum is ``L``."""
    img = check_gray(img, L)
    if min(img.shape) < 3:
        raise InvalidImageError("sobel needs an image of at least 3x3")
    gx = ndimage.sobel(img, axis=1, mode="reflect")
    gy = ndimage.sobel(img, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12 * L:
        return np.zeros_like(img)
    return np.clip(mag * (L / peak), 0.0, L)


# --------------------------------------------------------------------------
# Pipelines
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PreprocParams:
    clahe_clip_limit: float = 2.0
    clahe_tile_grid: tuple = (8, 8)
    nlm_patch_size: int = 7
    nlm_search_window: int = 21
    nlm_strength: float = 10.0
    tv_weight: float = 0.1
    tv_tol: float = 1e-4
    tv_max_iters: int = 200
    crop_fill: float = 0.0


def _dump(dump_dir, idx, name, img):
    if dump_dir is not None:
        write_image(Path(dump_dir) / f"{idx:02d}_{name}.png", img)


def preproc_ssim(rgb, params: PreprocParams = PreprocParams(), dump_dir=None,
                 diagnostics: Optional[dict] = None) -> np.ndarray:
    """grayscale -> mass-center crop -> CLAHE -> non-local means."""
    gray = to_grayscale(rgb)
    _dump(dump_dir, 0, "gray", gray)
    x = circular_crop(gray, CropSpec("mass_center", fill_value=params.crop_fill), diagnostics)
    _dump(dump_dir, 1, "crop", x)
    x = clahe(x, params.clahe_clip_limit, params.clahe_tile_grid)
    _dump(dump_dir, 2, "clahe", x)
    x = nl_means_denoise(x, params.nlm_patch_size, params.nlm_search_window, params.nlm_strength)
    _dump(dump_dir, 3, "nlmeans", x)
    return x


def preproc_procrustes(rgb, params: PreprocParams = PreprocParams(), dump_dir=None,
                       diagnostics: Optional[dict] = None) -> np.ndarray:
    """grayscale -> center crop -> TVD -> CLAHE -> TVD -> Sobel -> center crop.

    Both crops use the inscribed disk about the image center.
    """
    crop = CropSpec("geometric_center", fill_value=params.crop_fill)
    tv = dict(weight=params.tv_weight, max_iters=params.tv_max_iters, tol=params.tv_tol)
    gray = to_grayscale(rgb)
    _dump(dump_dir, 0, "gray", gray)
    x = circular_crop(gray, crop)
    _dump(dump_dir, 1, "crop", x)
    x = tv_denoise(x, **tv, diagnostics=diagnostics)
    _dump(dump_dir, 2, "tvd", x)
    x = clahe(x, params.clahe_clip_limit, params.clahe_tile_grid)
    _dump(dump_dir, 3, "clahe", x)
    x = tv_denoise(x, **tv)
    _dump(dump_dir, 4, "tvd", x)
    x = sobel(x)
    _dump(dump_dir, 5, "sobel", x)
    x = circular_crop(x, crop)
    _dump(dump_dir, 6, "crop", x)
    return x
