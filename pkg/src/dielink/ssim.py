"""Local SSIM components, mean SSIM and the SSIM-derived distance.

The distance map is ``sqrt(2 - l - c*s)`` per pixel: a true metric,
unlike ``1 - SSIM``. With ``c3 = c2 / 2`` the contrast-structure product
collapses to ``(2*cov + c2) / (var_a + var_b + c2)``, which is what the
metric uses, so identical inputs give exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class SsimParams:
    window: str = "gaussian"   # "gaussian" or "uniform"
    sigma: float = 1.5
    radius: int = 5            # gaussian support is (2*radius+1)^2
    size: int = 7              # uniform window side
    K1: float = 0.01
    K2: float = 0.03
    L: float = 255.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.K1 <= 0 or self.K2 <= 0 or self.L <= 0:
            raise ValueError("K1, K2 and L must be positive")
        if self.window not in ("gaussian", "uniform"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def c1(self):
        return (self.K1 * self.L) ** 2

    @property
    def c2(self):
        return (self.K2 * self.L) ** 2

    @property
    def c3(self):
        return self.c2 / 2.0

    def kernel1d(self) -> np.ndarray:
        if self.window == "uniform":
            return np.full(self.size, 1.0 / self.size)
        x = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        k = np.exp(-(x * x) / (2.0 * self.sigma ** 2))
        return k / k.sum()


DEFAULT = SsimParams()


class LocalStats(NamedTuple):
    mu_a: np.ndarray
    mu_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    cov: np.ndarray

    @property
    def sigma_a(self):
        return np.sqrt(np.maximum(self.var_a, 0.0))

    @property
    def sigma_b(self):
        return np.sqrt(np.maximum(self.var_b, 0.0))

    @property
    def sigma_ab(self):
        return self.cov


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise ValueError(f"images must be 2-D with equal shapes, got {a.shape} and {b.shape}")
    return a, b


def _smooth(x, k):
    # mode="reflect" repeats the edge pixel (d c b a | a b c d).
    x = ndimage.correlate1d(x, k, axis=0, mode="reflect")
    return ndimage.correlate1d(x, k, axis=1, mode="reflect")


def local_stats(a, b, p: SsimParams = DEFAULT) -> LocalStats:
    """Window-weighted local means, variances and covariance."""
    a, b = _check_pair(a, b)
    k = p.kernel1d()
    mu_a = _smooth(a, k)
    mu_b = _smooth(b, k)
    var_a = _smooth(a * a, k) - mu_a * mu_a
    var_b = _smooth(b * b, k) - mu_b * mu_b
    cov = _smooth(a * b, k) - mu_a * mu_b
    return LocalStats(mu_a, mu_b, var_a, var_b, cov)


def _luminance(st: LocalStats, p: SsimParams):
    return (2.0 * st.mu_a * st.mu_b + p.c1) / (st.mu_a * st.mu_a + st.mu_b * st.mu_b + p.c1)


def _contrast_structure(st: LocalStats, p: SsimParams):
    return (2.0 * st.cov + p.c2) / (st.var_a + st.var_b + p.c2)


def ssim_components(a, b, p: SsimParams = DEFAULT):
    """Luminance, contrast and structure maps ``(l, c, s)``."""
    st = local_stats(a, b, p)
    sa, sb = st.sigma_a, st.sigma_b
    lum = _luminance(st, p)
    con = (2.0 * sa * sb + p.c2) / (sa * sa + sb * sb + p.c2)
    struct = (st.cov + p.c3) / (sa * sb + p.c3)
    return lum, con, struct


def ssim_map(a, b, p: SsimParams = DEFAULT) -> np.ndarray:
    """Per-pixel SSIM ``l^alpha * c^beta * s^gamma``, clipped to [-1, 1]."""
    if p.alpha == p.beta == p.gamma == 1.0:
        st = local_stats(a, b, p)
        out = _luminance(st, p) * _contrast_structure(st, p)
    else:
        lum, con, struct = ssim_components(a, b, p)
        out = lum ** p.alpha * con ** p.beta * np.sign(struct) * np.abs(struct) ** p.gamma
    return np.clip(out, -1.0, 1.0)


def mssim(a, b, p: SsimParams = DEFAULT) -> float:
    return float(ssim_map(a, b, p).mean())


def ssim_metric_map(a, b, p: SsimParams = DEFAULT) -> np.ndarray:
    """Per-pixel ``sqrt(2 - l - c*s)``; the radicand is clamped at zero."""
    st = local_stats(a, b, p)
    radicand = 2.0 - _luminance(st, p) - _contrast_structure(st, p)
    return np.sqrt(np.maximum(radicand, 0.0))


def ssim_metric(a, b, p: SsimParams = DEFAULT) -> float:
    """Mean of :func:`ssim_metric_map`."""
    return float(ssim_metric_map(a, b, p).mean())


def export_metric_map(path, mmap: np.ndarray, vmax: float = np.sqrt(3.0)) -> None:
    """Write a distance map as a false-color PNG (green = low distance)."""
    from matplotlib import colormaps

    from .imgproc import write_image

    rgba = colormaps["RdYlGn_r"](np.clip(np.asarray(mmap) / vmax, 0.0, 1.0))
    write_image(path, rgba[:, :, :3] * 255.0)
