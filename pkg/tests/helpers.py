import numpy as np
from scipy import ndimage


def textured(shape, seed=0, smooth=1.5):
    """Smooth random texture in [0, 255]."""
    rng = np.random.default_rng(seed)
    x = ndimage.gaussian_filter(rng.uniform(0, 255, shape), smooth)
    x -= x.min()
    return np.clip(x * (255.0 / x.max()), 0.0, 255.0)


def blob(shape, center, sigma, amp=200.0, base=20.0):
    ys, xs = np.indices(shape, dtype=float)
    return base + amp * np.exp(-((xs - center[0]) ** 2 + (ys - center[1]) ** 2) / (2 * sigma ** 2))


def rgb(gray):
    return np.repeat(np.asarray(gray, float)[:, :, None], 3, axis=2)
