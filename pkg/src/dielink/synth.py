"""Synthetic die-link datasets with known ground truth.

A die is an analytic relief (Gaussian bumps and strokes inside a rimmed
disk). Dies of one dataset share part of their layout, like dies of the
same coin type. Each coin renders its die under a small random rotation,
translation and illumination change, then adds Gaussian noise. Rendering
evaluates the relief directly at the transformed coordinates, so no
resampling blur is introduced.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgproc import write_image
from .manifest import Entry, Manifest


@dataclass
class Die:
    bumps: np.ndarray    # rows: x, y, sigma, amplitude (coin frame, units of radius)
    strokes: np.ndarray  # rows: x0, y0, x1, y1, width, amplitude


def _random_bumps(rng, n):
    r = 0.8 * np.sqrt(rng.uniform(0, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi),
                            rng.uniform(0.025, 0.06, n),
                            rng.choice([-1.0, 1.0], n) * rng.uniform(40, 90, n)])


def _random_strokes(rng, n):
    r = 0.65 * np.sqrt(rng.uniform(0, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    length = rng.uniform(0.1, 0.3, n)
    ang = rng.uniform(0, np.pi, n)
    x0, y0 = r * np.cos(phi), r * np.sin(phi)
    return np.column_stack([x0, y0, x0 + length * np.cos(ang), y0 + length * np.sin(ang),
                            rng.uniform(0.015, 0.03, n), rng.uniform(50, 80, n)])


def make_dies(n_dies: int, rng, n_shared: int = 12, n_own: int = 18) -> list:
    """Dies sharing a jittered common layout plus their own features."""
    shared_b = _random_bumps(rng, n_shared)
    shared_s = _random_strokes(rng, 4)
    dies = []
    for _ in range(n_dies):
        b = shared_b.copy()
        b[:, :2] += rng.normal(0, 0.03, (n_shared, 2))
        s = shared_s.copy()
        s[:, :4] += rng.normal(0, 0.03, (len(s), 4))
        dies.append(Die(np.vstack([b, _random_bumps(rng, n_own)]),
                        np.vstack([s, _random_strokes(rng, 3)])))
    return dies


def render(die: Die, size: int, theta: float = 0.0, shift=(0.0, 0.0), gain: float = 1.0,
           offset: float = 0.0, radius_frac: float = 0.46) -> np.ndarray:
    """Render a coin struck by ``die`` as a ``size x size`` float image."""
    R = radius_frac * size
    c = (size - 1) / 2.0
    ys, xs = np.indices((size, size), dtype=np.float64)
    # pixel -> coin frame (inverse rotation), in units of the coin radius
    dx, dy = xs - c - shift[0], ys - c - shift[1]
    ct, st = np.cos(theta), np.sin(theta)
    u = (ct * dx + st * dy) / R
    v = (-st * dx + ct * dy) / R
    rr = np.hypot(u, v)

    relief = np.full_like(u, 110.0)
    relief += 45.0 * np.exp(-((rr - 0.93) / 0.03) ** 2)
    for x, y, sg, amp in die.bumps:
        relief += amp * np.exp(-((u - x) ** 2 + (v - y) ** 2) / (2 * sg * sg))
    for x0, y0, x1, y1, wd, amp in die.strokes:
        ex, ey = x1 - x0, y1 - y0
        t = np.clip(((u - x0) * ex + (v - y0) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        d2 = (u - x0 - t * ex) ** 2 + (v - y0 - t * ey) ** 2
        relief += amp * np.exp(-d2 / (2 * wd * wd))

    # light from the left: mild horizontal gradient
    shade = 1.0 - 0.15 * (xs - c) / size
    disk = np.clip(R + 0.5 - np.hypot(dx, dy), 0.0, 1.0)
    coin = (gain * relief * shade + offset) * disk
    return np.clip(coin, 0.0, 255.0)


# Nuisance magnitudes at noise_level = 1.
MAX_ROTATION = np.deg2rad(20.0)
MAX_SHIFT_FRAC = 0.05
MAX_GAIN = 0.2
MAX_OFFSET = 20.0
NOISE_SIGMA = 25.5


def synth_dataset(out_dir, n_dies: int = 4, coins_per_die: int = 5, noise_level: float = 0.3,
                  seed: int = 0, size: int = 128, dataset_id: str = "synth") -> Manifest:
    """Generate coin images plus a manifest under ``out_dir``.

    ``noise_level`` in ``[0, 1]`` scales every nuisance together: rotation
    (up to 20 degrees), translation (up to 5% of the size), gain (up to
    20%), offset (up to 20 levels) and pixel noise (sigma up to 25.5). At
    0 all coins of a die are identical. Returns the manifest, which is
    also written to ``out_dir/manifest.csv``.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    dies = make_dies(n_dies, rng)
    entries = []
    for d, die in enumerate(dies):
        for k in range(coins_per_die):
            theta = rng.uniform(-1, 1) * MAX_ROTATION * noise_level
            shift = rng.uniform(-1, 1, 2) * MAX_SHIFT_FRAC * size * noise_level
            gain = 1.0 + rng.uniform(-1, 1) * MAX_GAIN * noise_level
            offset = rng.uniform(-1, 1) * MAX_OFFSET * noise_level
            img = render(die, size, theta, shift, gain, offset)
            img = np.clip(img + rng.normal(0.0, NOISE_SIGMA * noise_level, img.shape), 0, 255)
            rgb = np.repeat(np.rint(img)[:, :, None], 3, axis=2)
            coin_id = f"{dataset_id}_d{d:02d}_c{k:02d}"
            path = out_dir / "images" / f"{coin_id}.png"
            write_image(path, rgb)
            entries.append(Entry(coin_id, path, f"die{d:02d}"))
    manifest = Manifest(dataset_id, entries)
    manifest.write(out_dir / "manifest.csv")
    return manifest
