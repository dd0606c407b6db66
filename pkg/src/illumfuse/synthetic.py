"""Synthetic low-light infrared/visible pairs for smoke tests and demos.

A random scene of textured shapes is rendered in colour and darkened to
play the visible image; a subset of the shapes is rendered "hot" over a cool
background to play the infrared image.
"""

from __future__ import annotations

import os

import numpy as np

from .imagecore import save_image


def _shape_mask(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    ry, rx = rng.uniform(0.05, 0.25) * h, rng.uniform(0.05, 0.25) * w
    if rng.random() < 0.5:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)


def make_pair(h: int = 192, w: int = 256, rng: np.random.Generator | None = None,
              darkness: tuple[float, float] = (0.12, 0.3)) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(ir, vi)``: an (h, w, 1) infrared image and an (h, w, 3) visible image."""
    rng = rng or np.random.default_rng()
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    ang = rng.uniform(0, 2 * np.pi)
    ramp = 0.5 + 0.3 * (np.cos(ang) * xx + np.sin(ang) * yy)
    vi = np.repeat(ramp[:, :, None], 3, axis=2) * rng.uniform(0.6, 1.0, size=3)
    ir = 0.25 + 0.1 * ramp
    for k in range(int(rng.integers(5, 10))):
        m = _shape_mask(h, w, rng)
        colour = rng.uniform(0.1, 1.0, size=3)
        freq = rng.uniform(10, 40)
        phase = rng.uniform(0, 2 * np.pi)
        texture = 0.75 + 0.25 * np.sin(freq * (xx * np.cos(phase) + yy * np.sin(phase)) * np.pi)
        vi[m] = colour * texture[m, None]
        if rng.random() < 0.4:
            ir[m] = rng.uniform(0.7, 0.95)
        else:
            ir[m] = 0.2 + 0.15 * rng.random() + 0.05 * texture[m]
    light = rng.uniform(*darkness) * (0.6 + 0.4 * np.exp(-((xx - rng.random()) ** 2 + (yy - rng.random()) ** 2) / 0.1))
    vi = vi * light[:, :, None] + rng.normal(0.0, 0.005, size=vi.shape)
    ir = ir + rng.normal(0.0, 0.01, size=ir.shape)
    return np.clip(ir, 0, 1)[:, :, None], np.clip(vi, 0, 1)


def write_dataset(root: str | os.PathLike, n_pairs: int, h: int = 192, w: int = 256,
                  seed: int = 0, start: int = 0) -> list[str]:
    """Write ``n_pairs`` PNG pairs under ``root/ir`` and ``root/vi``."""
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(root, "ir"), exist_ok=True)
    os.makedirs(os.path.join(root, "vi"), exist_ok=True)
    names = []
    for i in range(start, start + n_pairs):
        ir, vi = make_pair(h, w, rng)
        name = f"{i:06d}"
        names.append(name)
        save_image(ir, os.path.join(root, "ir", name + ".png"))
        save_image(vi, os.path.join(root, "vi", name + ".png"))
    return names
