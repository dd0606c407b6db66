"""Histogram-contrast saliency and the saliency-derived fusion weights.

A pixel with 8-bit level ``q`` scores ``sum_i H(i) * (q - i)**p`` where ``H``
is the normalised 256-bin histogram of the image: levels far from where most
of the image lives are salient.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, ShapeError
from .imagecore import quantize256

LEVELS = np.arange(256, dtype=np.float64)


class WeightPair(NamedTuple):
    w_ir: np.ndarray
    w_vi: np.ndarray


def _check_p(p: int) -> int:
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p <= 0 or p % 2:
        raise ArgumentError(f"saliency exponent must be a positive even integer, got {p!r}")
    return int(p)


def histogram256(q: np.ndarray) -> np.ndarray:
    counts = np.bincount(q.ravel(), minlength=256).astype(np.float64)
    return counts / counts.sum()


def level_saliency(hist: np.ndarray, p: int = 2) -> np.ndarray:
    """Saliency of each of the 256 levels under histogram ``hist``."""
    p = _check_p(p)
    if p == 2:
        mu = float(hist @ LEVELS)
        var = float(hist @ (LEVELS - mu) ** 2)
        return (LEVELS - mu) ** 2 + var
    diff = LEVELS[:, None] - LEVELS[None, :]
    return (diff ** p) @ hist


def saliency_raw(img: np.ndarray, p: int = 2) -> np.ndarray:
    p = _check_p(p)
    q = quantize256(img)
    return level_saliency(histogram256(q), p)[q]


def saliency_map(img: np.ndarray, p: int = 2) -> np.ndarray:
    """Raw saliency scaled so its maximum is 1; a constant image gives 0.5."""
    raw = saliency_raw(img, p)
    peak = raw.max()
    if peak <= 0:
        return np.full(raw.shape, 0.5)
    return raw / peak


def fusion_weights(d_ir: np.ndarray, d_vi: np.ndarray) -> WeightPair:
    d_ir = np.asarray(d_ir, dtype=np.float64)
    d_vi = np.asarray(d_vi, dtype=np.float64)
    if d_ir.shape != d_vi.shape:
        raise ShapeError(f"saliency maps differ in shape: {d_ir.shape} vs {d_vi.shape}")
    w_ir = np.clip(0.5 + (d_ir - d_vi) / 2.0, 0.0, 1.0)
    return WeightPair(w_ir, 1.0 - w_ir)
