"""
Image I/O, colour conversion, quantisation and Sobel gradients.

Images are float64 numpy arrays in [0, 1] with shape (H, W, C), C in {1, 3}.
Single-plane operations also accept a bare (H, W) array.  The ``*_t``
variants operate on torch tensors shaped (N, C, H, W) and are differentiable.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ShapeError

# BT.601 full range (JFIF)
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YCC2RGB = np.array([
    [1.0, 0.0, 1.402],
    [1.0, -0.344136, -0.714136],
    [1.0, 1.772, 0.0],
])
_CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])



class GradientField(NamedTuple):
    magnitude: np.ndarray
    dx: np.ndarray
    dy: np.ndarray


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate an ImageTensor and return it as float64 (H, W, C)."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"expected an H x W x C image with C in (1, 3), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def as_plane(img: np.ndarray) -> np.ndarray:
    """Return a single-channel image as a 2-D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ShapeError(f"expected a single-channel image, got shape {arr.shape}")
    return arr


def to_rgb(img: np.ndarray) -> np.ndarray:
    """Replicate a single-channel image to three channels; RGB passes through."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] == 1:
        return np.repeat(arr, 3, axis=2)
    if arr.shape[2] != 3:
        raise ShapeError(f"cannot interpret {arr.shape[2]} channels as RGB")
    return arr


def load_image(path: str | os.PathLike) -> np.ndarray:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                arr = np.clip(arr, 0.0, 1.0)[:, :, None]
            elif mode in ("L", "1", "LA"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None] / 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"cannot decode {path}: {exc}") from exc
    return arr


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantise [0, 1] values to bytes with round-half-up."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Write an 8-bit PNG (or any format PIL infers from the suffix)."""
    arr = check_image(img)
    data = to_uint8(arr)
    pil = Image.fromarray(data[:, :, 0], mode="L") if arr.shape[2] == 1 else Image.fromarray(data, mode="RGB")
    fmt = None if os.path.splitext(str(path))[1] else "PNG"
    try:
        pil.save(path, format=fmt)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"rgb_to_ycbcr needs 3 channels, got shape {arr.shape}")
    out = arr @ _RGB2YCC.T + _CHROMA_OFFSET
    return np.clip(out, 0.0, 1.0)


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"ycbcr_to_rgb needs 3 channels, got shape {arr.shape}")
    out = (arr - _CHROMA_OFFSET) @ _YCC2RGB.T
    return np.clip(out, 0.0, 1.0)


def luminance(img: np.ndarray) -> np.ndarray:
    """Y plane of an image; single-channel input is returned as-is."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2 or arr.shape[2] == 1:
        return as_plane(arr)
    return rgb_to_ycbcr(arr)[:, :, 0]


def quantize256(img: np.ndarray) -> np.ndarray:
    plane = as_plane(img)
    return np.clip(np.floor(plane * 255.0 + 0.5), 0, 255).astype(np.int64)


def sobel_gradient(img: np.ndarray) -> GradientField:
    """3x3 Sobel derivatives with replicate padding.

    ``dx`` responds to horizontal change (left-to-right), ``dy`` to vertical.
    """
    plane = as_plane(img)
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise ShapeError(f"Sobel needs at least 3x3 pixels, got {plane.shape}")
    p = np.pad(plane, 1, mode="edge")
    # difference first, then [1, 2, 1] smoothing: exact zeros on flat regions
    ddx = p[:, 2:] - p[:, :-2]
    ddy = p[2:, :] - p[:-2, :]
    dx = ddx[:-2] + 2.0 * ddx[1:-1] + ddx[2:]
    dy = ddy[:, :-2] + 2.0 * ddy[:, 1:-1] + ddy[:, 2:]
    return GradientField(np.sqrt(dx * dx + dy * dy), dx, dy)


# ---------------------------------------------------------------------------
# torch variants, (N, C, H, W)
# ---------------------------------------------------------------------------

def rgb_to_ycbcr_t(x: torch.Tensor) -> torch.Tensor:
    m = torch.as_tensor(_RGB2YCC, dtype=x.dtype, device=x.device)
    off = torch.as_tensor(_CHROMA_OFFSET, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    return torch.einsum("oc,nchw->nohw", m, x) + off


def ycbcr_to_rgb_t(x: torch.Tensor) -> torch.Tensor:
    m = torch.as_tensor(_YCC2RGB, dtype=x.dtype, device=x.device)
    off = torch.as_tensor(_CHROMA_OFFSET, dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    return torch.einsum("oc,nchw->nohw", m, x - off)


def luminance_t(x: torch.Tensor) -> torch.Tensor:
    """Y plane, (N, 1, H, W).  Single-channel input passes through."""
    if x.shape[1] == 1:
        return x
    w = torch.as_tensor(_RGB2YCC[0], dtype=x.dtype, device=x.device).view(1, 3, 1, 1)
    return (x * w).sum(dim=1, keepdim=True)


def sobel_magnitude_t(x: torch.Tensor) -> torch.Tensor:
    """Sobel magnitude of an (N, 1, H, W) tensor with replicate padding.

    The gradient of the magnitude is taken as zero where the magnitude is
    exactly zero (flat regions), instead of the NaN plain sqrt would give.
    """
    if x.shape[-1] < 3 or x.shape[-2] < 3:
        raise ShapeError(f"Sobel needs at least 3x3 pixels, got {tuple(x.shape[-2:])}")
    p = F.pad(x, (1, 1, 1, 1), mode="replicate")
    ddx = p[..., :, 2:] - p[..., :, :-2]
    ddy = p[..., 2:, :] - p[..., :-2, :]
    gx = ddx[..., :-2, :] + 2.0 * ddx[..., 1:-1, :] + ddx[..., 2:, :]
    gy = ddy[..., :, :-2] + 2.0 * ddy[..., :, 1:-1] + ddy[..., :, 2:]
    sq = gx ** 2 + gy ** 2
    nz = sq > 0
    return torch.where(nz, torch.sqrt(torch.where(nz, sq, torch.ones_like(sq))), torch.zeros_like(sq))
