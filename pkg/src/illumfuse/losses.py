"""Fusion training objective: SSIM structure, l1 intensity and Sobel gradient terms.

Every function accepts (N, 1, H, W) tensors, or 2-D / (H, W, 1) numpy arrays
which are promoted to float64 tensors.  Results are 0-d tensors so they can be
back-propagated; call ``float()`` for a plain number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError
from .imagecore import sobel_magnitude_t
from .saliency import WeightPair

WIN_SIZE = 11
WIN_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 15.0
    gamma: float = 3.0


def as_batch(x, like: torch.Tensor | None = None) -> torch.Tensor:
    """Promote an image to an (N, 1, H, W) tensor."""
    if not isinstance(x, torch.Tensor):
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        x = torch.as_tensor(arr)
    if like is not None:
        x = x.to(like.dtype)
    if x.dim() == 2:
        x = x[None, None]
    elif x.dim() == 3:
        x = x[None]
    if x.dim() != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected a single-plane image, got shape {tuple(x.shape)}")
    return x


def _pair(a, b) -> tuple[torch.Tensor, torch.Tensor]:
    a = as_batch(a)
    b = as_batch(b, like=a)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return a, b


def gaussian_window(size: int = WIN_SIZE, sigma: float = WIN_SIGMA,
                    dtype: torch.dtype = torch.float64) -> torch.Tensor:
    r = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(r ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return (g[:, None] * g[None, :])[None, None]


def ssim_maps(a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Local SSIM and contrast-structure maps over valid 11x11 Gaussian windows."""
    if a.shape[-1] < WIN_SIZE or a.shape[-2] < WIN_SIZE:
        raise ShapeError(f"SSIM needs at least {WIN_SIZE}x{WIN_SIZE} pixels, got {tuple(a.shape[-2:])}")
    w = gaussian_window(dtype=a.dtype).to(a.device)
    mu_a = F.conv2d(a, w)
    mu_b = F.conv2d(b, w)
    s_aa = F.conv2d(a * a, w) - mu_a ** 2
    s_bb = F.conv2d(b * b, w) - mu_b ** 2
    s_ab = F.conv2d(a * b, w) - mu_a * mu_b
    cs = (2 * s_ab + C2) / (s_aa + s_bb + C2)
    lum = (2 * mu_a * mu_b + C1) / (mu_a ** 2 + mu_b ** 2 + C1)
    return lum * cs, cs


def ssim(a, b) -> torch.Tensor:
    a, b = _pair(a, b)
    return ssim_maps(a, b)[0].mean()


def target_image(ir_en, vi_en, w: WeightPair) -> torch.Tensor:
    ir_en, vi_en = _pair(ir_en, vi_en)
    w_ir = as_batch(w.w_ir, like=ir_en)
    w_vi = as_batch(w.w_vi, like=ir_en)
    if w_ir.shape[-2:] != ir_en.shape[-2:] or w_vi.shape != w_ir.shape:
        raise ShapeError("weight maps do not match the image size")
    return w_ir * ir_en + w_vi * vi_en


def loss_struct(fused, ir_en, vi_en, w: WeightPair) -> torch.Tensor:
    fused = as_batch(fused)
    return 1.0 - ssim(fused, target_image(ir_en, vi_en, w).to(fused.dtype))


def loss_intensity(fused, ir_en, vi_en, w: WeightPair) -> torch.Tensor:
    fused = as_batch(fused)
    t = target_image(ir_en, vi_en, w).to(fused.dtype)
    if t.shape != fused.shape:
        raise ShapeError(f"fused {tuple(fused.shape)} does not match sources {tuple(t.shape)}")
    return (fused - t).abs().mean()


def loss_grad(fused, ir_en, vi_en) -> torch.Tensor:
    fused = as_batch(fused)
    ir_en, vi_en = _pair(ir_en, vi_en)
    ir_en, vi_en = ir_en.to(fused.dtype), vi_en.to(fused.dtype)
    if ir_en.shape != fused.shape:
        raise ShapeError(f"fused {tuple(fused.shape)} does not match sources {tuple(ir_en.shape)}")
    ref = torch.maximum(sobel_magnitude_t(ir_en), sobel_magnitude_t(vi_en))
    return (sobel_magnitude_t(fused) - ref).abs().mean()


def loss_total(fused, ir_en, vi_en, w: WeightPair, lw: LossWeights = LossWeights()) -> torch.Tensor:
    total = as_batch(fused).new_zeros(())
    # zero-weighted terms are skipped so they cannot inject NaN/Inf
    if lw.alpha:
        total = total + lw.alpha * loss_struct(fused, ir_en, vi_en, w)
    if lw.beta:
        total = total + lw.beta * loss_intensity(fused, ir_en, vi_en, w)
    if lw.gamma:
        total = total + lw.gamma * loss_grad(fused, ir_en, vi_en)
    return total
