"""Illumination estimation and Retinex-style enhancement.

A small convolutional network predicts an illumination map ``L`` for an RGB
image; dividing the image by ``L`` brightens under-exposed regions.  The same
network serves both modalities; infrared is fed as three replicated planes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ShapeError
from .imagecore import to_rgb

EPS_L = 1e-3


@dataclass(frozen=True)
class EnhancerConfig:
    n_layers: int = 4
    width: int = 32
    # residual base is img ** floor_exponent; 1.0 adds the raw input
    floor_exponent: float = 0.5

    def to_dict(self) -> dict:
        return asdict(self)


class EnhancerModel(nn.Module):
    """Conv stack -> sigmoid, added to ``img ** floor_exponent``, clamped to [EPS_L, 1].

    Since ``img ** e >= img`` on [0, 1] for ``e <= 1`` and the sigmoid is
    positive, ``L >= img`` wherever the upper clamp is inactive and ``L = 1``
    where it is, so ``img / L <= 1``.  With ``e = 1`` the fidelity term of
    :func:`enhancement_loss` is minimised by ``L -> img``, which enhances every
    pixel to white; ``e < 1`` makes the optimum the tone curve ``img ** (1 - e)``
    instead.
    """

    def __init__(self, config: EnhancerConfig | None = None):
        super().__init__()
        self.config = config or EnhancerConfig()
        n, w = self.config.n_layers, self.config.width
        layers: list[nn.Module] = []
        if n == 1:
            layers.append(nn.Conv2d(3, 3, 3, padding=1))
        elif n > 1:
            layers += [nn.Conv2d(3, w, 3, padding=1), nn.ReLU(inplace=True)]
            for _ in range(n - 2):
                layers += [nn.Conv2d(w, w, 3, padding=1), nn.ReLU(inplace=True)]
            layers.append(nn.Conv2d(w, 3, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"enhancer expects (N, 3, H, W), got {tuple(x.shape)}")
        if not 0.0 < self.config.floor_exponent <= 1.0:
            raise ValueError("floor_exponent must lie in (0, 1]")
        if len(self.body) == 0:
            return torch.ones_like(x)
        e = self.config.floor_exponent
        base = x if e == 1.0 else x.clamp_min(0.0) ** e
        return torch.clamp(base + torch.sigmoid(self.body(x)), EPS_L, 1.0)


def _to_tensor(img: np.ndarray, model: nn.Module) -> torch.Tensor:
    p = next(model.parameters(), None)
    dtype = p.dtype if p is not None else torch.float64
    return torch.as_tensor(np.ascontiguousarray(img.transpose(2, 0, 1)), dtype=dtype).unsqueeze(0)


def estimate_illumination(model: EnhancerModel, img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"illumination is estimated on RGB images, got shape {arr.shape}")
    with torch.no_grad():
        L = model(_to_tensor(arr, model))
    out = L[0].permute(1, 2, 0).double().numpy()
    # the float32 forward may round x + s a hair below x
    return np.clip(np.maximum(out, arr), EPS_L, 1.0)


def enhance(img: np.ndarray, L: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if img.shape != L.shape:
        raise ShapeError(f"image {img.shape} and illumination {L.shape} differ in shape")
    return np.clip(img / L, 0.0, 1.0)


def enhance_t(x: torch.Tensor, L: torch.Tensor) -> torch.Tensor:
    return torch.clamp(x / L, 0.0, 1.0)


def enhance_image(model: EnhancerModel, img: np.ndarray) -> np.ndarray:
    """Estimate L for ``img`` (gray images are replicated to RGB) and divide."""
    rgb = to_rgb(img)
    return enhance(rgb, estimate_illumination(model, rgb))


def total_variation_t(L: torch.Tensor) -> torch.Tensor:
    dh = (L[..., :, 1:] - L[..., :, :-1]).abs()
    dv = (L[..., 1:, :] - L[..., :-1, :]).abs()
    tv = L.new_zeros(())
    if dh.numel():
        tv = tv + dh.mean()
    if dv.numel():
        tv = tv + dv.mean()
    return tv


def enhancement_loss_t(img: torch.Tensor, L: torch.Tensor, tv_weight: float = 0.15) -> torch.Tensor:
    """Fidelity ``mean((L - img)^2)`` plus ``tv_weight`` times the mean absolute
    horizontal and vertical forward differences of ``L``."""
    return ((L - img) ** 2).mean() + tv_weight * total_variation_t(L)


def enhancement_loss(img: np.ndarray, L: np.ndarray, tv_weight: float = 0.15) -> float:
    img = np.asarray(img, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if img.shape != L.shape:
        raise ShapeError(f"image {img.shape} and illumination {L.shape} differ in shape")
    # (H, W, C) -> (C, H, W) so the spatial axes are the last two
    t = lambda a: torch.as_tensor(np.moveaxis(a, -1, 0)) if a.ndim == 3 else torch.as_tensor(a)
    return float(enhancement_loss_t(t(img), t(L), tv_weight))
