"""Fusion network: dense encoders, attention/difference fusion block, decoder.

All tensors are (N, C, H, W).  The network works on luma planes only; colour
is carried over from the enhanced visible image.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeError
from .illum import EnhancerModel, enhance_t
from .imagecore import luminance_t, rgb_to_ycbcr_t, ycbcr_to_rgb_t

NEG_SLOPE = 0.2


@dataclass(frozen=True)
class FusionNetConfig:
    encoder_width: int = 16
    encoder_blocks: int = 3
    decoder_widths: tuple[int, ...] = (32, 16)
    use_adfm: bool = True

    @property
    def feature_width(self) -> int:
        return self.encoder_width * self.encoder_blocks

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decoder_widths"] = list(self.decoder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FusionNetConfig":
        d = dict(d)
        d["decoder_widths"] = tuple(d.get("decoder_widths", ()))
        return cls(**d)


def _conv(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, 3, padding=1)


def _check_same(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"feature maps differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")


class DenseEncoder(nn.Module):
    """Each block sees the concatenation of every earlier block's output;
    the returned feature is the concatenation of all block outputs."""

    def __init__(self, width: int = 16, n_blocks: int = 3):
        super().__init__()
        self.blocks = nn.ModuleList()
        cin = 1
        for i in range(n_blocks):
            self.blocks.append(_conv(cin, width))
            cin = width * (i + 1)

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if y.shape[1] != 1:
            raise ShapeError(f"encoder expects a single luma plane, got {y.shape[1]} channels")
        if y.shape[-1] < 3 or y.shape[-2] < 3:
            raise ShapeError(f"input {tuple(y.shape[-2:])} is smaller than a 3x3 kernel")
        feats: list[torch.Tensor] = []
        x = y
        for block in self.blocks:
            feats.append(F.leaky_relu(block(x), NEG_SLOPE))
            x = torch.cat(feats, dim=1)
        return x


def adfm_attention_t(f_ir: torch.Tensor, f_vi: torch.Tensor,
                     conv_ir: nn.Module, conv_vi: nn.Module) -> torch.Tensor:
    _check_same(f_ir, f_vi)
    return torch.sigmoid(conv_ir(f_ir) * conv_vi(f_vi))


def adfm_correct(f_self: torch.Tensor, f_other: torch.Tensor, att: torch.Tensor) -> torch.Tensor:
    """Gate the cross-modal difference per channel, add it back, apply attention."""
    _check_same(f_self, f_other)
    _check_same(f_self, att)
    d = f_other - f_self
    g = torch.sigmoid(d.mean(dim=(-2, -1), keepdim=True))
    return (g * d + f_self) * att


class ADFM(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.att_ir = _conv(width, width)
        self.att_vi = _conv(width, width)
        self.fuse = _conv(2 * width, width)

    def attention(self, f_ir: torch.Tensor, f_vi: torch.Tensor) -> torch.Tensor:
        return adfm_attention_t(f_ir, f_vi, self.att_ir, self.att_vi)

    def forward(self, f_ir: torch.Tensor, f_vi: torch.Tensor) -> torch.Tensor:
        att = self.attention(f_ir, f_vi)
        c_ir = adfm_correct(f_ir, f_vi, att)
        c_vi = adfm_correct(f_vi, f_ir, att)
        return self.fuse(torch.cat([c_ir, c_vi], dim=1))


class ConcatFuse(nn.Module):
    """Ablation stand-in for ADFM: plain concatenation followed by one conv."""

    def __init__(self, width: int):
        super().__init__()
        self.fuse = _conv(2 * width, width)

    def forward(self, f_ir: torch.Tensor, f_vi: torch.Tensor) -> torch.Tensor:
        _check_same(f_ir, f_vi)
        return self.fuse(torch.cat([f_ir, f_vi], dim=1))


class Decoder(nn.Module):
    def __init__(self, cin: int, widths: tuple[int, ...] = (32, 16)):
        super().__init__()
        self.hidden = nn.ModuleList()
        for w in widths:
            self.hidden.append(_conv(cin, w))
            cin = w
        self.out = _conv(cin, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.hidden:
            x = F.leaky_relu(conv(x), NEG_SLOPE)
        return torch.sigmoid(self.out(x))


class FusionModel(nn.Module):
    def __init__(self, config: FusionNetConfig | None = None):
        super().__init__()
        self.config = config or FusionNetConfig()
        c = self.config
        self.enc_ir = DenseEncoder(c.encoder_width, c.encoder_blocks)
        self.enc_vi = DenseEncoder(c.encoder_width, c.encoder_blocks)
        width = c.feature_width
        self.fusion = ADFM(width) if c.use_adfm else ConcatFuse(width)
        self.decoder = Decoder(width, c.decoder_widths)
        # He init matched to the leaky slope; torch's default gain is too low
        # for this depth and leaves the decoder near its 0.5 midpoint for long
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, a=NEG_SLOPE, nonlinearity="leaky_relu")
                nn.init.zeros_(m.bias)

    def extract(self, y: torch.Tensor, branch: str) -> torch.Tensor:
        if branch == "ir":
            return self.enc_ir(y)
        if branch == "vi":
            return self.enc_vi(y)
        raise ValueError(f"branch must be 'ir' or 'vi', not {branch!r}")

    def forward(self, y_ir: torch.Tensor, y_vi: torch.Tensor) -> torch.Tensor:
        if y_ir.shape != y_vi.shape:
            raise ShapeError(f"luma planes differ in shape: {tuple(y_ir.shape)} vs {tuple(y_vi.shape)}")
        f_fus = self.fusion(self.enc_ir(y_ir), self.enc_vi(y_vi))
        return self.decoder(f_fus)


# ---------------------------------------------------------------------------
# operation-level API
# ---------------------------------------------------------------------------

def extract_features(model: FusionModel, y: torch.Tensor, branch: str) -> torch.Tensor:
    return model.extract(y, branch)


def adfm_attention(model: FusionModel, f_ir: torch.Tensor, f_vi: torch.Tensor) -> torch.Tensor:
    if not isinstance(model.fusion, ADFM):
        raise ValueError("model was built without the ADFM block")
    return model.fusion.attention(f_ir, f_vi)


def adfm_fuse(model: FusionModel, f_ir: torch.Tensor, f_vi: torch.Tensor) -> torch.Tensor:
    return model.fusion(f_ir, f_vi)


def decode(model: FusionModel, f_fus: torch.Tensor) -> torch.Tensor:
    return model.decoder(f_fus)


@dataclass
class FusedPair:
    """Tensors produced by :func:`fuse_pair_t`, all (N, C, H, W)."""

    rgb: torch.Tensor
    ycbcr: torch.Tensor
    ir_en: torch.Tensor
    vi_en: torch.Tensor
    y_ir: torch.Tensor
    y_vi: torch.Tensor


def enhance_pair_t(enh: EnhancerModel | None, ir: torch.Tensor, vi: torch.Tensor,
                   enhance_ir: bool = True, enhance_vis: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Enhance an RGB-replicated IR batch and an RGB visible batch."""
    if ir.shape[1] == 1:
        ir = ir.expand(-1, 3, -1, -1)
    ir_en = enhance_t(ir, enh(ir)) if (enhance_ir and enh is not None) else ir
    vi_en = enhance_t(vi, enh(vi)) if (enhance_vis and enh is not None) else vi
    return ir_en, vi_en


def fuse_pair_t(enh: EnhancerModel | None, fus: FusionModel, ir: torch.Tensor, vi: torch.Tensor,
                enhance_ir: bool = True, enhance_vis: bool = True) -> FusedPair:
    if ir.shape[-2:] != vi.shape[-2:] or ir.shape[0] != vi.shape[0]:
        raise ShapeError(f"infrared {tuple(ir.shape)} and visible {tuple(vi.shape)} do not match")
    if vi.shape[1] != 3:
        raise ShapeError("visible input must be RGB")
    ir_en, vi_en = enhance_pair_t(enh, ir, vi, enhance_ir, enhance_vis)
    vi_ycc = rgb_to_ycbcr_t(vi_en)
    y_ir = luminance_t(ir_en)
    y_vi = vi_ycc[:, 0:1]
    y_fus = fus(y_ir, y_vi)
    ycc = torch.cat([y_fus, vi_ycc[:, 1:]], dim=1)
    rgb = torch.clamp(ycbcr_to_rgb_t(ycc), 0.0, 1.0)
    return FusedPair(rgb=rgb, ycbcr=ycc, ir_en=ir_en, vi_en=vi_en, y_ir=y_ir, y_vi=y_vi)


def _image_to_tensor(img: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return torch.as_tensor(np.ascontiguousarray(arr.transpose(2, 0, 1)), dtype=dtype).unsqueeze(0)


def fuse_pair(enh: EnhancerModel | None, fus: FusionModel, ir: np.ndarray, vi: np.ndarray,
              enhance_ir: bool = True, enhance_vis: bool = True,
              return_ycbcr: bool = False):
    """Fuse one (H, W, C) infrared/visible pair and return an RGB image.

    With ``return_ycbcr`` the fused YCbCr image is returned as well, as
    ``(rgb, ycbcr)``.
    """
    ir = np.asarray(ir, dtype=np.float64)
    vi = np.asarray(vi, dtype=np.float64)
    if ir.shape[:2] != vi.shape[:2]:
        raise ShapeError(f"infrared {ir.shape[:2]} and visible {vi.shape[:2]} differ in size")
    if vi.ndim != 3 or vi.shape[2] != 3:
        raise ShapeError("visible input must be RGB")
    dtype = next(fus.parameters()).dtype
    with torch.no_grad():
        out = fuse_pair_t(enh, fus, _image_to_tensor(ir, dtype), _image_to_tensor(vi, dtype),
                          enhance_ir, enhance_vis)
    rgb = out.rgb[0].permute(1, 2, 0).double().numpy().clip(0.0, 1.0)
    if return_ycbcr:
        return rgb, out.ycbcr[0].permute(1, 2, 0).double().numpy()
    return rgb


def count_parameters(*models: nn.Module | None) -> int:
    return sum(p.numel() for m in models if m is not None for p in m.parameters())


def conv_param_count(cin: int, cout: int, k: int = 3) -> int:
    return cin * cout * k * k + cout
