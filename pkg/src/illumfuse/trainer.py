"""Paired dataset ingestion and the two-stage training procedure.

Stage 1 fits the illumination estimator on patches of both modalities.
Stage 2 freezes it (unless ``finetune_enhancer``) and fits the fusion network
on enhanced luma planes with the saliency-weighted objective.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import atomic_write, save_checkpoint
from .errors import ArgumentError, DatasetError
from .fusenet import FusionModel, FusionNetConfig, count_parameters, enhance_pair_t
from .illum import EnhancerConfig, EnhancerModel, enhancement_loss_t
from .imagecore import load_image, luminance_t, to_rgb
from .losses import LossWeights, loss_total
from .metrics import list_images
from .saliency import WeightPair, fusion_weights, saliency_map

log = logging.getLogger(__name__)

ENV_PREFIX = "ILLUMFUSE_"

__all__ = [
    "FusionConfig", "PairedDataset", "TrainResult", "load_dataset", "sample_patch",
    "train_enhancer", "train_fusion", "learning_rate", "count_parameters",
    "load_config", "save_config",
]


@dataclass
class FusionConfig:
    # patches
    patch_w: int = 600
    patch_h: int = 400
    # stage 1: illumination estimator
    stage1_batch: int = 8
    stage1_epochs: int = 100
    stage1_lr: float = 0.001
    tv_weight: float = 0.15
    # stage 2: fusion network
    stage2_batch: int = 6
    stage2_epochs: int = 150
    lr: float = 0.001
    lr_decay: float = 0.1
    lr_step: int = 30
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    alpha: float = 1.0
    beta: float = 15.0
    gamma: float = 3.0
    saliency_p: int = 2
    # ablations
    enhance_vis: bool = True
    enhance_ir: bool = True
    use_stam: bool = True
    use_adfm: bool = True
    finetune_enhancer: bool = False
    # architecture
    enhancer_layers: int = 4
    enhancer_width: int = 32
    enhancer_floor_exponent: float = 0.5
    encoder_width: int = 16
    encoder_blocks: int = 3
    decoder_widths: tuple[int, ...] = (32, 16)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        counts = ("patch_w", "patch_h", "stage1_batch", "stage2_batch", "lr_step")
        for name in counts:
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive")
        for name in ("stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be non-negative")
        if self.lr <= 0 or self.stage1_lr <= 0:
            raise ArgumentError("learning rates must be positive")
        if self.saliency_p <= 0 or self.saliency_p % 2:
            raise ArgumentError("saliency_p must be a positive even integer")
        if min(self.alpha, self.beta, self.gamma, self.tv_weight) < 0:
            raise ArgumentError("loss weights must be non-negative")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma)

    def enhancer_config(self) -> EnhancerConfig:
        return EnhancerConfig(n_layers=self.enhancer_layers, width=self.enhancer_width,
                              floor_exponent=self.enhancer_floor_exponent)

    def fusion_net_config(self) -> FusionNetConfig:
        return FusionNetConfig(encoder_width=self.encoder_width, encoder_blocks=self.encoder_blocks,
                               decoder_widths=tuple(self.decoder_widths), use_adfm=self.use_adfm)

    def replace(self, **changes) -> "FusionConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# flat key = value config files
# ---------------------------------------------------------------------------

def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(FusionConfig)}


def _parse_value(key: str, raw: str) -> Any:
    kind = _field_types()[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    except ValueError:
        raise ArgumentError(f"bad value for {key}: {raw!r}") from None


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_config_text(text: str) -> dict[str, Any]:
    known = _field_types()
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ArgumentError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def env_overrides(environ: dict[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    for key in _field_types():
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = _parse_value(key, environ[name])
    return out


def load_config(path: str | os.PathLike | None = None, environ: dict[str, str] | None = None,
                **overrides) -> FusionConfig:
    """Defaults, then the file at ``path``, then ``ILLUMFUSE_*`` variables, then kwargs."""
    values: dict[str, Any] = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update(env_overrides(environ))
    values.update(overrides)
    return FusionConfig(**values)


def config_text(cfg: FusionConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


def save_config(cfg: FusionConfig, path: str | os.PathLike) -> None:
    text = config_text(cfg)

    def write(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)

    atomic_write(path, write)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

@dataclass
class PairedDataset:
    root: str
    names: list[str]
    ir_paths: list[str]
    vi_paths: list[str]
    _cache: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.names)

    def pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(ir, vi) as (H, W, 3) float arrays; grayscale inputs are replicated."""
        if i not in self._cache:
            self._cache[i] = (to_rgb(load_image(self.ir_paths[i])), to_rgb(load_image(self.vi_paths[i])))
        return self._cache[i]

    def subset(self, indices) -> "PairedDataset":
        idx = list(indices)
        return PairedDataset(self.root, [self.names[i] for i in idx],
                             [self.ir_paths[i] for i in idx], [self.vi_paths[i] for i in idx])


def _image_size(path: str) -> tuple[int, int]:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return im.size
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def load_dataset(root: str | os.PathLike) -> PairedDataset:
    root = os.fspath(root)
    ir_dir, vi_dir = os.path.join(root, "ir"), os.path.join(root, "vi")
    if not (os.path.isdir(ir_dir) and os.path.isdir(vi_dir)):
        raise DatasetError(f"{root} must contain 'ir' and 'vi' subdirectories")
    ir, vi = list_images(ir_dir), list_images(vi_dir)
    unmatched = sorted(set(ir) ^ set(vi))
    if unmatched:
        raise DatasetError(f"unmatched basenames: {', '.join(unmatched[:5])}")
    names = sorted(ir)
    for n in names:
        if _image_size(ir[n]) != _image_size(vi[n]):
            raise DatasetError(f"pair {n!r}: ir and vi sizes differ")
    return PairedDataset(root, names, [ir[n] for n in names], [vi[n] for n in names])


def _resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    t = torch.as_tensor(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    t = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=False)
    return t[0].permute(1, 2, 0).numpy().clip(0.0, 1.0)


def sample_patch(pair: tuple[np.ndarray, np.ndarray], cfg: FusionConfig,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Crop the same random patch_h x patch_w window from both images.

    Images smaller than the patch are first upscaled (aspect preserved) so
    that they cover it.
    """
    ir, vi = pair
    h, w = ir.shape[:2]
    ph, pw = cfg.patch_h, cfg.patch_w
    if h < ph or w < pw:
        s = max(ph / h, pw / w)
        h, w = max(ph, math.ceil(h * s)), max(pw, math.ceil(w * s))
        ir, vi = _resize(ir, h, w), _resize(vi, h, w)
    top = int(rng.integers(0, h - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    return ir[top:top + ph, left:left + pw], vi[top:top + ph, left:left + pw]


def _batch(images: list[np.ndarray]) -> torch.Tensor:
    return torch.as_tensor(np.stack([im.transpose(2, 0, 1) for im in images]), dtype=torch.float32)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: torch.nn.Module
    losses: list[float]
    lrs: list[float] = field(default_factory=list)


def learning_rate(cfg: FusionConfig, epoch: int) -> float:
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_step)


def seed_everything(seed: int) -> np.random.Generator:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    return np.random.default_rng(seed)


def _adam(params, lr: float, cfg: FusionConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, betas=(cfg.adam_beta1, cfg.adam_beta2))


def write_loss_log(path, losses: list[float], lrs: list[float] | None = None) -> None:
    lrs = lrs or [float("nan")] * len(losses)
    rows = "".join(f"{i},{loss!r},{lr!r}\n" for i, (loss, lr) in enumerate(zip(losses, lrs)))

    def write(tmp):
        with open(tmp, "w") as fh:
            fh.write("epoch,loss,lr\n" + rows)

    atomic_write(path, write)


def _loss_log_path(ckpt_path) -> str:
    return os.path.splitext(os.fspath(ckpt_path))[0] + "_loss.csv"


def train_enhancer(ds: PairedDataset, cfg: FusionConfig, out=None) -> TrainResult:
    """Fit the shared illumination estimator on IR and VIS patches.

    Every epoch draws one crop per pair; the 2N resulting patches are
    shuffled and split into batches of ``stage1_batch``.  With ``out`` the
    checkpoint is written there and the per-epoch loss log next to it.
    """
    if len(ds) == 0:
        raise DatasetError("cannot train on an empty dataset")
    rng = seed_everything(cfg.seed)
    model = EnhancerModel(cfg.enhancer_config())
    opt = _adam(model.parameters(), cfg.stage1_lr, cfg)
    losses: list[float] = []
    for epoch in range(cfg.stage1_epochs):
        patches = []
        for i in rng.permutation(len(ds)):
            ir, vi = sample_patch(ds.pair(int(i)), cfg, rng)
            patches += [ir, vi]
        order = rng.permutation(len(patches))
        total, count = 0.0, 0
        model.train()
        for start in range(0, len(order), cfg.stage1_batch):
            x = _batch([patches[j] for j in order[start:start + cfg.stage1_batch]])
            loss = enhancement_loss_t(x, model(x), cfg.tv_weight)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite enhancer loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * x.shape[0]
            count += x.shape[0]
        losses.append(total / count)
        log.info("enhancer epoch %d loss %.6f", epoch, losses[-1])
    model.eval()
    result = TrainResult(model, losses, [cfg.stage1_lr] * len(losses))
    if out is not None:
        save_checkpoint(out, model, {"stage": 1, "config": config_text(cfg)})
        write_loss_log(_loss_log_path(out), result.losses, result.lrs)
    return result


def stam_weights(y_ir: torch.Tensor, y_vi: torch.Tensor, p: int = 2) -> WeightPair:
    """Per-sample saliency weights for (N, 1, H, W) luma batches."""
    w_ir = []
    for a, b in zip(y_ir.detach().double().numpy(), y_vi.detach().double().numpy()):
        w = fusion_weights(saliency_map(a[0].clip(0, 1), p), saliency_map(b[0].clip(0, 1), p))
        w_ir.append(w.w_ir)
    w_ir_t = torch.as_tensor(np.stack(w_ir)[:, None], dtype=y_ir.dtype)
    return WeightPair(w_ir_t, 1.0 - w_ir_t)


def even_weights(y: torch.Tensor) -> WeightPair:
    half = torch.full_like(y, 0.5)
    return WeightPair(half, half.clone())


def fusion_step_loss(enh: EnhancerModel | None, fus: FusionModel, ir: torch.Tensor, vi: torch.Tensor,
                     cfg: FusionConfig, track_enhancer: bool = False) -> torch.Tensor:
    """Objective for one batch of raw (ir, vi) RGB tensors."""
    with torch.set_grad_enabled(track_enhancer and torch.is_grad_enabled()):
        ir_en, vi_en = enhance_pair_t(enh, ir, vi, cfg.enhance_ir, cfg.enhance_vis)
        y_ir = luminance_t(ir_en)
        y_vi = luminance_t(vi_en)
    fused = fus(y_ir, y_vi)
    w = stam_weights(y_ir, y_vi, cfg.saliency_p) if cfg.use_stam else even_weights(y_ir)
    return loss_total(fused, y_ir, y_vi, w, cfg.loss_weights)


def train_fusion(ds: PairedDataset, enh: EnhancerModel | None, cfg: FusionConfig, out=None) -> TrainResult:
    """Stage 2: fit the fusion network on enhanced luma patches.

    Adam with step decay ``lr * lr_decay ** (epoch // lr_step)``.  The
    enhancer is frozen unless ``cfg.finetune_enhancer``.
    """
    if len(ds) == 0:
        raise DatasetError("cannot train on an empty dataset")
    rng = seed_everything(cfg.seed + 1)
    fus = FusionModel(cfg.fusion_net_config())
    params = list(fus.parameters())
    finetune = cfg.finetune_enhancer and enh is not None
    if enh is not None:
        enh.train(finetune)
        for p in enh.parameters():
            p.requires_grad_(finetune)
        if finetune:
            params += list(enh.parameters())
    opt = _adam(params, cfg.lr, cfg)
    losses: list[float] = []
    lrs: list[float] = []
    for epoch in range(cfg.stage2_epochs):
        lr = learning_rate(cfg, epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        order = rng.permutation(len(ds))
        total, count = 0.0, 0
        fus.train()
        for start in range(0, len(order), cfg.stage2_batch):
            crops = [sample_patch(ds.pair(int(i)), cfg, rng) for i in order[start:start + cfg.stage2_batch]]
            ir = _batch([c[0] for c in crops])
            vi = _batch([c[1] for c in crops])
            loss = fusion_step_loss(enh, fus, ir, vi, cfg, track_enhancer=finetune)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite fusion loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * ir.shape[0]
            count += ir.shape[0]
        losses.append(total / count)
        lrs.append(lr)
        log.info("fusion epoch %d lr %.2e loss %.6f", epoch, lr, losses[-1])
    fus.eval()
    if enh is not None:
        enh.eval()
        for p in enh.parameters():
            p.requires_grad_(True)
    result = TrainResult(fus, losses, lrs)
    if out is not None:
        meta = {"stage": 2, "enhance_ir": cfg.enhance_ir, "enhance_vis": cfg.enhance_vis,
                "use_stam": cfg.use_stam, "config": config_text(cfg)}
        save_checkpoint(out, fus, meta)
        if finetune:
            save_checkpoint(os.path.splitext(os.fspath(out))[0] + "_enhancer.pt", enh, {"stage": 2})
        write_loss_log(_loss_log_path(out), losses, lrs)
    return result
