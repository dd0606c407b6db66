"""Versioned checkpoint files for the enhancer and fusion networks.

A checkpoint is a ``torch.save`` archive of a plain dict::

    {"format": "illumfuse", "version": 1, "kind": "enhancer" | "fusion",
     "arch": {...}, "meta": {...}, "state_dict": {...}}

Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import io
import os
import tempfile
from typing import Any

import torch

from .errors import CheckpointError
from .fusenet import FusionModel, FusionNetConfig
from .illum import EnhancerConfig, EnhancerModel

FORMAT = "illumfuse"
VERSION = 1


def atomic_write(path: str | os.PathLike, write) -> None:
    """Call ``write(tmp_path)`` then atomically rename the result to ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, model: EnhancerModel | FusionModel, meta: dict[str, Any] | None = None) -> None:
    if isinstance(model, EnhancerModel):
        kind = "enhancer"
    elif isinstance(model, FusionModel):
        kind = "fusion"
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "arch": model.config.to_dict(),
        "meta": dict(meta or {}),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    # serialise in memory: torch names the archive after the target file, and
    # the temp name is random, so saving straight to it breaks byte equality
    buf = io.BytesIO()
    torch.save(payload, buf)
    data = buf.getvalue()

    def write(tmp):
        with open(tmp, "wb") as fh:
            fh.write(data)

    atomic_write(path, write)


def _read(path, kind: str) -> dict:
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling/zip errors
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} checkpoint")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path} holds a {payload.get('kind')} model, expected {kind}")
    return payload


def _restore(model, payload, path):
    try:
        model.load_state_dict(payload["state_dict"])
    except (RuntimeError, KeyError) as exc:
        raise CheckpointError(f"{path}: weights do not match the stored architecture: {exc}") from exc
    dtype = next(iter(payload["state_dict"].values())).dtype if payload["state_dict"] else torch.float32
    return model.to(dtype).eval()


def _build(factory, payload, path):
    try:
        return factory(payload["arch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad architecture record: {exc}") from exc


def load_enhancer(path) -> tuple[EnhancerModel, dict]:
    payload = _read(path, "enhancer")
    model = _build(lambda a: EnhancerModel(EnhancerConfig(**a)), payload, path)
    return _restore(model, payload, path), payload.get("meta", {})


def load_fusion(path) -> tuple[FusionModel, dict]:
    payload = _read(path, "fusion")
    model = _build(lambda a: FusionModel(FusionNetConfig.from_dict(a)), payload, path)
    return _restore(model, payload, path), payload.get("meta", {})
