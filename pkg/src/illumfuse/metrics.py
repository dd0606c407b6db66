"""
Fusion quality metrics and pairwise evaluation reports.

All metrics take single-plane float images in [0, 1] (2-D arrays or (H, W, 1)).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DatasetError, ShapeError
from .imagecore import as_plane, load_image, luminance, quantize256, sobel_gradient
from .losses import WIN_SIZE, ssim_maps, target_image
from .saliency import fusion_weights, saliency_map

METRIC_NAMES = ("EN", "SCD", "FMI_w", "Q_abf", "SF", "MS_SSIM")

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

# Edge-preservation sigmoid parameters.  The gains are fixed so that a
# perfectly preserved edge scores exactly 1; their reciprocals are the
# familiar rounded constants 0.9994 and 0.9879.
KAPPA_G, SIGMA_G = -15.0, 0.5
KAPPA_A, SIGMA_A = -22.0, 0.8
GAMMA_G = 1.0 + math.exp(KAPPA_G * (1.0 - SIGMA_G))
GAMMA_A = 1.0 + math.exp(KAPPA_A * (1.0 - SIGMA_A))

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def _same_shape(*imgs: np.ndarray) -> list[np.ndarray]:
    planes = [as_plane(x) for x in imgs]
    if any(p.shape != planes[0].shape for p in planes):
        raise ShapeError(f"images differ in shape: {[p.shape for p in planes]}")
    return planes


def _entropy_bits(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(img: np.ndarray) -> float:
    counts = np.bincount(quantize256(img).ravel(), minlength=256)
    return max(_entropy_bits(counts / counts.sum()), 0.0)


def spatial_frequency(img: np.ndarray) -> float:
    x = as_plane(img)
    dh = np.diff(x, axis=1)
    dv = np.diff(x, axis=0)
    rf2 = float(np.mean(dh ** 2)) if dh.size else 0.0
    cf2 = float(np.mean(dv ** 2)) if dv.size else 0.0
    return math.sqrt(rf2 + cf2)


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float((xc * xc).sum()) * float((yc * yc).sum()))
    if den == 0.0:
        return 0.0
    return float((xc * yc).sum()) / den


def scd(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Sum of correlations of differences; zero-variance terms count as 0."""
    f, a, b = _same_shape(fused, a, b)
    return _corr(f - b, a) + _corr(f - a, b)


def _edge_field(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = sobel_gradient(x)
    angle = np.full(x.shape, math.pi / 2)
    nz = g.dx != 0
    angle[nz] = np.arctan(g.dy[nz] / g.dx[nz])
    return g.magnitude, angle


def _preservation(g_src, a_src, g_f, a_f) -> np.ndarray:
    G = np.ones_like(g_src)
    hi = g_src > g_f
    lo = g_src < g_f
    G[hi] = g_f[hi] / g_src[hi]
    G[lo] = g_src[lo] / g_f[lo]
    A = 1.0 - np.abs(a_src - a_f) / (math.pi / 2)
    qg = GAMMA_G / (1.0 + np.exp(KAPPA_G * (G - SIGMA_G)))
    qa = GAMMA_A / (1.0 + np.exp(KAPPA_A * (A - SIGMA_A)))
    return qg * qa


def qabf(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Edge-information transfer from sources ``a`` and ``b`` into ``fused``.

    When neither source has any edge the score is 1 if the fused image is also
    edge-free and 0 otherwise.
    """
    f, a, b = _same_shape(fused, a, b)
    gf, af = _edge_field(f)
    ga, aa = _edge_field(a)
    gb, ab = _edge_field(b)
    den = float((ga + gb).sum())
    if den == 0.0:
        return 1.0 if not gf.any() else 0.0
    num = float((_preservation(ga, aa, gf, af) * ga + _preservation(gb, ab, gf, af) * gb).sum())
    return min(max(num / den, 0.0), 1.0)


def haar_details(img: np.ndarray) -> np.ndarray:
    """Horizontal, vertical and diagonal one-level Haar detail bands, flattened.

    Odd trailing rows/columns are dropped.
    """
    x = as_plane(img)
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    if h == 0 or w == 0:
        raise ShapeError("Haar decomposition needs at least 2x2 pixels")
    x = x[:h, :w]
    p, q = x[0::2, 0::2], x[0::2, 1::2]
    r, s = x[1::2, 0::2], x[1::2, 1::2]
    hor = (p + q - r - s) / 2
    ver = (p - q + r - s) / 2
    diag = (p - q - r + s) / 2
    return np.concatenate([hor.ravel(), ver.ravel(), diag.ravel()])


def _minmax_levels(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.int64)
    return quantize256(((v - lo) / (hi - lo)).reshape(1, -1)).ravel()


def normalized_mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """``2 I(X;Y) / (H(X) + H(Y))`` over 256-level joint histograms of
    min-max normalised samples; 0 when both are constant."""
    qx = _minmax_levels(np.ravel(x))
    qy = _minmax_levels(np.ravel(y))
    joint = np.bincount(qx * 256 + qy, minlength=256 * 256).astype(np.float64)
    joint /= joint.sum()
    pxy = joint.reshape(256, 256)
    hx = _entropy_bits(pxy.sum(axis=1))
    hy = _entropy_bits(pxy.sum(axis=0))
    if hx + hy == 0.0:
        return 0.0
    mi = hx + hy - _entropy_bits(joint)
    return min(max(2.0 * mi / (hx + hy), 0.0), 1.0)


def fmi_w(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    f, a, b = _same_shape(fused, a, b)
    ff = haar_details(f)
    return normalized_mutual_information(ff, haar_details(a)) + normalized_mutual_information(ff, haar_details(b))


def ms_ssim(fused: np.ndarray, ref: np.ndarray) -> float:
    f, r = _same_shape(fused, ref)
    n = len(MS_SSIM_WEIGHTS)
    min_side = WIN_SIZE * 2 ** (n - 1)
    if min(f.shape) < min_side:
        raise ShapeError(f"MS-SSIM with {n} scales needs at least {min_side}x{min_side} pixels, got {f.shape}")
    x = torch.as_tensor(f)[None, None]
    y = torch.as_tensor(r)[None, None]
    score = 1.0
    for i, weight in enumerate(MS_SSIM_WEIGHTS):
        s_map, cs_map = ssim_maps(x, y)
        val = float(s_map.mean()) if i == n - 1 else float(cs_map.mean())
        score *= max(val, 0.0) ** weight
        if i < n - 1:
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
    return float(score)


def reference_image(a: np.ndarray, b: np.ndarray, p: int = 2) -> np.ndarray:
    """Saliency-weighted blend of two sources, used as the MS-SSIM reference."""
    a, b = _same_shape(a, b)
    w = fusion_weights(saliency_map(a, p), saliency_map(b, p))
    return target_image(a, b, w)[0, 0].numpy()


def all_metrics(fused: np.ndarray, a: np.ndarray, b: np.ndarray) -> dict[str, float]:
    f, a, b = _same_shape(fused, a, b)
    try:
        ms = ms_ssim(f, reference_image(a, b))
    except ShapeError:
        ms = float("nan")
    return {
        "EN": entropy(f),
        "SCD": scd(f, a, b),
        "FMI_w": fmi_w(f, a, b),
        "Q_abf": qabf(f, a, b),
        "SF": spatial_frequency(f),
        "MS_SSIM": ms,
    }


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

REPORT_NOTE = ("MS_SSIM reference: saliency-weighted blend of the IR and VIS luma planes "
               "(no ground-truth fusion exists); metrics computed on luma planes")


@dataclass
class MetricReport:
    names: list[str]
    rows: list[dict[str, float]]
    note: str = REPORT_NOTE
    metrics: tuple[str, ...] = METRIC_NAMES
    means: dict[str, float] = field(init=False)

    def __post_init__(self):
        self.means = {}
        for m in self.metrics:
            vals = np.array([r[m] for r in self.rows], dtype=np.float64)
            vals = vals[np.isfinite(vals)]
            self.means[m] = float(vals.mean()) if vals.size else float("nan")

    def cdf(self, metric: str) -> list[tuple[float, float]]:
        """``(fraction, value)`` points: that fraction of pairs scores <= value."""
        vals = sorted(v for v in (r[metric] for r in self.rows) if math.isfinite(v))
        n = len(vals)
        return [((k + 1) / n, v) for k, v in enumerate(vals)]

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.note}\n")
            w = csv.writer(fh)
            w.writerow(["pair", *self.metrics])
            for name, row in zip(self.names, self.rows):
                w.writerow([name, *(f"{row[m]:.6f}" for m in self.metrics)])
            w.writerow(["MEAN", *(f"{self.means[m]:.6f}" for m in self.metrics)])

    def write_cdf_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "fraction", "value"])
            for m in self.metrics:
                for frac, v in self.cdf(m):
                    w.writerow([m, f"{frac:.6f}", f"{v:.6f}"])

    def to_dict(self) -> dict:
        return {
            "note": self.note,
            "pairs": {n: r for n, r in zip(self.names, self.rows)},
            "means": self.means,
            "cdf": {m: self.cdf(m) for m in self.metrics},
        }

    def write(self, path: str | os.PathLike) -> list[str]:
        """Write ``path`` (per-pair CSV), ``<stem>_cdf.csv`` and ``<stem>.json``."""
        stem = os.path.splitext(str(path))[0]
        self.write_csv(path)
        self.write_cdf_csv(stem + "_cdf.csv")
        with open(stem + ".json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=True)
        return [str(path), stem + "_cdf.csv", stem + ".json"]


def list_images(directory: str | os.PathLike) -> dict[str, str]:
    """Map basename (without suffix) to path for every image in a directory."""
    if not os.path.isdir(directory):
        raise DatasetError(f"not a directory: {directory}")
    out = {}
    for fn in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(fn)
        if ext.lower() in IMAGE_SUFFIXES:
            if stem in out:
                raise DatasetError(f"duplicate basename {stem!r} in {directory}")
            out[stem] = os.path.join(directory, fn)
    return out


def evaluate_pairs(dir_fused, dir_ir, dir_vi) -> MetricReport:
    """Score every fused image against its sources.

    Each fused basename must have both an ir and a vi counterpart; extra
    source images are ignored.
    """
    fused, ir, vi = list_images(dir_fused), list_images(dir_ir), list_images(dir_vi)
    common = sorted(set(fused) & set(ir) & set(vi))
    if not common:
        raise DatasetError("no basename is present in all of the fused, ir and vi directories")
    missing = sorted(set(fused) - set(common))
    if missing:
        raise DatasetError(f"fused images without a source pair: {', '.join(missing[:5])}")
    rows = []
    for name in common:
        f = luminance(load_image(fused[name]))
        a = luminance(load_image(ir[name]))
        b = luminance(load_image(vi[name]))
        if not (f.shape == a.shape == b.shape):
            raise DatasetError(f"pair {name!r} has mismatched sizes {f.shape}, {a.shape}, {b.shape}")
        rows.append(all_metrics(f, a, b))
    return MetricReport(names=common, rows=rows)
