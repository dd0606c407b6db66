"""Brute-force scalar-loop reference implementations used by the tests."""

import math

import numpy as np


def saliency_oracle(img, p):
    """Pixel x 256-bin double loop straight from the definition."""
    q = [[int(np.floor(v * 255 + 0.5)) for v in row] for row in img]
    n = img.size
    hist = [0.0] * 256
    for row in q:
        for v in row:
            hist[v] += 1.0 / n
    out = np.zeros(img.shape)
    for r, row in enumerate(q):
        for c, v in enumerate(row):
            out[r, c] = sum(hist[i] * float(v - i) ** p for i in range(256))
    return out


def correct_oracle(f_self, f_other, att):
    n, c, h, w = f_self.shape
    out = np.zeros(f_self.shape)
    for b in range(n):
        for k in range(c):
            mean = 0.0
            for r in range(h):
                for q in range(w):
                    mean += f_other[b, k, r, q] - f_self[b, k, r, q]
            g = 1 / (1 + math.exp(-mean / (h * w)))
            for r in range(h):
                for q in range(w):
                    d = f_other[b, k, r, q] - f_self[b, k, r, q]
                    out[b, k, r, q] = (g * d + f_self[b, k, r, q]) * att[b, k, r, q]
    return out


def intensity_oracle(f, a, b, w_ir, w_vi):
    h, w = f.shape
    acc = 0.0
    for r in range(h):
        for c in range(w):
            acc += abs(f[r, c] - (w_ir[r, c] * a[r, c] + w_vi[r, c] * b[r, c]))
    return acc / (h * w)


def sobel_oracle(img):
    """Direct 3x3 correlation over an edge-replicated border."""
    h, w = img.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    dx = np.zeros((h, w))
    dy = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            for i in range(3):
                for j in range(3):
                    v = img[min(max(r + i - 1, 0), h - 1), min(max(c + j - 1, 0), w - 1)]
                    dx[r, c] += kx[i][j] * v
                    dy[r, c] += kx[j][i] * v
    return dx, dy


def grad_loss_oracle(f, a, b):
    h, w = f.shape
    fx, fy = sobel_oracle(f)
    ax, ay = sobel_oracle(a)
    bx, by = sobel_oracle(b)
    acc = 0.0
    for r in range(h):
        for c in range(w):
            gf = math.hypot(fx[r, c], fy[r, c])
            ref = max(math.hypot(ax[r, c], ay[r, c]), math.hypot(bx[r, c], by[r, c]))
            acc += abs(gf - ref)
    return acc / (h * w)


def sf_oracle(img):
    h, w = img.shape
    rf = sum((img[r][c] - img[r][c - 1]) ** 2 for r in range(h) for c in range(1, w)) / (h * (w - 1))
    cf = sum((img[r][c] - img[r - 1][c]) ** 2 for r in range(1, h) for c in range(w)) / ((h - 1) * w)
    return math.sqrt(rf + cf)


def enhancement_loss_oracle(img, L, tv_weight):
    h, w, c = img.shape
    fid = 0.0
    for r in range(h):
        for q in range(w):
            for k in range(c):
                fid += (L[r, q, k] - img[r, q, k]) ** 2
    fid /= h * w * c
    dh = [abs(L[r, q + 1, k] - L[r, q, k]) for r in range(h) for q in range(w - 1) for k in range(c)]
    dv = [abs(L[r + 1, q, k] - L[r, q, k]) for r in range(h - 1) for q in range(w) for k in range(c)]
    return fid + tv_weight * (sum(dh) / len(dh) + sum(dv) / len(dv))
