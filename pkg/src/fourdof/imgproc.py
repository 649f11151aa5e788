"""Grayscale image utilities: sampling, patches, HOG, windows, labels, pyramids.

Images are 2-D float arrays indexed ``[row, col]`` with intensities in
``[0, 1]``. Pixel ``(row i, col j)`` has its centre at ``(x=j, y=i)``.
Feature maps are channel-first: ``(d, h, w)`` for 2-D, ``(d, n)`` for 1-D.
"""
from __future__ import annotations

import math

import numpy as np

HOG_BINS = 9
HOG_EPS = 1e-6
HOG_CLIP = 0.2


def as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D grayscale image, got shape {img.shape}")
    return img


def bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at real coordinates with replicated borders."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(h - 2, 0))
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def patch_grid(center, size, scale, rotation, out_size):
    """Sample coordinates of a rotated, scaled rectangle resampled to ``out_size``.

    Returns ``(xs, ys)`` arrays of shape ``(out_h, out_w)``.
    """
    ow, oh = int(out_size[0]), int(out_size[1])
    sw, sh = size[0] * scale / ow, size[1] * scale / oh
    u = (np.arange(ow) - (ow - 1) / 2.0) * sw
    v = (np.arange(oh) - (oh - 1) / 2.0) * sh
    th = math.radians(rotation)
    c, s = math.cos(th), math.sin(th)
    uu, vv = np.meshgrid(u, v)
    xs = center[0] + c * uu - s * vv
    ys = center[1] + s * uu + c * vv
    return xs, ys


def extract_patch(img, center, size, scale=1.0, rotation=0.0, out_size=None) -> np.ndarray:
    """Bilinear patch of ``size`` (w, h) pixels scaled and rotated about ``center``.

    Out-of-image samples take the nearest border value.
    """
    img = as_image(img)
    if out_size is None:
        out_size = (int(round(size[0])), int(round(size[1])))
    if out_size[0] < 4 or out_size[1] < 4:
        raise ValueError(f"out_size must be at least 4x4, got {out_size}")
    xs, ys = patch_grid(center, size, scale, rotation, out_size)
    return bilinear(img, xs, ys)


def extract_patches(img, centers, sizes, scales, rotations, out_size) -> np.ndarray:
    """Batch of patches, one per (center, size, scale, rotation); shape ``(n, oh, ow)``."""
    img = as_image(img)
    ow, oh = int(out_size[0]), int(out_size[1])
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    sizes = np.asarray(sizes, dtype=float).reshape(-1, 2)
    scales = np.asarray(scales, dtype=float).reshape(-1)
    th = np.radians(np.asarray(rotations, dtype=float).reshape(-1))
    c, s = np.cos(th)[:, None, None], np.sin(th)[:, None, None]
    uu = (np.arange(ow) - (ow - 1) / 2.0)[None, None, :] * (sizes[:, 0] * scales / ow)[:, None, None]
    vv = (np.arange(oh) - (oh - 1) / 2.0)[None, :, None] * (sizes[:, 1] * scales / oh)[:, None, None]
    xs = centers[:, 0, None, None] + c * uu - s * vv
    ys = centers[:, 1, None, None] + s * uu + c * vv
    return bilinear(img, xs, ys)


def gradient(img) -> tuple[np.ndarray, np.ndarray]:
    """Central differences along x and y with replicated borders."""
    img = np.asarray(img, dtype=float)
    p = np.pad(img, [(0, 0)] * (img.ndim - 2) + [(1, 1), (1, 1)], mode="edge")
    gx = (p[..., 1:-1, 2:] - p[..., 1:-1, :-2]) * 0.5
    gy = (p[..., 2:, 1:-1] - p[..., :-2, 1:-1]) * 0.5
    return gx, gy


_BURT = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _smooth_axis(img: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * img.ndim
    pad[axis] = (2, 2)
    p = np.pad(img, pad, mode="edge")
    n = img.shape[axis]
    out = np.zeros_like(img)
    for k, wk in enumerate(_BURT):
        out += wk * np.take(p, np.arange(k, k + n), axis=axis)
    return out


def pyr_down(img: np.ndarray) -> np.ndarray:
    """Gaussian blur then keep even pixels: level coordinates are exactly x / 2."""
    sm = _smooth_axis(_smooth_axis(img, 0), 1)
    return sm[::2, ::2]


def pyramid(img, levels: int, min_size: int = 8) -> list[np.ndarray]:
    """``levels`` images, each half the resolution of the previous.

    Stops early (never raises) once another halving would drop below
    ``min_size`` pixels on a side.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = [as_image(img)]
    while len(out) < levels:
        h, w = out[-1].shape
        if (min(h, w) + 1) // 2 < min_size:
            break
        out.append(pyr_down(out[-1]))
    return out


def cosine_window(w: int, h: int | None = None) -> np.ndarray:
    """Separable Hann window; ``(h, w)`` for 2-D or ``(w,)`` when ``h`` is None."""
    def hann(n):
        if n == 1:
            return np.ones(1)
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / (n - 1))
    if h is None:
        return hann(w)
    return np.outer(hann(h), hann(w))


def _circular_offsets(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n).astype(float)


def gaussian_label_1d(n: int, sigma: float) -> np.ndarray:
    """Gaussian with peak 1 at index 0, wrapping circularly."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = _circular_offsets(n)
    return np.exp(-0.5 * (d / sigma) ** 2)


def gaussian_label_2d(w: int, h: int, sigma) -> np.ndarray:
    """2-D label of shape ``(h, w)`` peaked at ``[0, 0]``; ``sigma`` scalar or (sx, sy)."""
    sx, sy = (sigma, sigma) if np.isscalar(sigma) else sigma
    return np.outer(gaussian_label_1d(h, sy), gaussian_label_1d(w, sx))


def _cell_weights(n_pix: int, cell: int) -> np.ndarray:
    """Tent weights ``(n_cells, n_pix)`` for bilinear voting into neighbouring cells."""
    n_cells = n_pix // cell
    centers = (np.arange(n_cells) + 0.5) * cell - 0.5
    pix = np.arange(n_pix)
    return np.maximum(0.0, 1.0 - np.abs(pix[None, :] - centers[:, None]) / cell)


def hog(patch, cell: int = 4) -> np.ndarray:
    """HOG map ``(10, h // cell, w // cell)``: 9 unsigned orientation bins + mean intensity.

    Accepts a single patch ``(h, w)`` or a batch ``(n, h, w)`` (then returns
    ``(n, 10, hc, wc)``).
    """
    patch = np.asarray(patch, dtype=float)
    single = patch.ndim == 2
    if single:
        patch = patch[None]
    n, h, w = patch.shape
    if h < cell or w < cell:
        raise ValueError(f"patch {h}x{w} smaller than one {cell}px cell")
    hc, wc = h // cell, w // cell
    gx, gy = gradient(patch)
    mag = np.hypot(gx, gy)
    # unsigned orientation in bin units; bin k is centred on k * 20 degrees
    pos = (np.arctan2(gy, gx) % np.pi) / (np.pi / HOG_BINS)
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.intp) % HOG_BINS
    hi = (lo + 1) % HOG_BINS
    wy = _cell_weights(h, cell)
    wx = _cell_weights(w, cell)
    # lo != hi, so the two scatters never overwrite each other
    votes = np.zeros((n, HOG_BINS, h, w))
    np.put_along_axis(votes, lo[:, None], (mag * (1.0 - frac))[:, None], axis=1)
    np.put_along_axis(votes, hi[:, None], (mag * frac)[:, None], axis=1)
    hist = wy @ votes @ wx.T
    feats = np.empty((n, HOG_BINS + 1, hc, wc))
    feats[:, :HOG_BINS] = _block_normalize(hist)
    cropped = patch[:, : hc * cell, : wc * cell]
    feats[:, HOG_BINS] = cropped.reshape(n, hc, cell, wc, cell).mean(axis=(2, 4))
    return feats[0] if single else feats


def _block_normalize(hist: np.ndarray) -> np.ndarray:
    """Average over the four 2x2 blocks containing each cell of L2-clip-L2 normalised votes."""
    n, b, hc, wc = hist.shape
    p = np.pad(hist, [(0, 0), (0, 0), (1, 1), (1, 1)], mode="edge")
    # block (u, v) covers padded cells [u:u+2, v:v+2]; cell (i, j) lies in u in {i, i+1}, v in {j, j+1}
    corners = [p[:, :, a:a + hc + 1, c:c + wc + 1] for a in (0, 1) for c in (0, 1)]
    sq = (p ** 2).sum(axis=1)
    norm = np.sqrt(sq[:, :-1, :-1] + sq[:, 1:, :-1] + sq[:, :-1, 1:] + sq[:, 1:, 1:]) + HOG_EPS
    inv = 1.0 / norm[:, None]
    norm2 = sum((np.minimum(cell * inv, HOG_CLIP) ** 2).sum(axis=1) for cell in corners)
    norm2 = np.sqrt(norm2) + HOG_EPS
    out = np.zeros_like(hist)
    for dy in (0, 1):
        for dx in (0, 1):
            nb = norm[:, None, dy:dy + hc, dx:dx + wc]
            out += np.minimum(hist / nb, HOG_CLIP) / norm2[:, None, dy:dy + hc, dx:dx + wc]
    return out / 4.0
