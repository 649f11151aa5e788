"""Synthetic sequences with analytic ground truth.

A textured target is composited over a background under a per-frame
similarity pose. Degradations are applied in a fixed order: warp,
illumination (gain/bias), box blur, Gaussian noise, occluders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .geom import SimilarityParams, apply_warp, params_to_matrix, invert, rect_quad
from .imgproc import bilinear


@dataclass(frozen=True)
class Occluder:
    start: int   # first frame (inclusive)
    stop: int    # last frame (exclusive)
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1 in pixels
    intensity: float = 0.5


@dataclass
class SynthSpec:
    texture: np.ndarray
    background: np.ndarray
    trajectory: list[SimilarityParams]
    noise_sigma: float = 0.0
    blur_radius: int = 0
    occluders: list[Occluder] = field(default_factory=list)
    illum: list[tuple[float, float]] | None = None
    seed: int = 0


@dataclass
class SyntheticSequence:
    frames: list[np.ndarray]
    gt: list[np.ndarray]

    def __len__(self):
        return len(self.frames)


def procedural_texture(h: int, w: int, seed: int = 0, checker: int = 8,
                       noise_scale: float = 4.0, contrast: float = 1.0) -> np.ndarray:
    """Checkerboard mixed with smoothed random noise, values in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    board = (((xx // checker) + (yy // checker)) % 2).astype(float) if checker > 0 else np.zeros((h, w))
    noise = rng.random((h, w))
    if noise_scale > 0:
        noise = cv2.GaussianBlur(noise, (0, 0), noise_scale, borderType=cv2.BORDER_REFLECT)
        noise = (noise - noise.min()) / max(noise.max() - noise.min(), 1e-12)
    tex = 0.5 * board + 0.5 * noise if checker > 0 else noise
    tex = 0.5 + contrast * (tex - 0.5)
    return np.clip(tex, 0.0, 1.0)


def smooth_texture(h: int, w: int, seed: int = 0, sigma: float = 3.0) -> np.ndarray:
    """Band-limited random texture (no hard edges), values in [0, 1]."""
    return procedural_texture(h, w, seed=seed, checker=0, noise_scale=sigma)


def base_quad(texture: np.ndarray) -> np.ndarray:
    """Texture rectangle centred on the origin, in the fixed corner order."""
    h, w = texture.shape
    return rect_quad(0.0, 0.0, w, h)


def _composite(texture: np.ndarray, background: np.ndarray, pose: SimilarityParams) -> np.ndarray:
    th, tw = texture.shape
    h, w = background.shape
    inv = invert(params_to_matrix(pose))
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    u = inv[0, 0] * xx + inv[0, 1] * yy + inv[0, 2]
    v = inv[1, 0] * xx + inv[1, 1] * yy + inv[1, 2]
    # texture pixel centres sit at (j + 0.5 - w/2, i + 0.5 - h/2)
    tu = u + tw / 2.0 - 0.5
    tv = v + th / 2.0 - 0.5
    inside = (u >= -tw / 2.0) & (u < tw / 2.0) & (v >= -th / 2.0) & (v < th / 2.0)
    frame = background.copy()
    frame[inside] = bilinear(texture, tu[inside], tv[inside])
    return frame


def render(spec: SynthSpec) -> SyntheticSequence:
    if not spec.trajectory:
        raise ValueError("trajectory must be non-empty")
    texture = np.asarray(spec.texture, dtype=float)
    background = np.asarray(spec.background, dtype=float)
    h, w = background.shape
    rng = np.random.default_rng(spec.seed)
    quad0 = base_quad(texture)
    frames, gt = [], []
    for i, pose in enumerate(spec.trajectory):
        q = apply_warp(params_to_matrix(pose), quad0)
        if (q[:, 0].max() < 0 or q[:, 0].min() > w - 1 or q[:, 1].max() < 0 or q[:, 1].min() > h - 1):
            raise ValueError(f"frame {i}: target rendered fully outside the {w}x{h} frame")
        frame = _composite(texture, background, pose)
        if spec.illum is not None:
            gain, bias = spec.illum[i]
            frame = gain * frame + bias
        if spec.blur_radius > 0:
            k = 2 * int(spec.blur_radius) + 1
            frame = cv2.blur(frame, (k, k), borderType=cv2.BORDER_REPLICATE)
        if spec.noise_sigma > 0:
            frame = frame + rng.normal(0.0, spec.noise_sigma, frame.shape)
        for occ in spec.occluders:
            if occ.start <= i < occ.stop:
                x0, y0, x1, y1 = occ.rect
                c0, r0 = max(int(math.floor(x0)), 0), max(int(math.floor(y0)), 0)
                c1, r1 = min(int(math.ceil(x1)), w), min(int(math.ceil(y1)), h)
                frame[r0:r1, c0:c1] = occ.intensity
        frames.append(np.clip(frame, 0.0, 1.0))
        gt.append(q)
    return SyntheticSequence(frames, gt)


def random_trajectory(n: int, seed: int, caps: tuple[float, float, float],
                      start: SimilarityParams | None = None,
                      bounds: tuple[float, float, float, float] | None = None) -> list[SimilarityParams]:
    """Bounded random walk of similarity poses.

    ``caps = (max |dt| px per axis, max |ds|, max |drot| deg)`` per frame.
    Scale is clamped to [0.5, 2]; ``bounds = (xmin, ymin, xmax, ymax)`` clamps
    the centre. Clamping only ever shrinks a step.
    """
    if any(c < 0 for c in caps):
        raise ValueError("caps must be non-negative")
    rng = np.random.default_rng(seed)
    p = start or SimilarityParams()
    out = [p]
    cap_t, cap_s, cap_r = caps
    for _ in range(n - 1):
        d = rng.uniform(-1.0, 1.0, 4)
        tx, ty = p.tx + cap_t * d[0], p.ty + cap_t * d[1]
        if bounds is not None:
            tx = min(max(tx, bounds[0]), bounds[2])
            ty = min(max(ty, bounds[1]), bounds[3])
        s = min(max(p.scale + cap_s * d[2], 0.5), 2.0)
        p = SimilarityParams(tx, ty, s, p.rotation + cap_r * d[3])
        out.append(p)
    return out


def interpolate_trajectory(start: SimilarityParams, end: SimilarityParams, n: int,
                           geometric_scale: bool = True) -> list[SimilarityParams]:
    """``n`` poses moving linearly from ``start`` to ``end`` (scale geometrically)."""
    out = []
    for i in range(n):
        a = i / (n - 1) if n > 1 else 0.0
        if geometric_scale:
            s = start.scale * (end.scale / start.scale) ** a
        else:
            s = start.scale + a * (end.scale - start.scale)
        out.append(SimilarityParams(start.tx + a * (end.tx - start.tx), start.ty + a * (end.ty - start.ty),
                                    s, start.rotation + a * (end.rotation - start.rotation)))
    return out


def export(seq: SyntheticSequence, directory, bit_depth: int = 8) -> list[Path]:
    """Write ``frame%05d.png`` (1-based) and ``gt.txt`` in the dataset layout."""
    from .dataset import write_gt
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create dataset directory {d}: {e}") from e
    paths = []
    for i, frame in enumerate(seq.frames, start=1):
        p = d / f"frame{i:05d}.png"
        if bit_depth == 16:
            data = np.round(np.clip(frame, 0, 1) * 65535).astype(np.uint16)
        else:
            data = np.round(np.clip(frame, 0, 1) * 255).astype(np.uint8)
        if not cv2.imwrite(str(p), data):
            raise OSError(f"failed to write frame {p}")
        paths.append(p)
    paths.append(write_gt(d / "gt.txt", seq.gt))
    return paths
