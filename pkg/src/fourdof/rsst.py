"""Rotation and Scale Space Tracker.

Three independent correlation filters are run in sequence on every frame:
a 2-D translation filter over a padded search window, then a 1-D scale
filter over ``n_scales`` resampled target patches, then a 1-D rotation filter
over patches rotated by ``-rot_range..rot_range`` around the accumulated
angle. All three models are then updated at the new pose.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dcf
from .geom import SimilarityParams, apply_warp, params_to_matrix, quad_pose, rect_quad, is_valid_quad
from .imgproc import as_image, cosine_window, extract_patch, extract_patches, gaussian_label_1d, gaussian_label_2d, hog

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RsstConfig:
    rot_range: float = 20.0
    rot_step: float = 2.0
    n_scales: int = 33
    scale_step: float = 1.02
    padding: float = 2.0
    lam: float = 0.01
    eta: float = 0.025
    template_max_side: int = 96
    sample_max_side: int = 32
    cell: int = 4
    sigma_factor: float = 1.0 / 16
    refine_iters: int = 5
    scale_sigma_factor: float = 1.0 / 16
    rot_sigma_factor: float = 1.0 / 16

    def __post_init__(self):
        n_rot = self.rot_range / self.rot_step
        if self.rot_step <= 0 or abs(n_rot - round(n_rot)) > 1e-9:
            raise ValueError("rot_range must be an integral multiple of rot_step")
        if self.n_scales < 1 or self.n_scales % 2 == 0:
            raise ValueError("n_scales must be odd")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.scale_step <= 1 or self.padding <= 0 or self.lam < 0:
            raise ValueError("invalid scale_step, padding or lambda")

    @property
    def n_rotations(self) -> int:
        return 2 * int(round(self.rot_range / self.rot_step)) + 1


@dataclass(frozen=True)
class RsstState:
    position: np.ndarray
    scale: float
    rotation: float
    trans_model: dcf.DcfModel
    scale_model: dcf.DcfModel
    rot_model: dcf.DcfModel
    init_size: tuple[float, float]
    config: RsstConfig
    search_size: tuple[float, float]
    model_size: tuple[int, int]
    sample_size: tuple[int, int]
    trans_window: np.ndarray = field(repr=False)
    scale_offsets: np.ndarray = field(repr=False)
    rot_offsets: np.ndarray = field(repr=False)
    scale_window: np.ndarray = field(repr=False)
    rot_window: np.ndarray = field(repr=False)
    low_confidence: bool = False

    @property
    def pose(self) -> SimilarityParams:
        return SimilarityParams(float(self.position[0]), float(self.position[1]), self.scale, self.rotation)

    def quad(self) -> np.ndarray:
        w, h = self.init_size
        return apply_warp(params_to_matrix(self.pose), rect_quad(0.0, 0.0, w, h))


def _round_to(v: float, m: int, lo: int) -> int:
    return max(lo, int(round(v / m)) * m)


def _circular_order(k: int) -> np.ndarray:
    """Offsets -k..k laid out so that offset 0 sits at index 0."""
    return np.fft.ifftshift(np.arange(-k, k + 1))


def _translation_features(img, p, scale, rot, st: RsstState) -> np.ndarray:
    patch = extract_patch(img, p, st.search_size, scale, rot, st.model_size)
    f = hog(patch, st.config.cell)
    f[-1] -= 0.5
    return f * st.trans_window


def _sample_features(img, p, sizes, rotations, st: RsstState, window) -> np.ndarray:
    n = len(sizes)
    patches = extract_patches(img, [p] * n, sizes, [1.0] * n, rotations, st.sample_size)
    f = hog(patches, st.config.cell)
    f[:, -1] -= 0.5
    # (n_samples, d...) -> (channels, n_samples)
    return f.reshape(n, -1).T * window


def _scale_features(img, p, scale, rot, st: RsstState) -> np.ndarray:
    w, h = st.init_size
    factors = scale * st.config.scale_step ** st.scale_offsets
    sizes = [(w * a, h * a) for a in factors]
    return _sample_features(img, p, sizes, [rot] * len(sizes), st, st.scale_window)


def _rotation_features(img, p, scale, rot, st: RsstState) -> np.ndarray:
    w, h = st.init_size
    angles = rot + st.config.rot_step * st.rot_offsets
    sizes = [(w * scale, h * scale)] * len(angles)
    return _sample_features(img, p, sizes, list(angles), st, st.rot_window)


def init(img, region, config: RsstConfig | None = None) -> RsstState:
    cfg = config or RsstConfig()
    img = as_image(img)
    region = np.asarray(region, dtype=float)
    if not is_valid_quad(region):
        raise ValueError("initial region is degenerate")
    center, (w, h), angle = quad_pose(region)
    H, W = img.shape
    if not (0 <= center[0] <= W - 1 and 0 <= center[1] <= H - 1):
        raise ValueError("initial region lies outside the image")
    if w < 16 or h < 16:
        raise ValueError(f"initial region must be at least 16x16 px, got {w:.1f}x{h:.1f}")

    search = (cfg.padding * w, cfg.padding * h)
    shrink = min(1.0, cfg.template_max_side / max(search))
    model = (_round_to(search[0] * shrink, cfg.cell, 2 * cfg.cell), _round_to(search[1] * shrink, cfg.cell, 2 * cfg.cell))
    sshrink = min(1.0, cfg.sample_max_side / max(w, h))
    sample = (_round_to(w * sshrink, cfg.cell, 2 * cfg.cell), _round_to(h * sshrink, cfg.cell, 2 * cfg.cell))

    fw, fh = model[0] // cfg.cell, model[1] // cfg.cell
    # target extent in cells sets the translation label width
    tw_cells = w * model[0] / search[0] / cfg.cell
    th_cells = h * model[1] / search[1] / cfg.cell
    trans_label = gaussian_label_2d(fw, fh, (tw_cells * cfg.sigma_factor, th_cells * cfg.sigma_factor))

    ks = cfg.n_scales // 2
    kr = cfg.n_rotations // 2
    scale_offsets = _circular_order(ks).astype(float)
    rot_offsets = _circular_order(kr).astype(float)
    scale_label = gaussian_label_1d(cfg.n_scales, cfg.n_scales * cfg.scale_sigma_factor)
    rot_label = gaussian_label_1d(cfg.n_rotations, cfg.n_rotations * cfg.rot_sigma_factor)

    st = RsstState(
        position=np.array(center, dtype=float), scale=1.0, rotation=float(angle),
        trans_model=None, scale_model=None, rot_model=None,
        init_size=(float(w), float(h)), config=cfg,
        search_size=search, model_size=model, sample_size=sample,
        trans_window=cosine_window(fw, fh),
        scale_offsets=scale_offsets, rot_offsets=rot_offsets,
        scale_window=np.fft.ifftshift(cosine_window(cfg.n_scales)) if cfg.n_scales > 1 else np.ones(1),
        rot_window=np.fft.ifftshift(cosine_window(cfg.n_rotations)) if cfg.n_rotations > 1 else np.ones(1),
    )
    xt = _translation_features(img, st.position, 1.0, st.rotation, st)
    xs = _scale_features(img, st.position, 1.0, st.rotation, st)
    xr = _rotation_features(img, st.position, 1.0, st.rotation, st)
    orient_energy = float(np.abs(xt[:-1]).max())
    low = orient_energy < 1e-3
    if low:
        log.warning("RSST initialised on a flat region: no gradient structure, tracking is unreliable")
    return replace(
        st,
        trans_model=dcf.train_init(xt, trans_label, cfg.lam, cfg.eta),
        scale_model=dcf.train_init(xs, scale_label, cfg.lam, cfg.eta),
        rot_model=dcf.train_init(xr, rot_label, cfg.lam, cfg.eta),
        low_confidence=low,
    )


def _rotate(v, deg: float) -> np.ndarray:
    th = math.radians(deg)
    c, s = math.cos(th), math.sin(th)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def track_frame(st: RsstState, img) -> tuple[RsstState, np.ndarray]:
    cfg = st.config
    img = as_image(img)
    H, W = img.shape
    p0, s0, r0 = st.position, st.scale, st.rotation

    # translation, re-sampled at the estimate to shrink sub-cell bias
    px_per_cell = cfg.cell * st.search_size[0] / st.model_size[0] * s0
    py_per_cell = cfg.cell * st.search_size[1] / st.model_size[1] * s0
    p1 = p0
    for it in range(max(1, cfg.refine_iters)):
        z = _translation_features(img, p1, s0, r0, st)
        (dy, dx), _ = dcf.peak_locate(dcf.respond(st.trans_model, z))
        step = _rotate((dx * px_per_cell, dy * py_per_cell), r0)
        p1 = np.clip(p1 + step, [0.0, 0.0], [W - 1.0, H - 1.0])
        if abs(dx) < 0.01 and abs(dy) < 0.01:
            break

    # scale
    zs = _scale_features(img, p1, s0, r0, st)
    (ks,), _ = dcf.peak_locate(dcf.respond(st.scale_model, zs))
    s1 = s0 * cfg.scale_step ** ks

    # rotation, reported at bin resolution
    zr = _rotation_features(img, p1, s1, r0, st)
    resp = dcf.respond(st.rot_model, zr)
    kr = int(np.argmax(resp))
    if kr > cfg.n_rotations // 2:
        kr -= cfg.n_rotations
    r1 = r0 + cfg.rot_step * kr

    # model update at the new pose
    xt = _translation_features(img, p1, s1, r1, st)
    xs = _scale_features(img, p1, s1, r1, st)
    xr = _rotation_features(img, p1, s1, r1, st)
    new = replace(
        st, position=p1, scale=float(s1), rotation=float(r1),
        trans_model=dcf.update(st.trans_model, xt, cfg.eta),
        scale_model=dcf.update(st.scale_model, xs, cfg.eta),
        rot_model=dcf.update(st.rot_model, xr, cfg.eta),
    )
    return new, new.quad()


class RsstTracker:
    """Stateful wrapper: ``initialize(img, quad)`` then ``update(img) -> quad``."""

    name = "rsst"

    def __init__(self, config: RsstConfig | None = None):
        self.config = config or RsstConfig()
        self.state: RsstState | None = None

    def initialize(self, img, quad) -> None:
        self.state = init(img, quad, self.config)

    def update(self, img) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("tracker not initialised")
        self.state, q = track_frame(self.state, img)
        return q
