"""Two-layer RANSAC/KLT tracker.

Layer 1 tracks a fixed grid of reference points with pyramidal KLT between
consecutive frames and fits a similarity to the (reference grid -> current
point) pairs with RANSAC. Layer 2 refines that estimate against the frame-0
template with inverse-compositional NCC alignment, restricted to pixels
around the RANSAC inliers.

Warps map template coordinates (pixels, origin at the region centre) to
image pixels. Every warp is ``W0 @ H`` with ``W0`` the initial region warp
and ``H`` a member of the configured DoF group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import lk
from .geom import (DofModel, apply_warp, fit_similarity_matrix, invert, matrix_to_params, params_to_matrix,
                   project_to_dof, quad_pose, rect_quad, transform_points, is_valid_quad, SimilarityParams)
from .imgproc import as_image


class TrackingLost(RuntimeError):
    """Raised when a tracker can no longer produce a credible pose."""


@dataclass(frozen=True)
class RkltConfig:
    grid: int = 10
    ransac_thresh: float = 2.0
    ransac_conf: float = 0.99
    ransac_max_iters: int = 500
    min_inliers: int = 8
    min_ncc: float = 0.2
    template_max_side: int = 100
    seed: int = 0
    klt: lk.KltConfig = field(default_factory=lk.KltConfig)
    ic: lk.IcConfig = field(default_factory=lk.IcConfig)

    def __post_init__(self):
        if self.grid < 3:
            raise ValueError("grid must be >= 3")
        if self.ransac_thresh <= 0:
            raise ValueError("ransac_thresh must be positive")
        if not 0 < self.ransac_conf < 1:
            raise ValueError("ransac_conf must be in (0, 1)")


@dataclass(frozen=True)
class RkltState:
    template: lk.IcTemplate
    ref_grid: np.ndarray
    curr_warp: np.ndarray
    init_warp: np.ndarray
    size: tuple[float, float]
    dof: DofModel
    cfg: RkltConfig
    prev: lk.ImagePyramid = field(repr=False)
    frame_index: int = 0

    def quad(self) -> np.ndarray:
        return apply_warp(self.curr_warp, rect_quad(0.0, 0.0, *self.size))


@dataclass(frozen=True)
class Diagnostics:
    tracked: int
    inliers: int
    ncc: float
    ic_iters: int
    layer1_ncc: float


def _rect_to_quad_homography(w: float, h: float, quad: np.ndarray) -> np.ndarray:
    src = rect_quad(0.0, 0.0, w, h)
    a = []
    for (x, y), (u, v) in zip(src, quad):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(a))
    hm = vt[-1].reshape(3, 3)
    return hm / hm[2, 2]


def region_warp(region, dof: DofModel):
    """Initial template warp and template size for a region quad."""
    region = np.asarray(region, dtype=float)
    center, (w, h), angle = quad_pose(region)
    if dof == DofModel.HOMOGRAPHY8:
        return _rect_to_quad_homography(w, h, region), (w, h)
    if dof == DofModel.AFFINE6:
        src = rect_quad(0.0, 0.0, w, h)
        sol, *_ = np.linalg.lstsq(np.column_stack([src, np.ones(4)]), region, rcond=None)
        wm = np.eye(3)
        wm[:2] = sol.T
        return wm, (w, h)
    return params_to_matrix(SimilarityParams(float(center[0]), float(center[1]), 1.0, angle)), (w, h)


def reference_grid(w: float, h: float, g: int) -> np.ndarray:
    """``g x g`` evenly spaced points spanning the template rectangle."""
    xs = np.linspace(-w / 2.0, w / 2.0, g)
    ys = np.linspace(-h / 2.0, h / 2.0, g)
    xx, yy = np.meshgrid(xs, ys)
    return np.column_stack([xx.ravel(), yy.ravel()])


def init(img, region, dof=DofModel.SIMILARITY4, cfg: RkltConfig | None = None) -> RkltState:
    cfg = cfg or RkltConfig()
    dof = DofModel.parse(dof)
    img = as_image(img)
    region = np.asarray(region, dtype=float)
    if not is_valid_quad(region) or abs(_area(region)) < 4.0:
        raise ValueError("initial region is degenerate")
    w0, (w, h) = region_warp(region, dof)
    spacing = max(1.0, max(w, h) / cfg.template_max_side)
    tmpl = lk.make_template(img, w0, w, h, dof, spacing)
    return RkltState(tmpl, reference_grid(w, h, cfg.grid), w0, w0, (w, h), dof, cfg,
                     lk.ImagePyramid.build(img, cfg.klt.levels))


def _area(q):
    x, y = q[:, 0], q[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def ransac_similarity(src, dst, cfg: RkltConfig | None = None, seed: int | None = None):
    """Robust similarity ``src -> dst``.

    Returns ``(SimilarityParams, inlier_mask)``. Minimal samples are pairs of
    correspondences at least 1 px apart; the iteration budget adapts to the
    best inlier ratio. The final model is the least-squares fit on the best
    consensus set. Sampling runs on a canonical (sorted) ordering, so the
    result does not depend on the input order.
    """
    mat, mask = ransac_similarity_matrix(src, dst, cfg, seed)
    return matrix_to_params(mat), mask


def ransac_similarity_matrix(src, dst, cfg: RkltConfig | None = None, seed: int | None = None):
    cfg = cfg or RkltConfig()
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n != len(dst):
        raise ValueError("src and dst must have the same length")
    if n < 2:
        raise TrackingLost(f"RANSAC needs at least 2 correspondences, got {n}")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    order = np.lexsort((dst[:, 1], dst[:, 0], src[:, 1], src[:, 0]))
    s, d = src[order], dst[order]
    thr2 = cfg.ransac_thresh ** 2

    best_mask = None
    best_key = (-1, 0.0)
    budget = cfg.ransac_max_iters
    it = 0
    while it < budget:
        it += 1
        i, j = rng.choice(n, 2, replace=False)
        if np.sum((s[i] - s[j]) ** 2) < 1.0:
            continue
        m = fit_similarity_matrix(s[[i, j]], d[[i, j]])
        r2 = np.sum((s @ m[:2, :2].T + m[:2, 2] - d) ** 2, axis=1)
        inl = r2 < thr2
        cnt = int(inl.sum())
        key = (cnt, -float(r2[inl].sum()))
        if key > best_key:
            best_key, best_mask = key, inl
            ratio = cnt / n
            if ratio >= 1.0:
                budget = it
            elif ratio > 0:
                need = math.log(1 - cfg.ransac_conf) / math.log(1 - ratio ** 2)
                budget = min(cfg.ransac_max_iters, max(it, int(math.ceil(need))))
    if best_mask is None or best_key[0] < min(cfg.min_inliers, n) or best_key[0] < 2:
        raise TrackingLost(f"RANSAC consensus too small ({max(best_key[0], 0)} inliers)")
    mat = fit_similarity_matrix(s[best_mask], d[best_mask])
    mask = np.zeros(n, bool)
    mask[order[best_mask]] = True
    return mat, mask


def inlier_support(tmpl: lk.IcTemplate, points: np.ndarray, side: float) -> np.ndarray:
    """Template pixels inside ``side``-wide squares around ``points``."""
    half = side / 2.0
    c = tmpl.coords
    mask = np.zeros(len(c), bool)
    for p in points:
        mask |= (np.abs(c[:, 0] - p[0]) <= half) & (np.abs(c[:, 1] - p[1]) <= half)
    return mask


def track_frame(st: RkltState, img) -> tuple[RkltState, np.ndarray, Diagnostics]:
    cfg = st.cfg
    img = as_image(img)
    nxt = lk.ImagePyramid.build(img, cfg.klt.levels)

    # layer 1: KLT between consecutive frames, RANSAC on reference-grid pairs
    prev_pts = transform_points(st.curr_warp, st.ref_grid)
    curr, tracked, _ = lk.klt_track_arrays(st.prev, nxt, prev_pts, cfg.klt)
    n_tracked = int(tracked.sum())
    if n_tracked < 2:
        raise TrackingLost(f"only {n_tracked} grid points tracked")
    src = st.ref_grid[tracked]
    sim, inl = ransac_similarity_matrix(src, curr[tracked], cfg, seed=_frame_seed(cfg.seed, st.frame_index + 1))
    # the similarity maps template coords straight to the image: restrict its
    # template-side part H = W0^-1 S to the DoF group
    h = project_to_dof(invert(st.init_warp) @ sim, st.dof)
    cand = st.init_warp @ h

    # layer 2: IC-NCC against the original template on inlier support
    mask = inlier_support(st.template, src[inl], 2 * cfg.ransac_thresh + 1)
    tmpl = st.template.with_mask(mask)
    layer1_ncc = lk.ncc_at(tmpl, img, cand)
    warp, ncc, iters = lk.ic_refine(tmpl, img, cand, cfg.ic)
    if ncc < cfg.min_ncc:
        raise TrackingLost(f"NCC {ncc:.3f} below {cfg.min_ncc}")
    new = replace(st, curr_warp=warp, prev=nxt, frame_index=st.frame_index + 1)
    return new, new.quad(), Diagnostics(n_tracked, int(inl.sum()), ncc, iters, layer1_ncc)


def _frame_seed(seed: int, frame: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(frame)])


def dof_variant_run(frames, init_quad, dof, cfg: RkltConfig | None = None):
    """Track ``frames[1:]`` from ``init_quad`` on ``frames[0]`` with the given DoF.

    Returns a list of output quads, ``None`` from the first lost frame on.
    """
    st = init(frames[0], init_quad, dof, cfg)
    out = []
    lost = False
    for f in frames[1:]:
        if lost:
            out.append(None)
            continue
        try:
            st, q, _ = track_frame(st, f)
            out.append(q)
        except TrackingLost:
            lost = True
            out.append(None)
    return out


class RkltTracker:
    """Stateful wrapper: ``initialize(img, quad)`` then ``update(img) -> quad``."""

    name = "rklt"

    def __init__(self, dof=DofModel.SIMILARITY4, config: RkltConfig | None = None):
        self.dof = DofModel.parse(dof)
        self.config = config or RkltConfig()
        self.state: RkltState | None = None
        self.diagnostics: Diagnostics | None = None

    def initialize(self, img, quad) -> None:
        self.state = init(img, quad, self.dof, self.config)

    def update(self, img) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("tracker not initialised")
        self.state, q, self.diagnostics = track_frame(self.state, img)
        return q
