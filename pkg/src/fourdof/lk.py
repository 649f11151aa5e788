"""Lucas-Kanade machinery: pyramidal point tracking and inverse-compositional
alignment under normalised cross-correlation.

NCC is maximised as the sum of squared differences between zero-mean,
unit-norm intensity vectors. The template-side normalisation is folded into
the steepest-descent images, so the Hessian is fixed for a given support
mask and the usual inverse-compositional precomputation applies.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import DofModel, compose, dof_jacobian, dof_matrix, invert, transform_points
from .imgproc import as_image, bilinear, gradient, pyramid


class PointStatus(enum.Enum):
    TRACKED = "tracked"
    LOST = "lost"


@dataclass(frozen=True)
class TrackedPoint:
    prev: tuple[float, float]
    curr: tuple[float, float]
    status: PointStatus
    residual: float


@dataclass(frozen=True)
class KltConfig:
    levels: int = 3
    window: int = 11
    max_iters: int = 30
    eps: float = 0.01
    # a point is lost when min eigenvalue / window area falls below
    # max(min_eig_abs, min_eig_rel * best such value among the tracked points)
    min_eig_rel: float = 1e-4
    min_eig_abs: float = 1e-7


@dataclass
class ImagePyramid:
    levels: list[np.ndarray]
    grads: list[tuple[np.ndarray, np.ndarray]] = field(repr=False)

    @classmethod
    def build(cls, img, levels: int) -> "ImagePyramid":
        lv = pyramid(img, levels)
        return cls(lv, [gradient(a) for a in lv])

    @property
    def shape(self):
        return self.levels[0].shape


def _as_pyramid(img, levels: int) -> ImagePyramid:
    if isinstance(img, ImagePyramid):
        return img
    return ImagePyramid.build(img, levels)


def klt_track_arrays(prev, nxt, pts, cfg: KltConfig | None = None):
    """Vectorised pyramidal KLT.

    Returns ``(curr (n, 2), tracked (n,) bool, residual (n,))``. ``prev`` and
    ``nxt`` may be images or prebuilt :class:`ImagePyramid` objects.
    """
    cfg = cfg or KltConfig()
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0, bool), np.zeros(0)
    P = _as_pyramid(prev, cfg.levels)
    N = _as_pyramid(nxt, cfg.levels)
    nlev = min(len(P.levels), len(N.levels))
    half = cfg.window // 2
    oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
    ox = ox.ravel().astype(float)
    oy = oy.ravel().astype(float)
    area = float(ox.size)

    guess = np.zeros((n, 2))
    ok = np.all(np.isfinite(pts), axis=1)
    min_eig = np.zeros(n)
    residual = np.zeros(n)
    for lev in range(nlev - 1, -1, -1):
        scale = 2.0 ** lev
        p = pts / scale
        img0, img1 = P.levels[lev], N.levels[lev]
        gx0, gy0 = P.grads[lev]
        xs = p[:, :1] + ox
        ys = p[:, 1:] + oy
        tmpl = bilinear(img0, xs, ys)
        ix = bilinear(gx0, xs, ys)
        iy = bilinear(gy0, xs, ys)
        gxx = (ix * ix).sum(1)
        gxy = (ix * iy).sum(1)
        gyy = (iy * iy).sum(1)
        det = gxx * gyy - gxy * gxy
        tr = gxx + gyy
        lam_min = 0.5 * (tr - np.sqrt(np.maximum((gxx - gyy) ** 2 + 4 * gxy * gxy, 0.0)))
        solvable = det > 1e-12 * np.maximum(tr * tr, 1e-300)
        d = np.zeros((n, 2))
        active = ok & solvable
        for _ in range(cfg.max_iters):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            q = p[idx] + guess[idx] + d[idx]
            warped = bilinear(img1, q[:, :1] + ox, q[:, 1:] + oy)
            diff = tmpl[idx] - warped
            bx = (diff * ix[idx]).sum(1)
            by = (diff * iy[idx]).sum(1)
            dt = det[idx]
            ex = (gyy[idx] * bx - gxy[idx] * by) / dt
            ey = (gxx[idx] * by - gxy[idx] * bx) / dt
            d[idx, 0] += ex
            d[idx, 1] += ey
            diverged = (np.abs(d[idx]) > cfg.window).any(1) | ~np.isfinite(d[idx]).all(1)
            ok[idx[diverged]] = False
            done = np.hypot(ex, ey) < cfg.eps
            active[idx[done | diverged]] = False
        if lev == 0:
            min_eig = lam_min / area
            q = p + guess + d
            final = bilinear(img1, q[:, :1] + ox, q[:, 1:] + oy)
            residual = ((tmpl - final) ** 2).sum(1)
            guess = guess + d
        else:
            guess = 2.0 * (guess + d)

    curr = pts + guess
    h, w = P.shape
    inside = (curr[:, 0] >= 0) & (curr[:, 0] <= w - 1) & (curr[:, 1] >= 0) & (curr[:, 1] <= h - 1)
    thresh = cfg.min_eig_abs
    if ok.any():
        thresh = max(thresh, cfg.min_eig_rel * float(min_eig[ok].max()))
    tracked = ok & inside & (min_eig >= thresh) & np.isfinite(curr).all(1)
    return curr, tracked, residual


def klt_track(prev, nxt, pts, cfg: KltConfig | None = None) -> list[TrackedPoint]:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    curr, tracked, res = klt_track_arrays(prev, nxt, pts, cfg)
    return [TrackedPoint((float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                         PointStatus.TRACKED if t else PointStatus.LOST, float(r))
            for a, b, t, r in zip(pts, curr, tracked, res)]


# --- inverse compositional NCC alignment -----------------------------------

@dataclass(frozen=True)
class IcConfig:
    max_iters: int = 30
    eps: float = 1e-4
    max_halvings: int = 5


@dataclass(frozen=True)
class IcTemplate:
    """Template samples at ``coords`` (template frame) with intensity gradients.

    ``sd`` holds the raw steepest-descent images ``grad . dW/dp`` for ``dof``;
    they depend only on the template and are rebuilt only by :meth:`with_dof`.
    """

    coords: np.ndarray
    pixels: np.ndarray
    grads: np.ndarray
    dof: DofModel
    sd: np.ndarray = field(repr=False)
    support_mask: np.ndarray = field(repr=False)

    @classmethod
    def from_samples(cls, coords, pixels, grads, dof, mask=None) -> "IcTemplate":
        coords = np.asarray(coords, dtype=float).reshape(-1, 2)
        pixels = np.asarray(pixels, dtype=float).ravel()
        grads = np.asarray(grads, dtype=float).reshape(-1, 2)
        dof = DofModel.parse(dof)
        jac = dof_jacobian(dof, coords[:, 0], coords[:, 1])
        sd = np.einsum("nk,nkp->np", grads, jac)
        if mask is None:
            mask = np.ones(len(pixels), bool)
        return cls(coords, pixels, grads, dof, sd, np.asarray(mask, bool))

    def with_dof(self, dof) -> "IcTemplate":
        return IcTemplate.from_samples(self.coords, self.pixels, self.grads, dof, self.support_mask)

    def with_mask(self, mask) -> "IcTemplate":
        mask = np.asarray(mask, bool)
        if mask.shape != self.support_mask.shape:
            raise ValueError("mask shape does not match template")
        if not mask.any():
            raise ValueError("support mask must be non-empty")
        return replace(self, support_mask=mask)


def make_template(img, warp, width: float, height: float, dof, spacing: float = 1.0) -> IcTemplate:
    """Sample a ``width x height`` rectangle centred on the template origin.

    ``warp`` maps template coordinates to ``img`` pixels. Gradients are central
    differences on the sampled grid, in template units.
    """
    img = as_image(img)
    nx = max(2, int(np.floor(width / spacing)))
    ny = max(2, int(np.floor(height / spacing)))
    u = (np.arange(nx) + 0.5) * spacing - nx * spacing / 2.0
    v = (np.arange(ny) + 0.5) * spacing - ny * spacing / 2.0
    uu, vv = np.meshgrid(u, v)
    coords = np.column_stack([uu.ravel(), vv.ravel()])
    xy = transform_points(warp, coords)
    grid = bilinear(img, xy[:, 0], xy[:, 1]).reshape(ny, nx)
    gx, gy = gradient(grid)
    grads = np.column_stack([gx.ravel(), gy.ravel()]) / spacing
    return IcTemplate.from_samples(coords, grid.ravel(), grads, dof)


def _normalize(v: np.ndarray):
    c = v - v.mean()
    nrm = float(np.sqrt(c @ c))
    return c, nrm


def ncc_at(tmpl: IcTemplate, img, warp, mask=None) -> float:
    """NCC between template and ``img`` sampled through ``warp`` over the mask."""
    m = tmpl.support_mask if mask is None else mask
    t, tn = _normalize(tmpl.pixels[m])
    xy = transform_points(warp, tmpl.coords[m])
    i, inrm = _normalize(bilinear(np.asarray(img, float), xy[:, 0], xy[:, 1]))
    if tn == 0 or inrm == 0:
        return 0.0
    return float(t @ i) / (tn * inrm)


def normalized_steepest_descent(tmpl: IcTemplate):
    """Steepest-descent images of the zero-mean, unit-norm template (masked).

    Returns ``(t_hat, sd_hat)`` where ``sd_hat[:, j]`` is the derivative of
    the normalised template vector with respect to warp parameter ``j``.
    """
    m = tmpl.support_mask
    c, nrm = _normalize(tmpl.pixels[m])
    if nrm <= 1e-12:
        raise ValueError("template has no contrast over the support mask")
    t_hat = c / nrm
    sd = tmpl.sd[m]
    sd = sd - sd.mean(axis=0)
    sd = sd - np.outer(t_hat, t_hat @ sd)
    return t_hat, sd / nrm


def ncc_objective_gradient(tmpl: IcTemplate, img, warp) -> np.ndarray:
    """Gauss-Newton gradient of ``0.5 * |t_hat(dW(dp)) - i_hat(W)|^2`` at ``dp = 0``."""
    t_hat, sdn = normalized_steepest_descent(tmpl)
    xy = transform_points(warp, tmpl.coords[tmpl.support_mask])
    c, nrm = _normalize(bilinear(np.asarray(img, float), xy[:, 0], xy[:, 1]))
    i_hat = c / nrm if nrm > 0 else c
    return sdn.T @ (t_hat - i_hat)


def ic_refine(tmpl: IcTemplate, img, init, cfg: IcConfig | None = None):
    """Inverse-compositional Gauss-Newton maximisation of NCC.

    Returns ``(warp, ncc, iterations)``. A step that lowers NCC is halved up to
    ``max_halvings`` times; if none improves, iteration stops. The result never
    has lower NCC than ``init``.
    """
    cfg = cfg or IcConfig()
    img = np.asarray(img, dtype=float)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    m = tmpl.support_mask
    k = int(tmpl.dof)
    if int(m.sum()) < 2 * k:
        raise ValueError(f"support mask has {int(m.sum())} pixels, need at least {2 * k}")
    t_hat, sdn = normalized_steepest_descent(tmpl)
    hess = sdn.T @ sdn
    try:
        hinv_sdt = np.linalg.solve(hess, sdn.T)
    except np.linalg.LinAlgError:
        hinv_sdt = np.linalg.pinv(hess) @ sdn.T
    coords = tmpl.coords[m]

    def sample_hat(w):
        xy = transform_points(w, coords)
        c, nrm = _normalize(bilinear(img, xy[:, 0], xy[:, 1]))
        if nrm == 0:
            return c, 0.0
        c = c / nrm
        return c, float(t_hat @ c)

    w = np.asarray(init, dtype=float).copy()
    i_hat, ncc = sample_hat(w)
    iters = 0
    for _ in range(cfg.max_iters):
        dp = hinv_sdt @ (i_hat - t_hat)
        step = 1.0
        accepted = None
        for _ in range(cfg.max_halvings + 1):
            cand = compose(w, invert(dof_matrix(tmpl.dof, step * dp)))
            ci, cn = sample_hat(cand)
            if cn >= ncc:
                accepted = (cand, ci, cn)
                break
            step *= 0.5
        if accepted is None:
            break
        w, i_hat, ncc = accepted
        iters += 1
        if np.linalg.norm(step * dp) < cfg.eps:
            break
    return w, ncc, iters
