"""Planar motion models, quads and closed-form similarity fitting.

Warps are 3x3 homogeneous matrices acting on column vectors ``(x, y, 1)``.
Quads are ``(4, 2)`` float arrays ordered top-left, top-right, bottom-right,
bottom-left.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

QUAD_ORDER = ("top-left", "top-right", "bottom-right", "bottom-left")


class DofModel(enum.IntEnum):
    """Planar motion model, valued by its number of parameters."""

    TRANSLATION2 = 2
    TRANS_SCALE3 = 3
    SIMILARITY4 = 4
    AFFINE6 = 6
    HOMOGRAPHY8 = 8

    @classmethod
    def parse(cls, value) -> "DofModel":
        if isinstance(value, cls):
            return value
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise ValueError(f"unsupported DoF {value!r}; expected one of 2, 3, 4, 6, 8") from None


@dataclass(frozen=True)
class SimilarityParams:
    """4-DoF pose: translation in pixels, isotropic scale, rotation in degrees.

    Rotation is kept unwrapped so that accumulated in-plane rotation survives
    full turns.
    """

    tx: float = 0.0
    ty: float = 0.0
    scale: float = 1.0
    rotation: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not all(map(math.isfinite, (self.tx, self.ty, self.scale, self.rotation))):
            raise ValueError("similarity parameters must be finite")


def params_to_matrix(p: SimilarityParams) -> np.ndarray:
    th = math.radians(p.rotation)
    c, s = p.scale * math.cos(th), p.scale * math.sin(th)
    return np.array([[c, -s, p.tx], [s, c, p.ty], [0.0, 0.0, 1.0]])


def matrix_to_params(w: np.ndarray) -> SimilarityParams:
    """Read a similarity back from its matrix (rotation in (-180, 180])."""
    w = np.asarray(w, dtype=float)
    w = w / w[2, 2]
    a, b = w[0, 0], w[1, 0]
    return SimilarityParams(float(w[0, 2]), float(w[1, 2]), math.hypot(a, b),
                            math.degrees(math.atan2(b, a)))


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``compose(a, b)`` applies ``b`` first, then ``a``."""
    return np.asarray(a, dtype=float) @ np.asarray(b, dtype=float)


def invert(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    det = np.linalg.det(a)
    scale = np.abs(a).max()
    if not np.isfinite(det) or scale == 0 or abs(det) <= 1e-12 * scale ** 3:
        raise np.linalg.LinAlgError("warp matrix is singular")
    inv = np.linalg.inv(a)
    if a[2, 0] == 0 and a[2, 1] == 0:
        # keep affine structure exact
        inv[2] = (0.0, 0.0, 1.0 / a[2, 2])
    return inv


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])


def transform_points(w: np.ndarray, pts) -> np.ndarray:
    """Map ``(n, 2)`` points through ``w`` with homogeneous division."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    w = np.asarray(w, dtype=float)
    x = pts @ w[:2, :2].T + w[:2, 2]
    z = pts @ w[2, :2] + w[2, 2]
    if np.any(np.abs(z) < 1e-12):
        raise ValueError("point maps to infinity under warp")
    return x / z[:, None]


def as_quad(q) -> np.ndarray:
    q = np.array(q, dtype=float).reshape(4, 2)
    if not np.all(np.isfinite(q)):
        raise ValueError("quad corners must be finite")
    return q


def apply_warp(w: np.ndarray, q) -> np.ndarray:
    return transform_points(w, as_quad(q))


def quad_area(q) -> float:
    """Signed shoelace area; positive for the documented corner order in image axes."""
    q = np.asarray(q, dtype=float)
    x, y = q[:, 0], q[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def quad_centroid(q) -> np.ndarray:
    """Area centroid of a simple polygon (falls back to vertex mean if degenerate)."""
    q = np.asarray(q, dtype=float)
    x, y = q[:, 0], q[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    if abs(a) < 1e-12:
        return q.mean(axis=0)
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)


def is_valid_quad(q) -> bool:
    """Convex, non-degenerate, consistently oriented."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4, 2) or not np.all(np.isfinite(q)):
        return False
    e = np.roll(q, -1, axis=0) - q
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross > 1e-12) or np.all(cross < -1e-12))


def rect_quad(cx: float, cy: float, w: float, h: float) -> np.ndarray:
    """Axis-aligned rectangle centred on ``(cx, cy)``."""
    hw, hh = w / 2.0, h / 2.0
    return np.array([[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]])


def quad_pose(q) -> tuple[np.ndarray, tuple[float, float], float]:
    """Centre, (width, height) and in-plane angle (degrees) of a roughly rectangular quad."""
    q = as_quad(q)
    top = q[1] - q[0]
    bottom = q[2] - q[3]
    left = q[3] - q[0]
    right = q[2] - q[1]
    w = 0.5 * (np.hypot(*top) + np.hypot(*bottom))
    h = 0.5 * (np.hypot(*left) + np.hypot(*right))
    d = top + bottom
    angle = math.degrees(math.atan2(d[1], d[0]))
    return quad_centroid(q), (float(w), float(h)), angle


def fit_similarity(src, dst) -> SimilarityParams:
    """Least-squares similarity taking ``src`` onto ``dst`` (Umeyama, no reflection)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 2:
        raise ValueError("need at least 2 correspondences")
    return matrix_to_params(fit_similarity_matrix(src, dst))


def fit_similarity_matrix(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ms, md = src.mean(axis=0), dst.mean(axis=0)
    s0, d0 = src - ms, dst - md
    var = float((s0 ** 2).sum())
    if var < 1e-18 * max(1.0, float(np.abs(src).max()) ** 2):
        raise ValueError("degenerate correspondences: source points coincide")
    # optimal scaled rotation [[a, -b], [b, a]] in closed form
    a = float((s0 * d0).sum()) / var
    b = float((s0[:, 0] * d0[:, 1] - s0[:, 1] * d0[:, 0]).sum()) / var
    t = md - np.array([a * ms[0] - b * ms[1], b * ms[0] + a * ms[1]])
    return np.array([[a, -b, t[0]], [b, a, t[1]], [0.0, 0.0, 1.0]])


# --- per-DoF parameterisations (about the template origin) -----------------

def dof_matrix(dof: DofModel, p) -> np.ndarray:
    """Warp for parameter vector ``p``; ``p = 0`` is the identity for every model.

    Translation2 ``(tx, ty)``; TransScale3 ``(tx, ty, log s)``;
    Similarity4 ``(tx, ty, log s, theta_rad)``; Affine6 additive on the
    linear part; Homography8 ``I + [[p0 p1 p2] [p3 p4 p5] [p6 p7 0]]``.
    """
    dof = DofModel(dof)
    p = np.asarray(p, dtype=float)
    if p.shape != (int(dof),):
        raise ValueError(f"{dof.name} expects {int(dof)} parameters, got shape {p.shape}")
    if dof == DofModel.TRANSLATION2:
        return translation(p[0], p[1])
    if dof == DofModel.TRANS_SCALE3:
        s = math.exp(p[2])
        return np.array([[s, 0.0, p[0]], [0.0, s, p[1]], [0.0, 0.0, 1.0]])
    if dof == DofModel.SIMILARITY4:
        s = math.exp(p[2])
        c, sn = s * math.cos(p[3]), s * math.sin(p[3])
        return np.array([[c, -sn, p[0]], [sn, c, p[1]], [0.0, 0.0, 1.0]])
    if dof == DofModel.AFFINE6:
        return np.array([[1 + p[0], p[2], p[4]], [p[1], 1 + p[3], p[5]], [0.0, 0.0, 1.0]])
    h = np.eye(3)
    h.flat[:8] += p
    return h


def dof_jacobian(dof: DofModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d(warped point)/dp at p = 0, shape ``(n, 2, dof)``."""
    dof = DofModel(dof)
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    o, z = np.ones_like(x), np.zeros_like(x)
    if dof == DofModel.TRANSLATION2:
        rows = ([o, z], [z, o])
    elif dof == DofModel.TRANS_SCALE3:
        rows = ([o, z, x], [z, o, y])
    elif dof == DofModel.SIMILARITY4:
        rows = ([o, z, x, -y], [z, o, y, x])
    elif dof == DofModel.AFFINE6:
        rows = ([x, z, y, z, o, z], [z, x, z, y, z, o])
    else:
        rows = ([x, y, o, z, z, z, -x * x, -x * y], [z, z, z, x, y, o, -x * y, -y * y])
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=1)


def project_to_dof(w: np.ndarray, dof: DofModel) -> np.ndarray:
    """Closest member of the ``dof`` group, keeping the image of the origin fixed.

    Translation2 keeps the translation only, TransScale3 adds the similarity's
    scale, Similarity4 projects the linear part onto scaled rotations. Affine6
    and Homography8 embed ``w`` (perspective row dropped for Affine6).
    """
    dof = DofModel(dof)
    w = np.asarray(w, dtype=float)
    w = w / w[2, 2]
    t = w[:2, 2]
    lin = w[:2, :2]
    a = 0.5 * (lin[0, 0] + lin[1, 1])
    b = 0.5 * (lin[1, 0] - lin[0, 1])
    if dof == DofModel.TRANSLATION2:
        return translation(t[0], t[1])
    if dof == DofModel.TRANS_SCALE3:
        s = math.hypot(a, b)
        return np.array([[s, 0.0, t[0]], [0.0, s, t[1]], [0.0, 0.0, 1.0]])
    if dof == DofModel.SIMILARITY4:
        return np.array([[a, -b, t[0]], [b, a, t[1]], [0.0, 0.0, 1.0]])
    if dof == DofModel.AFFINE6:
        out = w.copy()
        out[2] = (0.0, 0.0, 1.0)
        return out
    return w.copy()


def in_dof_group(w: np.ndarray, dof: DofModel, tol: float = 1e-9) -> bool:
    """True when ``w`` already has the structure of the ``dof`` group."""
    w = np.asarray(w, dtype=float)
    if abs(w[2, 2]) < 1e-15:
        return False
    return bool(np.allclose(project_to_dof(w, dof), w / w[2, 2], atol=tol, rtol=0))
