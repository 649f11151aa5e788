"""Tracking metrics, success/robustness curves and the subsequence protocol."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geom import quad_area

DEFAULT_AL_THRESHOLDS = np.arange(0.0, 20.0 + 1e-9, 0.5)
DEFAULT_JAC_THRESHOLDS = np.arange(0.0, 1.0 + 1e-9, 0.05)


def alignment_error(t, g) -> float:
    """Root mean of squared corner distances (pixels)."""
    d = np.asarray(t, dtype=float).reshape(4, 2) - np.asarray(g, dtype=float).reshape(4, 2)
    return float(np.sqrt((d ** 2).sum() / 4.0))


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if quad_area(poly) >= 0 else poly[::-1]


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by convex ``clip`` (same orientation)."""
    out = [tuple(p) for p in subject]
    m = len(clip)
    for k in range(m):
        if not out:
            break
        a, b = clip[k], clip[(k + 1) % m]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def side(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

        inp, out = out, []
        for i in range(len(inp)):
            p, q = inp[i], inp[(i + 1) % len(inp)]
            sp, sq = side(p), side(q)
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return np.array(out, dtype=float).reshape(-1, 2)


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    return abs(quad_area(poly))


def jaccard_error(t, g) -> float:
    """``1 - IoU`` of two convex quads by polygon clipping; 1 for zero-area input."""
    t = _ccw(np.asarray(t, dtype=float).reshape(4, 2))
    g = _ccw(np.asarray(g, dtype=float).reshape(4, 2))
    at, ag = polygon_area(t), polygon_area(g)
    if at <= 0 or ag <= 0:
        return 1.0
    inter = polygon_area(clip_convex(t, g))
    union = at + ag - inter
    return float(min(1.0, max(0.0, 1.0 - inter / union)))


def jaccard_error_aabb(t, g) -> float:
    """Axis-aligned fast path; only valid when both quads are axis-aligned rectangles."""
    t = np.asarray(t, dtype=float).reshape(4, 2)
    g = np.asarray(g, dtype=float).reshape(4, 2)
    tx0, ty0 = t.min(0)
    tx1, ty1 = t.max(0)
    gx0, gy0 = g.min(0)
    gx1, gy1 = g.max(0)
    at = (tx1 - tx0) * (ty1 - ty0)
    ag = (gx1 - gx0) * (gy1 - gy0)
    if at <= 0 or ag <= 0:
        return 1.0
    iw = max(0.0, min(tx1, gx1) - max(tx0, gx0))
    ih = max(0.0, min(ty1, gy1) - max(ty0, gy0))
    inter = iw * ih
    return float(1.0 - inter / (at + ag - inter))


@dataclass
class FrameResult:
    frame_index: int
    tracker_quad: np.ndarray | None  # None when lost
    gt_quad: np.ndarray
    e_al: float = field(init=False)
    e_jac: float = field(init=False)

    def __post_init__(self):
        if self.tracker_quad is None:
            self.e_al = math.inf
            self.e_jac = 1.0
        else:
            self.e_al = alignment_error(self.tracker_quad, self.gt_quad)
            self.e_jac = jaccard_error(self.tracker_quad, self.gt_quad)

    @property
    def lost(self) -> bool:
        return self.tracker_quad is None

    def error(self, metric: str) -> float:
        return self.e_al if metric == "al" else self.e_jac


@dataclass
class SubsequenceRun:
    sequence: str
    init_frame: int
    frames: list[FrameResult]

    @classmethod
    def from_quads(cls, sequence, init_frame, quads, gts, frame_indices=None) -> "SubsequenceRun":
        if len(quads) != len(gts):
            raise ValueError(f"{len(quads)} tracker outputs but {len(gts)} ground-truth quads")
        if frame_indices is None:
            frame_indices = range(init_frame + 1, init_frame + 1 + len(quads))
        return cls(sequence, init_frame, [FrameResult(i, q, g) for i, q, g in zip(frame_indices, quads, gts)])


def _check(runs, thresholds):
    thr = np.asarray(list(thresholds), dtype=float)
    if thr.size == 0:
        raise ValueError("threshold list is empty")
    if not runs:
        raise ValueError("no runs to evaluate")
    return thr


def success_curve(runs, thresholds, metric: str = "al", fail_stop: bool = False) -> np.ndarray:
    """Fraction of all frames with error <= tau; lost frames fail at every tau.

    With ``fail_stop`` every frame after a run's first exceedance of tau also
    counts as a failure.
    """
    thr = _check(runs, thresholds)
    total = sum(len(r.frames) for r in runs)
    if total == 0:
        raise ValueError("runs contain no frames")
    out = np.zeros(len(thr))
    for r in runs:
        err = np.array([f.error(metric) for f in r.frames])
        lost = np.array([f.lost for f in r.frames])
        for k, tau in enumerate(thr):
            ok = (err <= tau) & ~lost
            if fail_stop and not ok.all():
                ok[int(np.argmin(ok)):] = False
            out[k] += ok.sum()
    return out / total


def robustness_curve(runs, thresholds, metric: str = "al") -> np.ndarray:
    """Fraction of runs with no frame whose error exceeds tau (lost frames always exceed)."""
    thr = _check(runs, thresholds)
    out = np.zeros(len(thr))
    for r in runs:
        err = np.array([math.inf if f.lost else f.error(metric) for f in r.frames])
        worst = err.max() if err.size else 0.0
        out += worst <= thr
    return out / len(runs)


def curve_auc(thresholds, values) -> float:
    """Trapezoidal area under the curve, normalised by the threshold span."""
    t = np.asarray(thresholds, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2:
        return float(v[0]) if len(v) else 0.0
    area = float(np.sum((t[1:] - t[:-1]) * (v[1:] + v[:-1]) / 2.0))
    return area / float(t[-1] - t[0])


def mean_alignment_error(runs) -> float:
    """Mean E_al over non-lost frames (nan when every frame is lost)."""
    vals = [f.e_al for r in runs for f in r.frames if not f.lost]
    return float(np.mean(vals)) if vals else math.nan


def make_subsequences(length: int, k: int = 10) -> list[int]:
    """Initialisation frames ``floor(i * L / k)`` for ``i < k``; ``[0]`` when L <= k."""
    if length <= k:
        return [0]
    return [(i * length) // k for i in range(k)]


def effective_frames(length: int, k: int = 10) -> int:
    """Frames evaluated over all subsequences: ``sum(L - init - 1)``."""
    return sum(length - s - 1 for s in make_subsequences(length, k))


def write_curve_csv(path, thresholds, values, meta: dict) -> None:
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items()), "threshold,value"]
    lines += [f"{t:.6g},{v:.10g}" for t, v in zip(thresholds, values)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
