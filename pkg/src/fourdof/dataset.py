"""Dataset directories and result files.

A dataset directory holds numbered frames ``frame%05d.(jpg|png)`` and a
``gt.txt`` with one line per frame of eight whitespace-separated numbers
``x1 y1 x2 y2 x3 y3 x4 y4`` (top-left, top-right, bottom-right,
bottom-left). Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

FRAME_RE = re.compile(r"^frame(\d+)\.(jpg|jpeg|png)$", re.IGNORECASE)
LOST = "LOST"


class DatasetError(Exception):
    pass


class MissingFilesError(DatasetError):
    pass


class GtParseError(DatasetError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class CountMismatchError(DatasetError):
    pass


@dataclass
class Dataset:
    name: str
    frame_paths: list[Path]
    gt: list[np.ndarray]
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.frame_paths)

    def frame(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self._cache[i] = read_gray(self.frame_paths[i])
        return self._cache[i]

    def frames(self) -> list[np.ndarray]:
        return [self.frame(i) for i in range(len(self))]


def read_gray(path) -> np.ndarray:
    """Decode an image to float grayscale in [0, 1] (ITU-R 601 luma for colour)."""
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise MissingFilesError(f"cannot decode image {path}")
    scale = float(np.iinfo(data.dtype).max) if np.issubdtype(data.dtype, np.integer) else 1.0
    img = data.astype(float) / scale
    if img.ndim == 3:
        if img.shape[2] == 4:
            img = img[..., :3]
        b, g, r = img[..., 0], img[..., 1], img[..., 2]
        img = 0.299 * r + 0.587 * g + 0.114 * b
    return img


def format_quad(q) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(q, dtype=float).ravel())


def write_gt(path, quads) -> Path:
    path = Path(path)
    lines = ["# x1 y1 x2 y2 x3 y3 x4 y4 (top-left, top-right, bottom-right, bottom-left)"]
    lines += [format_quad(q) for q in quads]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_gt(path) -> list[np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise MissingFilesError(f"missing ground-truth file {path}")
    quads = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.replace(",", " ").split()
        if len(parts) != 8:
            raise GtParseError(path, lineno, f"expected 8 numbers, got {len(parts)}")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise GtParseError(path, lineno, f"unparseable number in {s!r}") from None
        quads.append(np.array(vals).reshape(4, 2))
    return quads


def list_frames(directory) -> list[Path]:
    d = Path(directory)
    found = []
    for p in d.iterdir():
        m = FRAME_RE.match(p.name)
        if m:
            found.append((int(m.group(1)), p))
    found.sort()
    return [p for _, p in found]


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    if not d.is_dir():
        raise MissingFilesError(f"dataset directory {d} does not exist")
    frames = list_frames(d)
    if not frames:
        raise MissingFilesError(f"no frame%05d.jpg|png files in {d}")
    gt = read_gt(d / "gt.txt")
    if len(gt) != len(frames):
        raise CountMismatchError(f"{d}: {len(frames)} frames but {len(gt)} ground-truth lines")
    return Dataset(d.name, frames, gt)


# --- tracker result files ------------------------------------------------

RESULT_HEADER = "frame,x1,y1,x2,y2,x3,y3,x4,y4,time_ms"


@dataclass
class RunRecord:
    tracker: str
    config_hash: str
    dataset: str
    init_frame: int
    frames: list[int]
    quads: list  # (4, 2) arrays or None for lost frames
    times_ms: list[float]
    meta: dict = field(default_factory=dict)


def write_results(path, rec: RunRecord, timing: bool = True) -> Path:
    path = Path(path)
    meta = {"tracker": rec.tracker, "config": rec.config_hash, "dataset": rec.dataset,
            "init_frame": rec.init_frame, **rec.meta}
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items()), RESULT_HEADER]
    for f, q, t in zip(rec.frames, rec.quads, rec.times_ms):
        tm = f"{t:.3f}" if timing else "0"
        if q is None:
            lines.append(f"{f},{LOST}" + "," * 7 + f",{tm}")
        else:
            lines.append(f"{f}," + ",".join(repr(float(v)) for v in np.asarray(q).ravel()) + f",{tm}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_results(path) -> RunRecord:
    path = Path(path)
    if not path.is_file():
        raise MissingFilesError(f"missing results file {path}")
    meta: dict = {}
    frames, quads, times = [], [], []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            for tok in s[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        if s.startswith("frame,"):
            continue
        parts = s.split(",")
        if len(parts) != 10:
            raise GtParseError(path, lineno, f"expected 10 fields, got {len(parts)}")
        try:
            frames.append(int(parts[0]))
            times.append(float(parts[9]))
            if parts[1] == LOST:
                quads.append(None)
            else:
                quads.append(np.array([float(v) for v in parts[1:9]]).reshape(4, 2))
        except ValueError:
            raise GtParseError(path, lineno, f"unparseable row {s!r}") from None
    tracker = meta.pop("tracker", "?")
    cfg = meta.pop("config", "")
    ds = meta.pop("dataset", "")
    init = int(meta.pop("init_frame", 0))
    return RunRecord(tracker, cfg, ds, init, frames, quads, times, meta)
