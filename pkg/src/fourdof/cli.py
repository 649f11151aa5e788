"""Command-line interface: ``fourdof {track,eval,bench,synth}``.

Exit codes: 0 success (a run that loses the target still completes), 1
runtime or I/O error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import glob
import logging
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import cv2
import numpy as np

from . import evaluation as ev
from . import synth
from .config import ConfigError, config_hash, load_config, make_tracker
from .dataset import DatasetError, RunRecord, load_dataset, read_results, write_results
from .geom import SimilarityParams
from .rklt import TrackingLost

log = logging.getLogger("fourdof")

DOF_CHOICES = ("2", "3", "4", "6", "8")


def run_tracker(tracker, frame_at, n_frames: int, init_quad, init_frame: int = 0,
                dataset: str = "", seed: int = 0) -> RunRecord:
    """Initialise on ``init_frame`` and track to the end; lost frames stay lost."""
    tracker.initialize(frame_at(init_frame), init_quad)
    frames, quads, times = [], [], []
    lost = False
    for i in range(init_frame + 1, n_frames):
        img = frame_at(i)
        t0 = time.perf_counter()
        q = None
        if not lost:
            try:
                q = tracker.update(img)
            except TrackingLost as e:
                log.info("frame %d: tracking lost (%s)", i, e)
                lost = True
        times.append((time.perf_counter() - t0) * 1000.0)
        frames.append(i)
        quads.append(q)
    meta = {"seed": seed}
    if hasattr(tracker, "dof"):
        meta["dof"] = int(tracker.dof)
    else:
        meta["dof"] = 4
    return RunRecord(tracker.name, config_hash(tracker), dataset, init_frame, frames, quads, times, meta)


def record_to_run(rec: RunRecord, gt) -> ev.SubsequenceRun:
    if rec.frames and max(rec.frames) >= len(gt):
        raise DatasetError(f"results reference frame {max(rec.frames)} but ground truth has {len(gt)} frames")
    return ev.SubsequenceRun.from_quads(rec.dataset, rec.init_frame, rec.quads,
                                        [gt[i] for i in rec.frames], rec.frames)


def draw_overlay(img: np.ndarray, quad, gt=None) -> np.ndarray:
    bgr = cv2.cvtColor(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8), cv2.COLOR_GRAY2BGR)
    if gt is not None:
        cv2.polylines(bgr, [np.round(np.asarray(gt)).astype(np.int32)], True, (0, 255, 0), 1)
    if quad is not None:
        cv2.polylines(bgr, [np.round(np.asarray(quad)).astype(np.int32)], True, (0, 0, 255), 2)
    return bgr


def _tracker_from_args(args):
    cfg = load_config(args.config)
    return make_tracker(args.tracker, int(args.dof), cfg, args.seed)


def cmd_track(args) -> int:
    tracker = _tracker_from_args(args)
    ds = load_dataset(args.dataset)
    if not 0 <= args.init_frame < len(ds) - 1:
        raise ConfigError(f"--init-frame must be in [0, {len(ds) - 2}]")
    rec = run_tracker(tracker, ds.frame, len(ds), ds.gt[args.init_frame], args.init_frame, ds.name, args.seed)
    write_results(args.out, rec, timing=not args.no_timing)
    if args.overlay:
        od = Path(args.overlay)
        od.mkdir(parents=True, exist_ok=True)
        for f, q in zip(rec.frames, rec.quads):
            cv2.imwrite(str(od / f"frame{f + 1:05d}.png"), draw_overlay(ds.frame(f), q, ds.gt[f]))
    n_lost = sum(q is None for q in rec.quads)
    print(f"tracked {len(rec.frames)} frames ({n_lost} lost) -> {args.out}")
    return 0


def _curve_paths(out: str) -> tuple[Path, Path]:
    p = Path(out)
    return p, p.with_name(p.stem + "_robustness" + (p.suffix or ".csv"))


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    if args.subseq:
        if not args.tracker:
            raise ConfigError("--subseq requires --tracker")
        inits = ev.make_subsequences(len(ds), args.subseq)
        out_dir = Path(args.run_dir) if args.run_dir else Path(args.out).with_suffix("").parent / (Path(args.out).stem + "_runs")
        out_dir.mkdir(parents=True, exist_ok=True)
        frames = ds.frames()

        def one(s):
            tracker = _tracker_from_args(args)
            rec = run_tracker(tracker, frames.__getitem__, len(ds), ds.gt[s], s, ds.name, args.seed)
            path = out_dir / f"init{s:05d}.csv"
            write_results(path, rec, timing=not args.no_timing)
            return path

        with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
            paths = list(pool.map(one, inits))
        print("subsequence inits: " + ",".join(str(s) for s in inits))
    else:
        if not args.results:
            raise ConfigError("either --results or --subseq is required")
        paths = sorted(Path(p) for p in glob.glob(args.results))
        if not paths:
            raise DatasetError(f"no results files match {args.results!r}")
    runs = [record_to_run(read_results(p), ds.gt) for p in paths]
    thr = ev.DEFAULT_AL_THRESHOLDS if args.metric == "al" else ev.DEFAULT_JAC_THRESHOLDS
    succ = ev.success_curve(runs, thr, args.metric, fail_stop=args.fail_stop)
    rob = ev.robustness_curve(runs, thr, args.metric)
    n_frames = sum(len(r.frames) for r in runs)
    n_lost = sum(f.lost for r in runs for f in r.frames)
    crit = "e_al<=tau" if args.metric == "al" else "e_jac<=tau (overlap>=1-tau)"
    meta = {"metric": "e_" + args.metric, "criterion": crit, "runs": len(runs), "frames": n_frames,
            "lost": n_lost, "fail_stop": int(args.fail_stop)}
    sp, rp = _curve_paths(args.out)
    ev.write_curve_csv(sp, thr, succ, {**meta, "curve": "success", "auc": f"{ev.curve_auc(thr, succ):.6f}"})
    ev.write_curve_csv(rp, thr, rob, {**meta, "curve": "robustness", "auc": f"{ev.curve_auc(thr, rob):.6f}"})
    mean_al = ev.mean_alignment_error(runs)
    print(f"runs={len(runs)} frames={n_frames} lost={n_lost} mean_e_al={mean_al:.6f} "
          f"success_auc={ev.curve_auc(thr, succ):.6f} robustness_auc={ev.curve_auc(thr, rob):.6f}")
    return 0


def synthetic_benchmark_sequence(width=640, height=480, target=100, n=60, seed=0) -> synth.SyntheticSequence:
    """Random-walk similarity motion of a ``target``-sized texture on a ``width x height`` frame."""
    tex = synth.procedural_texture(target, target, seed=seed + 1, checker=0, noise_scale=3)
    bg = synth.procedural_texture(height, width, seed=seed + 2, checker=0, noise_scale=6) * 0.6 + 0.2
    margin = target
    start = SimilarityParams(width / 2.0, height / 2.0, 1.0, 0.0)
    traj = synth.random_trajectory(n, seed, (2.0, 0.01, 1.0), start,
                                   bounds=(margin, margin, width - margin, height - margin))
    return synth.render(synth.SynthSpec(tex, bg, traj, seed=seed))


def bench(tracker, frames, init_quad) -> dict:
    """Per-frame timing of ``tracker`` over in-memory ``frames``."""
    tracker.initialize(frames[0], init_quad)
    times, quads = [], []
    for img in frames[1:]:
        t0 = time.perf_counter()
        try:
            quads.append(tracker.update(img))
        except TrackingLost:
            quads.append(None)
            times.append((time.perf_counter() - t0) * 1000.0)
            break
        times.append((time.perf_counter() - t0) * 1000.0)
    mean_ms = statistics.fmean(times) if times else float("nan")
    return {"frames": len(times), "mean_ms": mean_ms, "median_ms": statistics.median(times) if times else float("nan"),
            "fps": 1000.0 / mean_ms if times else float("nan"), "quads": quads}


def cmd_bench(args) -> int:
    tracker = _tracker_from_args(args)
    if args.dataset:
        ds = load_dataset(args.dataset)
        frames, init_quad = ds.frames(), ds.gt[0]
    else:
        w, h = (int(v) for v in args.synthetic.lower().split("x"))
        seq = synthetic_benchmark_sequence(w, h, args.target, args.frames, args.seed)
        frames, init_quad = seq.frames, seq.gt[0]
    res = bench(tracker, frames, init_quad)
    print(f"tracker={args.tracker} frames={res['frames']} mean_ms={res['mean_ms']:.3f} "
          f"median_ms={res['median_ms']:.3f} fps={res['fps']:.2f}")
    return 0


def cmd_synth(args) -> int:
    tex = synth.procedural_texture(args.target, args.target, seed=args.seed + 1, checker=args.checker,
                                   noise_scale=3)
    bg = synth.procedural_texture(args.height, args.width, seed=args.seed + 2, checker=0, noise_scale=6) * 0.6 + 0.2
    start = SimilarityParams(args.width / 2.0, args.height / 2.0, 1.0, 0.0)
    n = args.frames
    if args.motion == "random":
        m = args.target
        traj = synth.random_trajectory(n, args.seed, (args.max_shift, args.max_scale, args.max_rot), start,
                                       bounds=(m, m, args.width - m, args.height - m))
    elif args.motion == "static":
        traj = [start] * n
    elif args.motion == "rotation":
        traj = synth.interpolate_trajectory(start, SimilarityParams(start.tx, start.ty, 1.0, args.max_rot * (n - 1)), n)
    elif args.motion == "scale":
        traj = synth.interpolate_trajectory(start, SimilarityParams(start.tx, start.ty, 1.5, 0.0), n)
    else:
        traj = synth.interpolate_trajectory(start, SimilarityParams(start.tx + args.max_shift * (n - 1), start.ty, 1.0, 0.0), n)
    seq = synth.render(synth.SynthSpec(tex, bg, traj, noise_sigma=args.noise, blur_radius=args.blur, seed=args.seed))
    synth.export(seq, args.out)
    print(f"wrote {len(seq)} frames to {args.out}")
    return 0


def _add_tracker_args(p, required=True):
    p.add_argument("--tracker", choices=("rsst", "rklt"), required=required)
    p.add_argument("--dof", choices=DOF_CHOICES, default="4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="flat 'section.key = value' file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fourdof", description="4-DoF visual trackers and evaluation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run a tracker over a dataset")
    _add_tracker_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--init-frame", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None)
    p.add_argument("--no-timing", action="store_true", help="write time_ms as 0 for byte-reproducible files")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="success/robustness curves from results")
    _add_tracker_args(p, required=False)
    p.add_argument("--results", default=None, help="glob of results CSVs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--subseq", type=int, default=None, help="run the tracker from K evenly spaced init frames")
    p.add_argument("--metric", choices=("al", "jac"), default="al")
    p.add_argument("--fail-stop", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-frame throughput")
    _add_tracker_args(p)
    p.add_argument("--dataset", default=None)
    p.add_argument("--synthetic", default="640x480", help="WxH of a generated sequence")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--target", type=int, default=100)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--target", type=int, default=100)
    p.add_argument("--motion", choices=("random", "static", "rotation", "scale", "translation"), default="random")
    p.add_argument("--max-shift", type=float, default=2.0)
    p.add_argument("--max-scale", type=float, default=0.01)
    p.add_argument("--max-rot", type=float, default=1.0)
    p.add_argument("--checker", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--blur", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"fourdof: configuration error: {e}", file=sys.stderr)
        return 2
    except (DatasetError, OSError, ValueError) as e:
        print(f"fourdof: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
