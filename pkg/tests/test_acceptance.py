"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line."""
import subprocess
import sys
import time
import warnings

import numpy as np

from fourdof import cli, dcf, rklt, rsst
from fourdof.config import make_tracker
from fourdof.evaluation import effective_frames, jaccard_error, alignment_error
from fourdof.geom import (DofModel, SimilarityParams, apply_warp, compose, dof_matrix, fit_similarity,
                          params_to_matrix, rect_quad, translation, transform_points)
from fourdof.imgproc import gaussian_label_1d, gaussian_label_2d
from fourdof.lk import IcTemplate, ic_refine, make_template, ncc_objective_gradient
from fourdof.rklt import RkltConfig, ransac_similarity
from fourdof.synth import smooth_texture

from . import scenes
from .oracles import monte_carlo_iou, spatial_ridge_response, unrolled_numerator
from .test_lk import _analytic, _analytic_grad


def test_c01_dcf_oracle_equivalence(report):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(0)
    for shape in [(8, 8), (1, 21)]:
        label = gaussian_label_2d(shape[1], shape[0], (shape[1] / 8, max(shape[0] / 8, 0.5)))
        for d in (1, 2, 3):
            for lam in (0.0, 0.01, 1.0):
                x = rng.uniform(-1, 1, (d, *shape))
                z = rng.uniform(-1, 1, (d, *shape))
                got = dcf.respond(dcf.train_init(x, label, lam), z)
                worst = max(worst, float(np.abs(got - spatial_ridge_response(x, label, z, lam)).max()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 1.0
    report("C1 DCF oracle equivalence", ok, f"max|diff|={worst:.2e} (<1e-9), runtime={dt:.3f}s (<1s)")
    assert ok


def test_c02_update_algebra(report):
    rng = np.random.default_rng(1)
    f = gaussian_label_2d(8, 8, 1.0)
    xs = [rng.normal(size=(3, 8, 8)) for _ in range(10)]
    eta = 0.3
    m = dcf.train_init(xs[0], f)
    for x in xs[1:]:
        m = dcf.update(m, x, eta)
    diff = float(np.abs(m.numerators - unrolled_numerator(f, xs, eta)).max())
    dsum = sum(np.sum(np.abs(np.fft.fft2(x)) ** 2, axis=0) * w for x, w in
               zip(xs, [(1 - eta) ** 9] + [eta * (1 - eta) ** (9 - i) for i in range(1, 10)]))
    ddiff = float(np.abs(m.denominator - dsum).max())
    u = dcf.update(dcf.train_init(xs[0], f), xs[1], 1.0)
    t = dcf.train_init(xs[1], f)
    exact = np.array_equal(u.numerators, t.numerators) and np.array_equal(u.denominator, t.denominator)
    ok = diff < 1e-10 and ddiff < 1e-10 * max(1.0, float(dsum.max())) and exact
    report("C2 update-rule algebra", ok, f"numerator diff={diff:.2e}, denominator diff={ddiff:.2e}, "
                                         f"eta=1 equals train_init exactly: {exact}")
    assert ok


def _rsst_final(kind):
    seq, traj = scenes.rsst_sequence(kind)
    st = rsst.init(seq.frames[0], seq.gt[0])
    for f in seq.frames[1:]:
        st, _ = rsst.track_frame(st, f)
    return st, traj[-1]


def test_c03_rsst_recovery(report):
    t0 = time.perf_counter()
    st_r, p_r = _rsst_final("rotation")
    st_s, p_s = _rsst_final("scale")
    st_t, p_t = _rsst_final("translation")
    dt = time.perf_counter() - t0
    e_rot = abs(st_r.rotation - p_r.rotation)
    e_scale = abs(st_s.scale / p_s.scale - 1)
    e_trans = float(np.hypot(st_t.position[0] - p_t.tx, st_t.position[1] - p_t.ty))
    ok = e_rot <= 2.0 and e_scale <= 1.02 ** 2 - 1 and e_trans < 1.0 and dt < 30
    report("C3 RSST synthetic recovery", ok, f"rotation err={e_rot:.2f} deg (<=2), scale err={e_scale:.4f} "
           f"(<=0.0404), translation err={e_trans:.3f} px (<1), runtime={dt:.1f}s (<30s)")
    assert ok


def test_c04_rklt_recovery(report):
    seq = scenes.rklt_combined()
    clean = scenes.mean_error(rklt.dof_variant_run(seq.frames, seq.gt[0], 4), seq.gt[1:])
    occ = scenes.rklt_combined(occluded=True)
    frac = scenes.occluder_fraction(occ)
    lost = False
    st = rklt.init(occ.frames[0], occ.gt[0])
    out = []
    try:
        for f in occ.frames[1:]:
            st, q, _ = rklt.track_frame(st, f)
            out.append(q)
    except rklt.TrackingLost:
        lost = True
    occ_err = scenes.mean_error(out, occ.gt[1:]) if not lost else float("inf")
    ok = clean < 1.0 and frac >= 0.3 and not lost and occ_err < 2.0
    report("C4 RKLT synthetic recovery", ok, f"mean E_al={clean:.3f} px (<1); occluded ({frac:.0%} of target, "
           f"10 frames): lost={lost}, mean E_al={occ_err:.3f} px (<2)")
    assert ok


def test_c05_ransac_robustness(report):
    truth = SimilarityParams(2, -1, 1.5, 30)
    rng = np.random.default_rng(0)
    src = rng.uniform(-50, 50, (20, 2))
    dst = transform_points(params_to_matrix(truth), src)
    noisy = dst.copy()
    bad = rng.choice(20, 8, replace=False)
    for i in bad:
        while True:
            p = rng.uniform(-150, 150, 2)
            if np.linalg.norm(p - dst[i]) > 10:
                noisy[i] = p
                break
    p, mask = ransac_similarity(src, noisy, RkltConfig(seed=0))
    err = max(abs(p.tx - 2), abs(p.ty + 1), abs(p.scale - 1.5), abs(p.rotation - 30))
    clean_mask = np.ones(20, bool)
    clean_mask[bad] = False
    mask_ok = bool(np.array_equal(mask, clean_mask))
    jitter = dst + rng.normal(0, 0.3, dst.shape)
    q, _ = ransac_similarity(src, jitter)
    r = fit_similarity(src, jitter)
    direct = max(abs(q.tx - r.tx), abs(q.ty - r.ty), abs(q.scale - r.scale), abs(q.rotation - r.rotation))
    ok = err < 1e-6 and mask_ok and direct < 1e-9
    report("C5 RANSAC robustness", ok, f"40% outliers: param err={err:.1e} (<1e-6), exact inlier mask={mask_ok}; "
           f"0% outliers vs direct fit={direct:.1e} (<1e-9)")
    assert ok


def test_c06_ic_gradient_and_invariance(report):
    g = np.linspace(-12, 12, 25)
    xx, yy = np.meshgrid(g, g)
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    yi, xi = np.mgrid[0:80, 0:80].astype(float)
    img = 0.02 * xi - 0.013 * yi + 3e-4 * xi * yi
    pose = compose(translation(41.0, 37.0), dof_matrix(DofModel.SIMILARITY4, [0, 0, 0.1, 0.3]))
    xy = transform_points(pose, coords)
    iv = 0.02 * xy[:, 0] - 0.013 * xy[:, 1] + 3e-4 * xy[:, 0] * xy[:, 1]
    i_hat = (iv - iv.mean()) / np.linalg.norm(iv - iv.mean())
    worst = 0.0
    for dof in DofModel:
        tmpl = IcTemplate.from_samples(coords, _analytic(*coords.T), _analytic_grad(*coords.T), dof)

        def phi(p):
            v = _analytic(*transform_points(dof_matrix(dof, p), coords).T)
            v = (v - v.mean()) / np.linalg.norm(v - v.mean())
            return 0.5 * np.sum((v - i_hat) ** 2)

        h = 1e-6
        fd = np.array([(phi(h * e) - phi(-h * e)) / (2 * h) for e in np.eye(int(dof))])
        an = ncc_objective_gradient(tmpl, img, pose)
        worst = max(worst, float(np.max(np.abs(an - fd) / np.maximum(np.abs(fd), 1e-3 * np.abs(fd).max()))))
    scene = smooth_texture(240, 240, seed=5, sigma=3)
    w0 = translation(120.0, 118.0)
    t = make_template(scene, w0, 60, 60, DofModel.SIMILARITY4)
    init = compose(w0, dof_matrix(DofModel.SIMILARITY4, [1.5, -1.0, 0.03, 0.04]))
    w1, _, _ = ic_refine(t, scene, init)
    w2, _, _ = ic_refine(t, 1.7 * scene + 0.3, init)
    inv = float(np.abs(w1 - w2).max())
    ok = worst < 1e-3 and inv < 1e-10
    report("C6 IC gradient check", ok, f"max rel gradient err over 5 DoF models={worst:.1e} (<1e-3); "
           f"warp diff under a*I+b={inv:.1e} (<1e-10)")
    assert ok


def test_c07_dof_ordering(report):
    seq = scenes.rklt_combined()
    e = {d: scenes.mean_error(rklt.dof_variant_run(seq.frames, seq.gt[0], d), seq.gt[1:]) for d in (2, 3, 4)}
    low = scenes.rklt_lowtex(0)
    e4 = scenes.mean_error(rklt.dof_variant_run(low.frames, low.gt[0], 4), low.gt[1:])
    e8 = scenes.mean_error(rklt.dof_variant_run(low.frames, low.gt[0], 8), low.gt[1:])
    ok = e[4] < e[2] and e[4] < e[3] and e4 <= e8
    report("C7 DoF ordering", ok, f"rotation+scale: 2-DoF={e[2]:.3f}, 3-DoF={e[3]:.3f}, 4-DoF={e[4]:.3f} px; "
           f"noisy low-texture: 4-DoF={e4:.3f} <= 8-DoF={e8:.3f} px (lost frames count as inf)")
    assert ok


def test_c08_metric_exactness(report):
    g = rect_quad(10, 10, 8, 6)
    e_al = alignment_error(g + (3, 4), g)
    unit = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]])
    e_j = jaccard_error(unit, unit + (0.5, 0))
    a = rect_quad(0, 0, 40, 30)
    b = apply_warp(params_to_matrix(SimilarityParams(5, -3, 1.1, 25)), a)
    mc = 1 - monte_carlo_iou(b, a, 10 ** 6, seed=0)
    d = abs(jaccard_error(b, a) - mc)
    ok = e_al == 5.0 and abs(e_j - 2 / 3) <= 1e-15 and d < 1e-3
    report("C8 metric exactness", ok, f"E_al={e_al!r} (5.0), E_jac={e_j!r} (2/3), "
           f"rotated quad vs Monte Carlo diff={d:.1e} (<1e-3)")
    assert ok


def test_c09_protocol_counting(report):
    toy = effective_frames(100, 10)
    oracle = sum(100 - i * 10 - 1 for i in range(10))
    # per-sequence lengths are not published; 1841 frames over 12 sequences, split as evenly as possible
    lengths = [154] * 5 + [153] * 7
    total = sum(effective_frames(n, 10) for n in lengths)
    rel = total / 10360 - 1
    ok_toy = toy == oracle == 540
    ok_tfmt = abs(rel) <= 0.02
    report("C9 protocol counting", ok_toy and ok_tfmt,
           f"L=100,k=10 -> {toy} (oracle {oracle}); TFMT 12 seqs / {sum(lengths)} frames -> {total} effective "
           f"vs 10,360 ({rel:+.2%}, band +-2%)")
    assert ok_toy
    assert ok_tfmt, f"TFMT effective frames {total} is {rel:+.2%} from 10,360"


def test_c10_throughput(report):
    seq = cli.synthetic_benchmark_sequence(640, 480, 100, 40, seed=0)
    r_s = cli.bench(make_tracker("rsst", 4, {}, 0), seq.frames, seq.gt[0])
    r_k = cli.bench(make_tracker("rklt", 4, {}, 0), seq.frames, seq.gt[0])
    ok = r_s["fps"] >= 15 and r_k["fps"] >= 10
    detail = f"RSST {r_s['fps']:.1f} fps (>=15), RKLT {r_k['fps']:.1f} fps (>=10) on 640x480, 100x100 target"
    report("C10 throughput (soft)", ok, detail, None if ok else "WARN")
    if not ok:
        warnings.warn("throughput below target: " + detail)


def test_c11_determinism(report, tmp_path):
    seq = scenes.rklt_combined()
    runs = [rklt.dof_variant_run(seq.frames[:20], seq.gt[0], 4, RkltConfig(seed=7)) for _ in range(2)]
    same_k = all(np.array_equal(a, b) for a, b in zip(*runs))
    rs, _ = scenes.rsst_sequence("rotation")
    poses = []
    for _ in range(2):
        st = rsst.init(rs.frames[0], rs.gt[0])
        out = []
        for f in rs.frames[1:15]:
            st, q = rsst.track_frame(st, f)
            out.append(q)
        poses.append(out)
    same_s = all(np.array_equal(a, b) for a, b in zip(*poses))
    d = tmp_path / "ds"
    from fourdof import synth
    synth.export(synth.SyntheticSequence(seq.frames[:12], seq.gt[:12]), d)
    files = []
    for k in range(2):
        out = tmp_path / f"r{k}.csv"
        subprocess.run([sys.executable, "-m", "fourdof.cli", "track", "--tracker", "rklt", "--dataset", str(d),
                        "--seed", "7", "--no-timing", "--out", str(out)], check=True, capture_output=True)
        files.append(out.read_bytes())
    same_f = files[0] == files[1]
    ok = same_k and same_s and same_f
    report("C11 determinism", ok, f"RKLT trajectories bit-identical={same_k}, RSST={same_s}, "
                                  f"results.csv byte-identical across processes={same_f}")
    assert ok
