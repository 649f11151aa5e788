import numpy as np
import pytest

from fourdof import rklt
from fourdof.geom import (DofModel, SimilarityParams, fit_similarity, in_dof_group, invert, params_to_matrix,
                          rect_quad, transform_points)
from fourdof.lk import ncc_at
from fourdof.rklt import RkltConfig, RkltTracker, TrackingLost, ransac_similarity

from . import scenes

TRUTH = SimilarityParams(2, -1, 1.5, 30)


def _pairs(n, seed):
    rng = np.random.default_rng(seed)
    src = rng.uniform(-50, 50, (n, 2))
    return src, transform_points(params_to_matrix(TRUTH), src)


def _with_outliers(src, dst, frac, seed):
    """Replace ``frac`` of the targets by uniform points far from the true mapping."""
    rng = np.random.default_rng(seed)
    dst = dst.copy()
    bad = rng.choice(len(src), int(round(frac * len(src))), replace=False)
    for i in bad:
        while True:
            p = rng.uniform(-150, 150, 2)
            if np.linalg.norm(p - dst[i]) > 10:
                dst[i] = p
                break
    clean = np.ones(len(src), bool)
    clean[bad] = False
    return dst, clean


def _vec(p):
    return np.array([p.tx, p.ty, p.scale, p.rotation])


def test_reference_grid_spacing():
    g = rklt.reference_grid(90, 90, 10)
    assert g.shape == (100, 2)
    assert np.allclose(np.diff(np.unique(g[:, 0])), 10)
    assert np.allclose(np.diff(np.unique(g[:, 1])), 10)


def test_ransac_exact():
    src, dst = _pairs(20, 0)
    p, mask = ransac_similarity(src, dst)
    assert mask.all()
    np.testing.assert_allclose(_vec(p), _vec(TRUTH), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_ransac_outliers(seed):
    src, dst = _pairs(20, seed)
    dst, clean = _with_outliers(src, dst, 0.4, seed + 10)
    p, mask = ransac_similarity(src, dst, RkltConfig(seed=seed))
    np.testing.assert_array_equal(mask, clean)
    np.testing.assert_allclose(_vec(p), _vec(TRUTH), atol=1e-6)


def test_ransac_equals_direct_fit_without_outliers():
    src, dst = _pairs(30, 3)
    dst = dst + np.random.default_rng(4).normal(0, 0.2, dst.shape)
    p, mask = ransac_similarity(src, dst)
    assert mask.all()
    np.testing.assert_allclose(_vec(p), _vec(fit_similarity(src, dst)), atol=1e-9)


def test_ransac_order_invariant():
    src, dst = _pairs(25, 5)
    dst, _ = _with_outliers(src, dst, 0.3, 6)
    perm = np.random.default_rng(7).permutation(25)
    a, ma = ransac_similarity(src, dst)
    b, mb = ransac_similarity(src[perm], dst[perm])
    np.testing.assert_array_equal(_vec(a), _vec(b))
    np.testing.assert_array_equal(ma[perm], mb)


def test_ransac_errors():
    with pytest.raises(TrackingLost):
        ransac_similarity([[0.0, 0.0]], [[1.0, 1.0]])
    src, _ = _pairs(20, 8)
    junk = np.random.default_rng(9).uniform(-500, 500, (20, 2))
    with pytest.raises(TrackingLost):
        ransac_similarity(src, junk)


@pytest.fixture(scope="module")
def combined():
    return scenes.rklt_combined()


def test_template_self_ncc(combined):
    st = rklt.init(combined.frames[0], combined.gt[0])
    assert ncc_at(st.template, combined.frames[0], st.curr_warp) == pytest.approx(1.0, abs=1e-12)


def test_identical_frame_keeps_warp(combined):
    st = rklt.init(combined.frames[0], combined.gt[0])
    st2, q, diag = rklt.track_frame(st, combined.frames[0])
    assert np.abs(q - combined.gt[0]).max() < 1e-3
    assert diag.inliers == 100


def test_combined_trajectory(combined):
    out = rklt.dof_variant_run(combined.frames, combined.gt[0], 4)
    assert scenes.mean_error(out, combined.gt[1:]) < 1.0


def test_occluded_trajectory():
    seq = scenes.rklt_combined(occluded=True)
    assert scenes.occluder_fraction(seq) >= 0.3
    tr = RkltTracker(4)
    tr.initialize(seq.frames[0], seq.gt[0])
    out = [tr.update(f) for f in seq.frames[1:]]  # TrackingLost would propagate
    assert scenes.mean_error(out, seq.gt[1:]) < 2.0


def test_empty_target_lost():
    img = np.full((120, 160), 0.4)
    img[:, :20] = np.random.default_rng(0).random((120, 20))
    st = rklt.init(img, rect_quad(90, 60, 50, 50))
    with pytest.raises(TrackingLost):
        rklt.track_frame(st, img)


def test_degenerate_region():
    with pytest.raises(ValueError):
        rklt.init(np.zeros((50, 50)), np.array([[10, 10], [10, 10], [10, 10], [10, 10]], float))


@pytest.mark.parametrize("dof", list(DofModel))
def test_variants_on_translation(dof):
    seq = scenes.rklt_translation()
    st = rklt.init(seq.frames[0], seq.gt[0], dof)
    out = []
    for f in seq.frames[1:]:
        st, q, diag = rklt.track_frame(st, f)
        assert in_dof_group(invert(st.init_warp) @ st.curr_warp, dof, tol=1e-8)
        assert diag.ncc >= diag.layer1_ncc - 1e-9
        out.append(q)
    assert scenes.mean_error(out, seq.gt[1:]) < 0.5


def test_variants_agree_on_translation():
    seq = scenes.rklt_translation()
    runs = [rklt.dof_variant_run(seq.frames, seq.gt[0], d) for d in DofModel]
    for i in range(len(runs)):
        for j in range(i):
            assert scenes.mean_error(runs[i], runs[j]) < 0.5


def test_determinism(combined):
    a = rklt.dof_variant_run(combined.frames[:15], combined.gt[0], 4, RkltConfig(seed=3))
    b = rklt.dof_variant_run(combined.frames[:15], combined.gt[0], 4, RkltConfig(seed=3))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_config_validation():
    with pytest.raises(ValueError):
        RkltConfig(grid=2)
    with pytest.raises(ValueError):
        RkltConfig(ransac_thresh=0)
