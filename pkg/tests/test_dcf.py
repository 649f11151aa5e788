import numpy as np
import pytest

from fourdof import dcf
from fourdof.imgproc import gaussian_label_1d, gaussian_label_2d

from .oracles import spatial_ridge_response, unrolled_numerator

SHAPES = [(8, 8), (21,), (1, 8), (5, 6)]


def _label(shape):
    if len(shape) == 1:
        return gaussian_label_1d(shape[0], shape[0] / 16)
    return gaussian_label_2d(shape[1], shape[0], (shape[1] / 8, shape[0] / 8))


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("lam", [0.0, 0.01, 1.0])
def test_matches_spatial_oracle(shape, d, lam):
    rng = np.random.default_rng(hash((shape, d, lam)) % 2 ** 32)
    x = rng.uniform(-1, 1, (d, *shape))
    z = rng.uniform(-1, 1, (d, *shape))
    f = _label(shape)
    expected = spatial_ridge_response(x, f, z, lam)
    got = dcf.respond(dcf.train_init(x, f, lam), z)
    assert np.abs(got - expected).max() < 1e-9


def test_self_response_is_label():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (1, 8, 8))
    f = _label((8, 8))
    np.testing.assert_allclose(dcf.respond(dcf.train_init(x, f, 0.0), x), f, atol=1e-10)


def test_update_fixed_point():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 6, 6))
    m = dcf.train_init(x, _label((6, 6)), 0.01)
    for eta in (0.01, 0.5, 1.0):
        u = dcf.update(m, x, eta)
        np.testing.assert_allclose(u.numerators, m.numerators, atol=1e-12)
        np.testing.assert_allclose(u.denominator, m.denominator, atol=1e-12)


def test_update_eta_one_is_train_init():
    rng = np.random.default_rng(2)
    f = _label((21,))
    a, b = rng.normal(size=(4, 21)), rng.normal(size=(4, 21))
    u = dcf.update(dcf.train_init(a, f, 0.01), b, 1.0)
    t = dcf.train_init(b, f, 0.01)
    np.testing.assert_array_equal(u.numerators, t.numerators)
    np.testing.assert_array_equal(u.denominator, t.denominator)


def test_update_contracts_geometrically():
    rng = np.random.default_rng(3)
    f = _label((8, 8))
    a, x = rng.normal(size=(2, 8, 8)), rng.normal(size=(2, 8, 8))
    target = dcf.train_init(x, f)
    m = dcf.train_init(a, f)
    eta = 0.2
    dist = np.abs(m.numerators - target.numerators).max()
    for _ in range(2):
        m = dcf.update(m, x, eta)
        nd = np.abs(m.numerators - target.numerators).max()
        assert nd == pytest.approx((1 - eta) * dist, rel=1e-9)
        dist = nd


def test_update_matches_unrolled_sum():
    rng = np.random.default_rng(4)
    f = _label((8, 8))
    xs = [rng.normal(size=(2, 8, 8)) for _ in range(10)]
    eta = 0.3
    m = dcf.train_init(xs[0], f)
    for x in xs[1:]:
        m = dcf.update(m, x, eta)
    assert np.abs(m.numerators - unrolled_numerator(f, xs, eta)).max() < 1e-10
    assert np.all(m.denominator >= 0)


@pytest.mark.parametrize("eta", [0.0, -0.1, 1.5])
def test_update_rejects_bad_eta(eta):
    m = dcf.train_init(np.ones((1, 4)), gaussian_label_1d(4, 1))
    with pytest.raises(ValueError):
        dcf.update(m, np.ones((1, 4)), eta)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        dcf.train_init(np.ones((2, 4, 4)), np.ones((4, 5)))
    m = dcf.train_init(np.ones((2, 4, 4)), np.ones((4, 4)))
    with pytest.raises(ValueError):
        dcf.respond(m, np.ones((3, 4, 4)))


@pytest.mark.parametrize("du,dv", [(0, 0), (2, -3), (-4, 5), (7, 1)])
def test_shift_moves_peak(du, dv):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 16, 16))
    m = dcf.train_init(x, gaussian_label_2d(16, 16, 1.0), 0.01)
    z = np.roll(x, (du, dv), axis=(1, 2))
    pos, _ = dcf.peak_locate(dcf.respond(m, z))
    assert tuple(np.round(pos).astype(int)) == (du, dv)
    assert np.abs(pos - (du, dv)).max() < 1e-6


def test_uncorrelated_patch_has_lower_peak():
    rng = np.random.default_rng(6)
    f = gaussian_label_2d(12, 12, 1.0)
    for _ in range(100):
        x = rng.normal(size=(2, 12, 12))
        m = dcf.train_init(x, f, 0.01)
        own = dcf.respond(m, x).max()
        other = dcf.respond(m, rng.normal(size=(2, 12, 12))).max()
        assert other < own


def test_denominator_channel_permutation_invariant():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 6, 6))
    f = _label((6, 6))
    a = dcf.train_init(x, f).denominator
    b = dcf.train_init(x[[2, 0, 3, 1]], f).denominator
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_response_linear_in_numerator():
    from dataclasses import replace
    rng = np.random.default_rng(8)
    x, z = rng.normal(size=(2, 8, 8)), rng.normal(size=(2, 8, 8))
    m = dcf.train_init(x, _label((8, 8)))
    r = dcf.respond(m, z)
    r3 = dcf.respond(replace(m, numerators=2.5 * m.numerators), z)
    np.testing.assert_allclose(r3, 2.5 * r, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(dcf.peak_locate(r3)[0], dcf.peak_locate(r)[0], atol=1e-12)


def test_peak_locate_cases():
    pos, val = dcf.peak_locate(gaussian_label_2d(16, 16, 1.5))
    assert pos.tolist() == [0.0, 0.0] and val == 1.0
    shifted = np.roll(gaussian_label_1d(20, 1.5), 3)
    pos, _ = dcf.peak_locate(shifted)
    assert pos[0] == pytest.approx(3.0, abs=1e-6)
    r = np.zeros(9)
    r[3:6] = (0.5, 1.0, 0.9)
    pos, val = dcf.peak_locate(r)
    assert pos[0] == pytest.approx(4 + 1 / 3, abs=1e-12) and val == 1.0


def test_peak_locate_wraps_negative_and_flat():
    r = np.roll(gaussian_label_1d(10, 1.0), -2)
    assert dcf.peak_locate(r)[0][0] == pytest.approx(-2.0, abs=1e-9)
    pos, val = dcf.peak_locate(np.zeros((4, 5)))
    assert pos.tolist() == [0.0, 0.0] and val == 0.0
    with pytest.raises(ValueError):
        dcf.peak_locate(np.zeros(0))
