import numpy as np
import pytest

from spmlab.noise import (
    NoiseOperator,
    SpectralMultiplier,
    TimeFactor,
    WienerSpec,
    apply_operator,
    coarsen,
    diffuse,
    hs_norm_sq,
    hs_norm_sq_modes,
    noise_from_dict,
    standard_normals,
    verify_h2,
    wiener_increments,
)
from spmlab.spaces import norm_sq


def test_hs_zero_field(path8):
    assert hs_norm_sq(path8, NoiseOperator.rank_one(1.0), 0.0, np.zeros(8)) == 0.0


def test_hs_rank_one_closed_form(two_point):
    B = NoiseOperator.rank_one(2.0)
    assert hs_norm_sq(two_point, B, 0.0, np.array([1.0, -1.0])) == pytest.approx(8.0 / 3.0, rel=1e-14)


def test_hs_against_mode_sum(path8, rng):
    B = NoiseOperator(
        (TimeFactor("const", 0.7), TimeFactor("sin", 0.4, 2.0), TimeFactor("const", 1.1), TimeFactor("const", 0.2)),
        (SpectralMultiplier("one"), SpectralMultiplier("resolvent", 0.5), SpectralMultiplier("resolvent", 1.0),
         SpectralMultiplier("one")),
    )
    C2 = B.constant(path8)
    for t in (0.0, 0.3, 1.7):
        for _ in range(20):
            u = rng.standard_normal(8)
            hs = hs_norm_sq(path8, B, t, u)
            assert hs == pytest.approx(hs_norm_sq_modes(path8, B, t, u), rel=1e-12)
            assert hs <= C2 * norm_sq(path8, u, "F12dual") + 1e-12


def test_diffuse_linearity(path8, rng):
    B = NoiseOperator.rank_one(0.5, SpectralMultiplier("resolvent", 1.0))
    u = rng.standard_normal(8)
    dW = rng.standard_normal(1)
    np.testing.assert_array_equal(diffuse(path8, B, 0.0, u, np.zeros(1)), np.zeros(8))
    np.testing.assert_array_equal(diffuse(path8, B, 0.0, np.zeros(8), dW), np.zeros(8))
    np.testing.assert_allclose(diffuse(path8, B, 0.0, u, dW) + diffuse(path8, B, 0.0, u, -dW), 0.0, atol=1e-15)
    with pytest.raises(ValueError):
        diffuse(path8, B, 0.0, u, np.zeros(2))


def test_apply_operator_projects_on_modes(path8, rng):
    B = NoiseOperator.rank_one(1.0)
    u = rng.standard_normal(8)
    # B(u) phi_0 = u and B(u) phi_j = 0 for j >= K
    np.testing.assert_allclose(apply_operator(path8, B, 0.0, u, path8.basis[:, 0]), u, atol=1e-13)
    np.testing.assert_allclose(apply_operator(path8, B, 0.0, u, path8.basis[:, 3]), 0.0, atol=1e-13)


def test_verify_h2_zero(path8):
    rep = verify_h2(path8, NoiseOperator.zero(), 50)
    assert rep.c1_measured == 0.0 and rep.c2_measured == 0.0 and rep.passed


def test_verify_h2_rank_one(two_point):
    rep = verify_h2(two_point, NoiseOperator.rank_one(2.0), 200)
    assert rep.c2_measured == pytest.approx(4.0, rel=1e-12)
    assert abs(rep.c1_measured - rep.c2_measured) <= 1e-9
    assert rep.passed


def test_verify_h2_smoothing(two_point):
    rep = verify_h2(two_point, NoiseOperator.rank_one(1.0, SpectralMultiplier("resolvent", 1.0)), 200)
    assert rep.c2_measured == pytest.approx(1.0, rel=1e-12)
    assert abs(rep.c1_measured - rep.c2_measured) <= 1e-9
    assert rep.passed


def test_verify_h2_sin_factor_sup(path8):
    B = NoiseOperator((TimeFactor("sin", 1.0, 4.0),), (SpectralMultiplier("one"),))
    rep = verify_h2(path8, B, 20, T=4.0)
    assert rep.c2_measured == pytest.approx(2.25, rel=1e-12)
    assert rep.c2_claimed == pytest.approx(2.25)
    with pytest.raises(ValueError):
        verify_h2(path8, B, 0)


def test_too_many_modes(two_point):
    B = NoiseOperator((TimeFactor(),) * 3, (SpectralMultiplier(),) * 3)
    with pytest.raises(ValueError):
        hs_norm_sq(two_point, B, 0.0, np.ones(2))


def test_wiener_reproducible_and_independent_of_mode_count():
    a = wiener_increments(7, 3, 2, 100, 0.01)
    b = wiener_increments(7, 3, 4, 100, 0.01)
    np.testing.assert_array_equal(a, b[:, :2])
    np.testing.assert_array_equal(a, WienerSpec(2, 7, 0.01).increments(3, 100))
    assert not np.array_equal(a, wiener_increments(7, 4, 2, 100, 0.01))
    # prefix stability: entry n depends on n only
    np.testing.assert_array_equal(standard_normals(1, 0, 0, 10), standard_normals(1, 0, 0, 50)[:10])


def test_wiener_moments():
    z = standard_normals(0, 0, 0, 200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
    assert np.all(np.isfinite(z))


def test_coarsen():
    dW = wiener_increments(0, 0, 1, 8, 0.125)
    c = coarsen(dW, 4)
    np.testing.assert_allclose(c[:, 0], [dW[:4, 0].sum(), dW[4:, 0].sum()])
    with pytest.raises(ValueError):
        coarsen(dW, 3)


def test_noise_from_dict(path8):
    assert noise_from_dict(None).is_zero
    assert noise_from_dict({"kind": "zero"}).is_zero
    B = noise_from_dict({"modes": 3, "g": [{"kind": "sin", "value": 0.5}], "gamma": [{"kind": "one"}]}, horizon=2.0)
    assert B.modes == 3 and B.g[0].period == 2.0
    with pytest.raises(ValueError):
        noise_from_dict({"modes": 2, "g": [{}, {}, {}]})
    with pytest.raises(ValueError):
        TimeFactor("cos")
