import numpy as np
import pytest

from spmlab.operators import build_conductance_generator, path_graph
from spmlab.spaces import (
    dual_norm,
    dual_pairing,
    l2_isometry_check,
    norm,
    norm_sq,
    pairing,
    riesz_forward,
    riesz_inverse,
    riesz_isometry_check,
)

U = np.array([1.0, -1.0])


def test_two_point_norms(two_point):
    assert norm_sq(two_point, U) == pytest.approx(2.0, abs=1e-14)
    assert norm_sq(two_point, U, "F12") == pytest.approx(6.0, abs=1e-13)
    assert norm_sq(two_point, U, "F12dual") == pytest.approx(2.0 / 3.0, abs=1e-14)


def test_zero_field(path8):
    for kind in ("L2", "F12", "F12dual"):
        assert norm_sq(path8, np.zeros(8), kind) == 0.0
    assert norm_sq(path8, np.zeros(8), "F12dual_nu", nu=0.5) == 0.0


def test_nu_one_coincides(path8, rng):
    for _ in range(100):
        u = rng.standard_normal(8)
        assert norm(path8, u, "F12dual_nu", nu=1.0) == pytest.approx(norm(path8, u, "F12dual"), rel=1e-14)


def test_nu_norm_requires_positive_nu_on_kernel(path8):
    with pytest.raises(ValueError):
        norm_sq(path8, np.ones(8), "F12dual_nu", nu=0.0)
    with pytest.raises(ValueError):
        norm_sq(path8, np.ones(8), "H1")


def test_pairings(two_point, path8, rng):
    v = np.array([1.0, 1.0])
    assert pairing(two_point, U, v, "F12dual") == pytest.approx(0.0, abs=1e-15)
    for kind in ("L2", "F12", "F12dual"):
        u = rng.standard_normal(8)
        assert pairing(path8, u, u, kind) == pytest.approx(norm_sq(path8, u, kind), rel=1e-13)
    for _ in range(100):
        u, w = rng.standard_normal(8), rng.standard_normal(8)
        lhs = abs(pairing(path8, u, w, "F12dual"))
        assert lhs <= norm(path8, u, "F12dual") * norm(path8, w, "F12dual") * (1 + 1e-12)


def test_riesz_two_point(two_point):
    eta = riesz_forward(two_point, U)
    np.testing.assert_allclose(eta, [3.0, -3.0], atol=1e-14)
    assert norm_sq(two_point, eta, "F12dual") == pytest.approx(6.0, rel=1e-14)


def test_riesz_eigenvectors(path8):
    for k in range(8):
        phi = path8.basis[:, k]
        np.testing.assert_allclose(riesz_forward(path8, phi), (1 + path8.theta[k]) * phi, atol=1e-13)


def test_riesz_roundtrip_against_dense_solve(rng):
    gen = build_conductance_generator(path_graph(64, weights=rng.uniform(0.5, 2.0, 64)))
    A = np.eye(64) - gen.matrix
    for _ in range(10):
        u = rng.standard_normal(64)
        np.testing.assert_allclose(riesz_inverse(gen, A @ u), u, atol=1e-10)
        np.testing.assert_allclose(riesz_inverse(gen, u), np.linalg.solve(A, u), atol=1e-10)
        assert riesz_isometry_check(gen, u).passed


def test_l2_isometry(path8, rng):
    phi = path8.basis[:, 3]
    rep = l2_isometry_check(path8, phi)
    assert rep.gap <= 1e-15
    zero = l2_isometry_check(path8, np.zeros(8))
    assert zero.dual_norm == 0 and zero.l2_norm == 0 and zero.passed
    gen = build_conductance_generator(path_graph(32))
    for _ in range(100):
        assert l2_isometry_check(gen, rng.standard_normal(32)).gap <= 1e-10


def test_dual_pairing_reduces_to_l2(path8, rng):
    u, v = rng.standard_normal(8), rng.standard_normal(8)
    eta = riesz_forward(path8, u)
    assert dual_pairing(path8, eta, v) == pytest.approx(path8.space.inner(u, v), rel=1e-12)
    assert dual_norm(path8, eta) == pytest.approx(norm(path8, u), rel=1e-12)


def test_vectorized_norms(path8, rng):
    U2 = rng.standard_normal((8, 5))
    for kind in ("L2", "F12", "F12dual"):
        cols = [norm_sq(path8, U2[:, j], kind) for j in range(5)]
        np.testing.assert_allclose(norm_sq(path8, U2, kind), cols, rtol=1e-13)
