import numpy as np
import pytest

from spmlab.experiments import (
    StudySpec,
    dt_refinement_study,
    energy_functional,
    energy_grid,
    fit_slope,
    gronwall_constant,
    initial_data_contraction,
    lambda_cauchy_study,
    linear_moment_recursion,
    map_paths,
    nu_cauchy_study,
)
from spmlab.noise import NoiseOperator, wiener_increments
from spmlab.nonlinearity import identity, linear, porous_medium, saturation
from spmlab.operators import build_conductance_generator, path_graph
from spmlab.solver import CascadeConfig, simulate
from spmlab.spaces import norm_sq


def cosine(n, amp=1.0):
    return amp * np.cos(np.pi * (np.arange(n) + 0.5) / n)


def test_fit_slope():
    x = np.array([1.0, 0.5, 0.25])
    s, hw = fit_slope(x, 3 * x**1.5)
    assert s == pytest.approx(1.5, abs=1e-12) and hw == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        fit_slope([1.0], [1.0])


def test_map_paths_order():
    assert map_paths(lambda p: p * p, 10, threads=4) == [p * p for p in range(10)]


def test_energy_deterministic_equals_initial(path8):
    cfg = CascadeConfig(dt=1e-2, T=1.0, x=cosine(8, 2.0))
    for psi in (identity(), saturation(), porous_medium()):
        tr = [simulate(path8, psi, NoiseOperator.zero(), cfg)]
        rep = energy_functional(tr, path8, cfg, NoiseOperator.zero(), psi)
        assert rep.functional == rep.x_l2_sq
        assert rep.x_l2_sq == pytest.approx(norm_sq(path8, cfg.x), rel=1e-14)


def test_energy_zero_initial(path8):
    cfg = CascadeConfig(dt=1e-2, T=1.0, x=np.zeros(8), lam=0.1, nu=0.1)
    B = NoiseOperator.rank_one(0.5)
    tr = [simulate(path8, saturation(), B, cfg, path=p) for p in range(3)]
    assert energy_functional(tr, path8, cfg, B).functional == 0.0


def test_energy_sup_term_with_regularization(path8):
    # B = 0: the supremum stays at t = 0 for every (lam, nu); the dissipation term is extra
    cfg = CascadeConfig(dt=1e-2, T=1.0, x=cosine(8, 2.0))
    reps = energy_grid(path8, saturation(), NoiseOperator.zero(), cfg, paths=1, grid=(0.0, 0.01))
    for r in reps:
        assert r.sup_term == r.x_l2_sq
        assert (r.dissipation_term > 0) == (r.lam * r.nu > 0)


def test_energy_linear_rank_one_two_point(two_point):
    B = NoiseOperator.rank_one(0.5)
    cfg = CascadeConfig(dt=1e-3, T=1.0, x=[1.0, -1.0])
    trajs = map_paths(lambda p: simulate(two_point, identity(), B, cfg, path=p), 256)
    rep = energy_functional(trajs, two_point, cfg, B, identity())
    assert rep.gronwall_bound == pytest.approx(2 * 2.0 * np.exp(gronwall_constant(0.25)))
    assert np.isfinite(rep.functional) and rep.functional <= rep.gronwall_bound
    assert rep.oracle["bracketed"]
    assert rep.passed


def test_moment_recursion_against_closed_form(two_point):
    # rank-one identity noise: E|X_N|^2 per mode = x_j^2 (a_j^2 (1 + g^2 dt))^N
    B = NoiseOperator.rank_one(0.5)
    dt, N = 0.01, 100
    S = linear_moment_recursion(two_point, 1.0, B, dt, N, [(0.0, 0.0)], np.array([1.0, -1.0]))
    xh = two_point.coefficients(np.array([1.0, -1.0]))
    a = 1 / (1 + dt * two_point.theta)
    np.testing.assert_allclose(S[-1, 0, 0], xh**2 * (a**2 * (1 + 0.25 * dt)) ** N, rtol=1e-12)


def _spec(gen, psi, B, axis, values, paths=2, **base):
    cfg = CascadeConfig(dt=1e-2, T=1.0, x=cosine(gen.size, 2.0), **base)
    return StudySpec(gen, psi, B, cfg, axis, values, paths=paths)


def test_lambda_study_linear_deterministic_oracle(path8):
    rep = lambda_cauchy_study(_spec(path8, identity(), NoiseOperator.zero(), "lambda", [0.1, 0.05, 0.025]))
    np.testing.assert_allclose(rep.D, rep.oracle["D_exact"], rtol=1e-6)
    assert rep.slope == pytest.approx(rep.oracle["slope_exact"], abs=1e-4)
    assert rep.oracle["bracketed"] and rep.passed and rep.monotone


def test_nu_study_linear_deterministic_oracle(path8):
    rep = nu_cauchy_study(_spec(path8, identity(), NoiseOperator.zero(), "nu", [0.1, 0.05, 0.025]))
    np.testing.assert_allclose(rep.D, rep.oracle["D_exact"], rtol=1e-6)
    assert rep.slope == pytest.approx(rep.oracle["slope_exact"], abs=1e-4)
    assert rep.passed


def test_lambda_study_linear_noise_brackets_oracle(path8):
    rep = lambda_cauchy_study(_spec(path8, identity(), NoiseOperator.rank_one(0.5), "lambda",
                                    [0.1, 0.05, 0.025], paths=32))
    assert rep.oracle["bracketed"]
    assert "D_exact" not in rep.oracle


def test_equal_parameters_give_zero(path8):
    for axis in ("lambda", "nu"):
        rep = (lambda_cauchy_study if axis == "lambda" else nu_cauchy_study)(
            _spec(path8, saturation(), NoiseOperator.rank_one(0.5), axis, [0.1, 0.0]))
        assert rep.partners[-1] == 0.0 and rep.D[-1] == 0.0


def test_study_spec_validation(path8):
    with pytest.raises(ValueError, match="common random numbers"):
        StudySpec(path8, identity(), NoiseOperator.zero(), CascadeConfig(x=np.ones(8)), "lambda", [0.1, 0.05],
                  common_noise=False)
    with pytest.raises(ValueError, match="at least two"):
        _spec(path8, identity(), NoiseOperator.zero(), "lambda", [0.1])
    with pytest.raises(ValueError, match="decreasing"):
        _spec(path8, identity(), NoiseOperator.zero(), "nu", [0.05, 0.1])
    with pytest.raises(ValueError, match="decreasing"):
        _spec(path8, identity(), NoiseOperator.zero(), "nu", [0.1, -0.1])
    with pytest.raises(ValueError):
        _spec(path8, identity(), NoiseOperator.zero(), "mu", [0.1, 0.05])


def test_study_reproducible_across_threads(path8, tmp_path):
    spec = _spec(path8, saturation(), NoiseOperator.rank_one(0.5), "lambda", [0.1, 0.05], paths=6)
    a = lambda_cauchy_study(spec)
    spec.threads = 3
    b = lambda_cauchy_study(spec)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("study_lambda.json", "study_lambda.csv", "study_lambda_long.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dt_study_exact_mode():
    for n in (2, 16):
        gen = build_conductance_generator(path_graph(n))
        rep = dt_refinement_study(_spec(gen, identity(), NoiseOperator.zero(), "dt", [1e-2, 5e-3, 2.5e-3, 1.25e-3],
                                        paths=1))
        assert rep.mode == "exact"
        assert 0.9 <= rep.slope <= 1.1 and rep.passed and rep.monotone


def test_dt_study_self_convergence(path8):
    rep = dt_refinement_study(_spec(path8, saturation(), NoiseOperator.rank_one(0.5), "dt", [1e-2, 5e-3, 2.5e-3],
                                    paths=1))
    assert rep.mode == "self" and len(rep.D) == 2
    assert rep.D[1] < rep.D[0]


def test_dt_study_zero_initial(path8):
    spec = _spec(path8, saturation(), NoiseOperator.rank_one(0.5), "dt", [1e-2, 5e-3, 2.5e-3], paths=2)
    spec.base = spec.base.replace(x=np.zeros(8))
    rep = dt_refinement_study(spec)
    assert rep.D == [0.0, 0.0]


def test_dt_study_rejects_non_dyadic(path8):
    with pytest.raises(ValueError, match="dyadic|halve"):
        dt_refinement_study(_spec(path8, identity(), NoiseOperator.zero(), "dt", [1e-2, 4e-3, 2e-3]))


def test_dt_study_uses_coupled_increments():
    fine = wiener_increments(0, 0, 1, 8, 0.125)
    assert fine[:2].sum() == pytest.approx(fine.reshape(4, 2).sum(axis=1)[0])


def test_contraction_identical_data(path8):
    x = cosine(8, 2.0)
    rep = initial_data_contraction(path8, saturation(), NoiseOperator.rank_one(0.5),
                                   CascadeConfig(dt=1e-2, T=0.5, x=x), x, x, paths=2)
    assert np.all(rep.mean_sq_diff == 0) and rep.passed


def test_contraction_linear_deterministic(path8):
    x = cosine(8, 2.0)
    rep = initial_data_contraction(path8, linear(2.0), NoiseOperator.zero(),
                                   CascadeConfig(dt=1e-2, T=1.0, x=x), x, -x, paths=1)
    assert rep.nonincreasing and rep.passed
    np.testing.assert_allclose(rep.mean_sq_diff, rep.oracle, rtol=1e-8)


def test_contraction_linear_noise_oracle(path8):
    x = cosine(8, 2.0)
    rep = initial_data_contraction(path8, identity(), NoiseOperator.rank_one(0.5),
                                   CascadeConfig(dt=1e-2, T=1.0, x=x), x, 0.5 * x, paths=64)
    assert rep.passed
    # rank-one identity noise scales every mode by the same factor: difference is x/2 times it
    assert rep.mean_sq_diff[-1] == pytest.approx(rep.oracle[-1], rel=0.3)


def test_contraction_monotone_pairing_sign(path8):
    x = cosine(8, 3.0)
    for psi in (saturation(), porous_medium()):
        rep = initial_data_contraction(path8, psi, NoiseOperator.zero(),
                                       CascadeConfig(dt=1e-2, T=1.0, x=x), x, -0.3 * x, paths=1)
        assert rep.min_monotone_pairing >= 0 and rep.passed


def test_dual_distance_can_grow_for_nonlinear_psi(two_point):
    # <Psi(u) - Psi(v), u - v>_2 >= 0 does not make the F* distance monotone:
    # d = (1, 2), Psi difference (1, 0) under saturation gives a positive derivative
    x, y = np.array([1.0, 3.0]), np.array([0.0, 1.0])
    rep = initial_data_contraction(two_point, saturation(), NoiseOperator.zero(),
                                   CascadeConfig(dt=1e-3, T=0.01, x=x), x, y, paths=1)
    assert rep.min_monotone_pairing >= 0
    assert rep.mean_sq_diff[1] > rep.mean_sq_diff[0]
    assert rep.passed
