"""Semi-implicit Euler-Maruyama for the regularized porous-media cascade.

One step solves

    Y + dt (nu - L)(Psi(Y) + lam Y) = X_n + B(t_n, X_n) dW_n

for ``Y = X_{n+1}``: drift implicit, noise explicit.  ``nu = lam = 0`` is the
unregularized equation.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import Nonlinearity
from .noise import NoiseOperator, diffuse, wiener_increments
from .operators import Generator
from .spaces import norm, norm_sq

logger = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """Newton did not reach the residual tolerance within ``newton_max`` iterations."""

    def __init__(self, message, step=None, residual=None, iterations=None):
        super().__init__(message)
        self.step = step
        self.residual = residual
        self.iterations = iterations
        self.path = None
        self.partial = None


@dataclass(frozen=True)
class CascadeConfig:
    nu: float = 0.0
    lam: float = 0.0
    dt: float = 1e-3
    T: float = 1.0
    x: np.ndarray | None = None
    newton_tol: float = 1e-10
    newton_max: int = 50

    def __post_init__(self):
        if self.nu < 0 or self.lam < 0:
            raise ValueError("nu and lambda must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("horizon T must be nonnegative")
        if self.T > 0 and self.dt > self.T * (1 + 1e-12):
            raise ValueError("dt must not exceed T")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.newton_max < 1:
            raise ValueError("newton_max must be positive")
        if self.x is not None:
            x = np.array(self.x, dtype=float)
            x.setflags(write=False)
            object.__setattr__(self, "x", x)

    @property
    def steps(self) -> int:
        n = self.T / self.dt
        N = int(round(n))
        if abs(n - N) > 1e-9 * max(1.0, n):
            raise ValueError(f"T={self.T} is not a multiple of dt={self.dt}")
        return N

    def replace(self, **kw) -> "CascadeConfig":
        d = dict(nu=self.nu, lam=self.lam, dt=self.dt, T=self.T, x=self.x,
                 newton_tol=self.newton_tol, newton_max=self.newton_max)
        d.update(kw)
        return CascadeConfig(**d)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    noise: np.ndarray
    l2_norm: np.ndarray
    f12dual_norm: np.ndarray
    f12_norm: np.ndarray
    psi_l2_norm: np.ndarray
    path: int = 0
    seed: int = 0
    newton_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    step_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rhs_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    def rows(self):
        for n, t in enumerate(self.times):
            yield (self.path, n, t, self.l2_norm[n], self.f12dual_norm[n], self.f12_norm[n], self.psi_l2_norm[n])

    def to_csv(self, fh, header: bool = True):
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            w.writerow([row[0], row[1]] + [_fmt(v) for v in row[2:]])

    def states_to_csv(self, fh, header: bool = True):
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(("path", "step", "site", "value"))
        for n, s in enumerate(self.states):
            for i, v in enumerate(s):
                w.writerow([self.path, n, i, _fmt(v)])


TRACE_COLUMNS = ("path", "step", "t", "l2_norm", "f12dual_norm", "f12_norm", "psi_l2_norm")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def drift_A(gen: Generator, psi: Nonlinearity, nu: float, u) -> np.ndarray:
    """``A u = (L - nu) Psi(u)``."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    p = psi(gen.check_field(u))
    return gen.apply(p) - nu * p


def drift_pairing_decomposed(gen: Generator, psi: Nonlinearity, nu: float, u, v) -> float:
    """``V*<Au, v>_V = -<Psi(u), v>_2 + (1 - nu) <(1 - L)^{-1} Psi(u), v>_2``."""
    from .spaces import riesz_inverse

    p = psi(gen.check_field(u))
    v = gen.check_field(v, "v")
    return -gen.space.inner(p, v) + (1.0 - nu) * gen.space.inner(riesz_inverse(gen, p), v)


def _wnorm(gen: Generator, r) -> float:
    return float(np.sqrt(np.dot(gen.space.weights * r, r)))


def implicit_step(gen: Generator, psi: Nonlinearity, cfg: CascadeConfig, R, guess=None,
                  dt: float | None = None, step: int | None = None, K: np.ndarray | None = None):
    """Solve ``Y + dt (nu - L)(Psi(Y) + lam Y) = R`` by damped Newton.

    Returns ``(Y, iterations, residual)`` with the residual measured in
    ``L^2(mu)``; raises ``StepFailure`` when ``newton_max`` iterations do not
    bring it below ``newton_tol * max(1, |R|_2)``.  ``K = nu - L`` may be
    passed precomputed.
    """
    dt = cfg.dt if dt is None else dt
    R = np.asarray(R, dtype=float)
    if dt == 0:
        return R.copy(), 0, 0.0
    n = gen.size
    eye = np.eye(n)
    if K is None:
        K = cfg.nu * eye - gen.matrix
    lam = cfg.lam
    target = cfg.newton_tol * max(1.0, _wnorm(gen, R))

    def F(y):
        return y + dt * (K @ (psi(y) + lam * y)) - R

    y = R.copy() if guess is None else np.array(guess, dtype=float)
    f = F(y)
    res = _wnorm(gen, f)
    it = 0
    while res > target:
        if it >= cfg.newton_max:
            raise StepFailure(
                f"Newton stalled at residual {res:.3e} (target {target:.3e}) after {it} iterations",
                step=step, residual=res, iterations=it,
            )
        it += 1
        J = eye + dt * K * (psi.derivative(y) + lam)[None, :]
        delta = np.linalg.solve(J, -f)
        s = 1.0
        for _ in range(40):
            y_new = y + s * delta
            f_new = F(y_new)
            res_new = _wnorm(gen, f_new)
            if res_new < res:
                break
            s *= 0.5
        else:
            raise StepFailure(f"line search failed at residual {res:.3e}", step=step, residual=res, iterations=it)
        y, f, res = y_new, f_new, res_new
    return y, it, res


def simulate(gen: Generator, psi: Nonlinearity, B: NoiseOperator, cfg: CascadeConfig, path: int = 0,
             seed: int = 0, increments: np.ndarray | None = None) -> Trajectory:
    """Run one path of the scheme on the grid ``t_n = n dt``.

    Increments are drawn from the ``(seed, path)`` stream unless supplied
    (e.g. aggregated from a finer grid for refinement studies).
    """
    if cfg.x is None:
        raise ValueError("cascade config has no initial datum")
    x = gen.check_field(cfg.x, "x")
    B.bind_check(gen)
    N = cfg.steps
    if increments is None:
        dW = wiener_increments(seed, path, B.modes, N, cfg.dt)
    else:
        dW = np.asarray(increments, dtype=float)
        if dW.shape != (N, B.modes):
            raise ValueError(f"increments must have shape {(N, B.modes)}, got {dW.shape}")
    n = gen.size
    states = np.empty((N + 1, n))
    noise = np.zeros((N, n))
    iters = np.zeros(N, dtype=int)
    resid = np.zeros(N)
    rhs = np.zeros(N)
    states[0] = x
    zero_noise = B.is_zero
    K = cfg.nu * np.eye(n) - gen.matrix
    gains = B.mode_gains(gen, 0.0) if B.time_independent else None
    for k in range(N):
        X = states[k]
        t = k * cfg.dt
        if not zero_noise:
            if gains is None:
                noise[k] = diffuse(gen, B, t, X, dW[k])
            else:
                noise[k] = gen.spectral_apply(dW[k] @ gains, X)
        R = X + noise[k]
        try:
            Y, it, res = implicit_step(gen, psi, cfg, R, step=k, K=K)
        except StepFailure as exc:
            exc.step = k
            exc.path = path
            exc.partial = _finish(gen, psi, states[: k + 1], noise[:k], cfg, path, seed,
                                  iters[:k], resid[:k], rhs[:k])
            logger.error("path %d: step %d failed: %s", path, k, exc)
            raise
        states[k + 1] = Y
        iters[k] = it
        resid[k] = res
        rhs[k] = _wnorm(gen, R)
    return _finish(gen, psi, states, noise, cfg, path, seed, iters, resid, rhs)


def _finish(gen, psi, states, noise, cfg, path, seed, iters, resid, rhs) -> Trajectory:
    S = states.T
    P = psi(states).T
    return Trajectory(
        times=np.arange(states.shape[0]) * cfg.dt,
        states=states,
        noise=noise,
        l2_norm=np.sqrt(norm_sq(gen, S, "L2")),
        f12dual_norm=np.sqrt(norm_sq(gen, S, "F12dual")),
        f12_norm=np.sqrt(norm_sq(gen, S, "F12")),
        psi_l2_norm=np.sqrt(norm_sq(gen, P, "L2")),
        path=path,
        seed=seed,
        newton_iterations=iters,
        step_residuals=resid,
        rhs_norms=rhs,
    )


@dataclass
class IntegratedPsi:
    """Cumulative ``dt sum_{m=1}^{n} Psi(X_m)`` and the discrete integral-equation residual."""

    integral: np.ndarray
    f12_norm: np.ndarray
    residual: np.ndarray
    residual_bound: np.ndarray


def integrated_psi(traj: Trajectory, gen: Generator, psi: Nonlinearity, cfg: CascadeConfig) -> IntegratedPsi:
    """Time integral of ``Psi(X)`` on the scheme's own quadrature.

    The implicit scheme evaluates the drift at the new time level, so the
    integral over ``[0, t_n]`` is ``dt * sum_{m=1}^{n} Psi(X_m)``.  With that
    rule ``X_n + (nu - L) int (Psi + lam X) - x - sum B dW`` is a sum of Newton
    residuals; its ``F*`` norm is returned next to the accumulated bound.
    """
    dt = cfg.dt
    P = psi(traj.states)
    N = traj.steps
    n = gen.size
    integral = np.zeros((N + 1, n))
    integral[1:] = dt * np.cumsum(P[1:], axis=0)
    lin = np.zeros((N + 1, n))
    lin[1:] = dt * np.cumsum(traj.states[1:], axis=0)
    noise_sum = np.zeros((N + 1, n))
    noise_sum[1:] = np.cumsum(traj.noise, axis=0)
    drift = integral + cfg.lam * lin
    K = cfg.nu * np.eye(n) - gen.matrix
    r = traj.states + drift @ K.T - traj.states[0] - noise_sum
    residual = np.sqrt(norm_sq(gen, r.T, "F12dual"))
    bound = np.zeros(N + 1)
    bound[1:] = np.cumsum(cfg.newton_tol * np.maximum(1.0, traj.rhs_norms))
    return IntegratedPsi(
        integral=integral,
        f12_norm=np.sqrt(norm_sq(gen, integral.T, "F12")),
        residual=residual,
        residual_bound=bound,
    )


def exact_linear_solution(gen: Generator, x, t: float, c: float = 1.0, nu: float = 0.0, lam: float = 0.0):
    """``exp(-t (nu - L)(c + lam)) x``: the noiseless linear equation in closed form."""
    return gen.spectral_apply(np.exp(-t * (nu + gen.theta) * (c + lam)), x)


def l2_norm(gen: Generator, u) -> float:
    return float(norm(gen, u, "L2"))
