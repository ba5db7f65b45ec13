"""Monte Carlo studies of the regularization cascade.

Every study runs each path under every axis value with the same Wiener
increments (common random numbers), reduces per-path statistics in path
order, and fits log-log slopes by least squares.  "sup over t" is the
maximum over grid points; time integrals use the left-endpoint rule.

For ``Psi = c r`` every quantity diagonalizes in the eigenbasis of ``L``
and second moments obey an exact scalar recursion per mode
(``linear_moment_recursion``); this is the oracle for the linear cases.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .nonlinearity import Nonlinearity, alpha_tilde
from .noise import NoiseOperator, coarsen, wiener_increments
from .operators import Generator
from .solver import CascadeConfig, Trajectory, exact_linear_solution, simulate
from .spaces import norm_sq

logger = logging.getLogger(__name__)

SLOPE_THRESHOLD = 0.8
DT_SELF_THRESHOLD = 0.4
DT_EXACT_RANGE = (0.9, 1.1)


def map_paths(fn, paths: int, threads: int = 1) -> list:
    """``[fn(p) for p in range(paths)]``, optionally on a thread pool; order is preserved."""
    if threads <= 1:
        return [fn(p) for p in range(paths)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(paths)))


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    m = float(np.mean(v))
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size >= 2 else float("nan")
    return m, se


def fit_slope(x, y, confidence: float = 0.95) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its confidence half-width."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 2:
        raise ValueError("need at least two points for a slope")
    res = stats.linregress(lx, ly)
    if lx.size < 3:
        return float(res.slope), float("nan")
    t = stats.t.ppf(0.5 + confidence / 2, lx.size - 2)
    return float(res.slope), float(t * res.stderr)


def linear_coefficient(psi: Nonlinearity) -> float | None:
    """Slope ``c`` when ``Psi(r) = c r``, else ``None``."""
    if psi.name == "identity":
        return 1.0
    if psi.name.startswith("linear(") and "c" in psi.params:
        return float(psi.params["c"])
    return None


def linear_moment_recursion(gen: Generator, c: float, B: NoiseOperator, dt: float, steps: int,
                            runs: list[tuple[float, float]], x) -> np.ndarray:
    """Exact second moments of the scheme for ``Psi = c r``.

    ``runs`` lists ``(nu, lam)`` pairs driven by the same noise from the same
    ``x``.  Returns ``S`` of shape ``(steps + 1, R, R, n)`` with
    ``S[m, a, b, j] = E[X^a_m,j X^b_m,j]`` for eigen-coefficients ``j``.
    """
    theta = gen.theta
    xh = gen.coefficients(np.asarray(x, dtype=float))
    R = len(runs)
    amp = np.array([1.0 / (1.0 + dt * (nu + theta) * (c + lam)) for nu, lam in runs])
    S = np.empty((steps + 1, R, R, theta.size))
    S[0] = xh[None, None, :] ** 2
    for m in range(steps):
        gains = B.mode_gains(gen, m * dt)
        q = 1.0 + dt * (gains**2).sum(axis=0)
        S[m + 1] = amp[:, None, :] * amp[None, :, :] * q[None, None, :] * S[m]
    return S


def _quad(S_ab: np.ndarray, w: np.ndarray) -> np.ndarray:
    return S_ab @ w


# --------------------------------------------------------------------------- energy


@dataclass
class EnergyReport:
    lam: float
    nu: float
    paths: int
    x_l2_sq: float
    sup_term: float
    sup_term_se: float
    dissipation_term: float
    dissipation_term_se: float
    functional: float
    functional_se: float
    terminal_moment: float
    terminal_moment_se: float
    gronwall_bound: float
    oracle: dict | None = None

    @property
    def ratio(self) -> float:
        return self.functional / self.x_l2_sq if self.x_l2_sq > 0 else 0.0

    @property
    def passed(self) -> bool:
        ok = math.isfinite(self.functional) and self.functional <= self.gronwall_bound * (1 + 1e-12)
        if self.oracle is not None:
            ok &= self.oracle["bracketed"]
        return ok


def gronwall_constant(C2: float) -> float:
    """Exponent ``C`` in ``E sup |X|_2^2 <= 2 |x|_2^2 e^{C T}`` for noise constant ``C2``.

    The Itô correction contributes ``C2`` and the BDG/Young step
    ``6 E[sup * int]^{1/2} <= E sup / 2 + 18 C2 int`` contributes ``18 C2``;
    absorbing the half-supremum doubles both.
    """
    return 2.0 * (C2 + 18.0 * C2)


def energy_functional(trajs: list[Trajectory], gen: Generator, cfg: CascadeConfig,
                      B: NoiseOperator | None = None, psi: Nonlinearity | None = None) -> EnergyReport:
    """``E sup_n |X_n|^2 + 4 lam nu E dt sum_n ||X_n||^2_{F}``, estimated over paths."""
    x = np.asarray(cfg.x, dtype=float)
    # one evaluation per path so that row 0 reproduces |x|^2 bit for bit
    sq = [norm_sq(gen, tr.states.T) for tr in trajs]
    x2 = float(sq[0][0]) if sq else norm_sq(gen, x)
    sup = np.array([np.max(s) for s in sq])
    diss = np.array([4.0 * cfg.lam * cfg.nu * cfg.dt * np.sum(tr.f12_norm[:-1] ** 2) for tr in trajs])
    term = np.array([tr.l2_norm[-1] ** 2 for tr in trajs])
    tot = sup + diss
    C2 = 0.0 if B is None else B.constant(gen)
    bound = 2.0 * x2 * math.exp(gronwall_constant(C2) * cfg.T)
    oracle = None
    c = None if psi is None else linear_coefficient(psi)
    if c is not None and B is not None:
        S = linear_moment_recursion(gen, c, B, cfg.dt, cfg.steps, [(cfg.nu, cfg.lam)], x)[:, 0, 0, :]
        exact_term = float(S[-1].sum())
        exact_diss = 4.0 * cfg.lam * cfg.nu * cfg.dt * float(np.sum(S[:-1] @ (1.0 + gen.theta)))
        mt, st = mean_se(term)
        md, sd = mean_se(diss)
        oracle = {
            "terminal_moment": exact_term,
            "dissipation_term": exact_diss,
            "bracketed": bool(_within(mt, st, exact_term) and _within(md, sd, exact_diss)),
        }
    return EnergyReport(
        lam=cfg.lam, nu=cfg.nu, paths=len(trajs), x_l2_sq=x2,
        sup_term=mean_se(sup)[0], sup_term_se=mean_se(sup)[1],
        dissipation_term=mean_se(diss)[0], dissipation_term_se=mean_se(diss)[1],
        functional=mean_se(tot)[0], functional_se=mean_se(tot)[1],
        terminal_moment=mean_se(term)[0], terminal_moment_se=mean_se(term)[1],
        gronwall_bound=bound, oracle=oracle,
    )


def _within(est: float, se: float, exact: float, k: float = 2.0) -> bool:
    """``|est - exact| <= k se``, with a roundoff floor for deterministic cases."""
    se = 0.0 if not math.isfinite(se) else se
    return abs(est - exact) <= k * se + 1e-10 * max(1.0, abs(exact))


def energy_grid(gen: Generator, psi: Nonlinearity, B: NoiseOperator, cfg: CascadeConfig, paths: int,
                grid=(0.0, 1e-3, 1e-2), seed: int = 0, threads: int = 1) -> list[EnergyReport]:
    """``energy_functional`` over every ``(lam, nu)`` in ``grid x grid``."""
    out = []
    for lam in grid:
        for nu in grid:
            c = cfg.replace(lam=lam, nu=nu)
            trajs = map_paths(lambda p: simulate(gen, psi, B, c, path=p, seed=seed), paths, threads)
            out.append(energy_functional(trajs, gen, c, B, psi))
    return out


# --------------------------------------------------------------------------- studies


@dataclass
class StudySpec:
    gen: Generator
    psi: Nonlinearity
    noise: NoiseOperator
    base: CascadeConfig
    axis: str
    values: list
    paths: int = 64
    seed: int = 0
    common_noise: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.axis not in ("lambda", "nu", "dt"):
            raise ValueError(f"unknown study axis {self.axis!r}")
        vals = [float(v) for v in self.values]
        if len(vals) < 2:
            raise ValueError("a study needs at least two axis values to fit a slope")
        if any(v < 0 for v in vals) or any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("axis values must be nonnegative and strictly decreasing")
        if self.axis in ("lambda", "nu") and not self.common_noise:
            raise ValueError("Cauchy studies require common random numbers across axis values")
        if self.paths < 1:
            raise ValueError("need at least one path")
        self.values = vals


@dataclass
class StudyReport:
    axis: str
    values: list
    partners: list
    fit_x: list
    D: list
    D_se: list
    slope: float
    slope_halfwidth: float
    threshold: float
    passed: bool
    paths: int
    components: dict = field(default_factory=dict)
    monotone: bool = True
    oracle: dict | None = None
    mode: str = "cauchy"

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d, default=float))

    def write(self, outdir, stem: str | None = None):
        from pathlib import Path

        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"study_{self.axis}"
        with open(out / f"{stem}.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("axis_value", "partner", "fit_x", "D", "stderr", "slope"))
            for v, p, fx, d, se in zip(self.values, self.partners, self.fit_x, self.D, self.D_se):
                w.writerow([_f(v), _f(p), _f(fx), _f(d), _f(se), _f(self.slope)])
        with open(out / f"{stem}_long.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("axis", "axis_value", "quantity", "value"))
            for i, v in enumerate(self.values):
                w.writerow([self.axis, _f(v), "D", _f(self.D[i])])
                w.writerow([self.axis, _f(v), "stderr", _f(self.D_se[i])])
                for name, arr in sorted(self.components.items()):
                    w.writerow([self.axis, _f(v), name, _f(arr[i])])
        return out


def _f(v) -> str:
    return format(float(v), ".17g")


def _cauchy_pairs(values):
    """Each axis value paired with its half; shared runs are computed once."""
    pairs = [(v, 0.5 * v) for v in values]
    runs = sorted({v for p in pairs for v in p}, reverse=True)
    return pairs, runs


def _cauchy_path_stats(spec: StudySpec, path: int, pairs, runs) -> np.ndarray:
    """Per-path ``(sup F* diff, dt sum |Psi diff|^2, terminal F* diff)`` for every pair."""
    gen, psi, cfg = spec.gen, spec.psi, spec.base
    dW = wiener_increments(spec.seed, path, spec.noise.modes, cfg.steps, cfg.dt)
    key = "lam" if spec.axis == "lambda" else "nu"
    states = {}
    for v in runs:
        c = cfg.replace(**{key: v})
        states[v] = simulate(gen, psi, spec.noise, c, path=path, seed=spec.seed, increments=dW).states
    out = np.empty((len(pairs), 3))
    for i, (a, b) in enumerate(pairs):
        d = (states[a] - states[b]).T
        dp = (psi(states[a]) - psi(states[b])).T
        fd = norm_sq(gen, d, "F12dual")
        out[i, 0] = np.max(fd)
        out[i, 1] = cfg.dt * np.sum(norm_sq(gen, dp[:, :-1]))
        out[i, 2] = fd[-1]
    return out


def _cauchy_study(spec: StudySpec) -> StudyReport:
    pairs, runs = _cauchy_pairs(spec.values)
    per_path = map_paths(lambda p: _cauchy_path_stats(spec, p, pairs, runs), spec.paths, spec.threads)
    arr = np.stack(per_path)  # (paths, pairs, 3)
    Dp = arr[:, :, 0] + arr[:, :, 1]
    D, Dse = zip(*(mean_se(Dp[:, i]) for i in range(len(pairs))))
    fit_x = [a + b for a, b in pairs]
    # a (0, 0) pair gives D = 0 exactly and carries no rate information
    use = [i for i in range(len(D)) if fit_x[i] > 0 and D[i] > 0]
    positive = len(use) >= 2
    slope, hw = (fit_slope([fit_x[i] for i in use], [D[i] for i in use]) if positive
                 else (float("nan"), float("nan")))
    monotone = all(D[i + 1] <= D[i] + (Dse[i] if math.isfinite(Dse[i]) else 0.0) for i in range(len(D) - 1))
    comps = {
        "sup_dual_diff": [mean_se(arr[:, i, 0])[0] for i in range(len(pairs))],
        "psi_diff_integral": [mean_se(arr[:, i, 1])[0] for i in range(len(pairs))],
        "terminal_dual_diff": [mean_se(arr[:, i, 2])[0] for i in range(len(pairs))],
    }
    oracle = _cauchy_oracle(spec, pairs, arr)
    passed = bool(positive and slope >= SLOPE_THRESHOLD)
    return StudyReport(
        axis=spec.axis, values=[a for a, _ in pairs], partners=[b for _, b in pairs], fit_x=fit_x,
        D=list(D), D_se=list(Dse), slope=slope, slope_halfwidth=hw, threshold=SLOPE_THRESHOLD,
        passed=passed, paths=spec.paths, components=comps, monotone=monotone, oracle=oracle,
    )


def _cauchy_oracle(spec: StudySpec, pairs, arr) -> dict | None:
    """Difference recursion for linear ``Psi``.

    Without noise the whole ``D`` is deterministic and reproduced exactly.
    With noise the supremum inside the expectation has no closed form; the
    sup-free part ``E ||d_N||^2_{F*} + E dt sum |Psi diff|^2`` is compared
    against the Monte Carlo estimate instead.
    """
    c = linear_coefficient(spec.psi)
    if c is None:
        return None
    gen, cfg = spec.gen, spec.base
    key = 1 if spec.axis == "lambda" else 0
    exact_D, exact_free, est_free, se_free, ok = [], [], [], [], []
    for i, (a, b) in enumerate(pairs):
        runs = []
        for v in (a, b):
            nu_lam = [cfg.nu, cfg.lam]
            nu_lam[key] = v
            runs.append(tuple(nu_lam))
        S = linear_moment_recursion(gen, c, spec.noise, cfg.dt, cfg.steps, runs, cfg.x)
        dd = S[:, 0, 0, :] + S[:, 1, 1, :] - 2.0 * S[:, 0, 1, :]
        fd = dd @ (1.0 / (1.0 + gen.theta))
        l2 = dd.sum(axis=1)
        integral = cfg.dt * c**2 * float(np.sum(l2[:-1]))
        free = float(fd[-1]) + integral
        exact_free.append(free)
        m, se = mean_se(arr[:, i, 2] + arr[:, i, 1])
        est_free.append(m)
        se_free.append(se)
        ok.append(_within(m, se, free))
        if spec.noise.is_zero:
            exact_D.append(float(np.max(fd)) + integral)
            ok.append(_within(float(np.mean(arr[:, i, 0] + arr[:, i, 1])), 0.0, exact_D[-1]))
    out = {"sup_free_exact": exact_free, "sup_free_estimate": est_free, "sup_free_se": se_free,
           "bracketed": bool(all(ok))}
    if spec.noise.is_zero:
        out["D_exact"] = exact_D
        use = [i for i, d in enumerate(exact_D) if d > 0]
        out["slope_exact"] = (fit_slope([sum(pairs[i]) for i in use], [exact_D[i] for i in use])[0]
                              if len(use) >= 2 else float("nan"))
    return out


def lambda_cauchy_study(spec: StudySpec) -> StudyReport:
    """``D(lam) = E sup ||X_lam - X_lam/2||^2_{F*} + E dt sum |Psi(X_lam) - Psi(X_lam/2)|^2``."""
    if spec.axis != "lambda":
        raise ValueError("lambda_cauchy_study needs axis='lambda'")
    return _cauchy_study(spec)


def nu_cauchy_study(spec: StudySpec) -> StudyReport:
    """As ``lambda_cauchy_study`` along ``nu`` with the base ``lam`` (normally 0)."""
    if spec.axis != "nu":
        raise ValueError("nu_cauchy_study needs axis='nu'")
    return _cauchy_study(spec)


def run_study(spec: StudySpec) -> StudyReport:
    if spec.axis == "lambda":
        return lambda_cauchy_study(spec)
    if spec.axis == "nu":
        return nu_cauchy_study(spec)
    return dt_refinement_study(spec)


# --------------------------------------------------------------------------- dt refinement


def _dyadic_factors(values, T: float) -> list[int]:
    finest = values[-1]
    factors = []
    for v in values:
        r = v / finest
        f = int(round(r))
        if abs(r - f) > 1e-9 * r or f & (f - 1):
            raise ValueError(f"dt list is not dyadic: {values}")
        factors.append(f)
    for a, b in zip(factors, factors[1:]):
        if a != 2 * b:
            raise ValueError(f"dt list must halve at every step: {values}")
    N = T / finest
    if abs(N - round(N)) > 1e-9 * N:
        raise ValueError(f"finest dt {finest} does not divide T={T}")
    return factors


def dt_refinement_study(spec: StudySpec) -> StudyReport:
    """Refine ``dt`` dyadically with coupled increments.

    Linear ``Psi`` without noise: error against the exact spectral solution,
    slope expected in ``[0.9, 1.1]``.  Otherwise: self-convergence
    ``sqrt(E |X^dt_T - X^{dt/2}_T|^2)`` between consecutive levels, slope
    at least 0.4.
    """
    if spec.axis != "dt":
        raise ValueError("dt_refinement_study needs axis='dt'")
    gen, psi, B, cfg = spec.gen, spec.psi, spec.noise, spec.base
    factors = _dyadic_factors(spec.values, cfg.T)
    finest = spec.values[-1]
    N_fine = int(round(cfg.T / finest))
    c = linear_coefficient(psi)
    exact_mode = c is not None and B.is_zero

    def one(path):
        fine = wiener_increments(spec.seed, path, B.modes, N_fine, finest)
        finals = []
        for dt, f in zip(spec.values, factors):
            run = cfg.replace(dt=dt)
            tr = simulate(gen, psi, B, run, path=path, seed=spec.seed, increments=coarsen(fine, f))
            finals.append(tr.states[-1])
        return np.array(finals)

    finals = np.stack(map_paths(one, spec.paths, spec.threads))  # (paths, levels, n)
    if exact_mode:
        ref = exact_linear_solution(gen, cfg.x, cfg.T, c, cfg.nu, cfg.lam)
        err = [math.sqrt(mean_se(norm_sq(gen, (finals[:, i] - ref).T))[0]) for i in range(len(factors))]
        xs = list(spec.values)
        partners = [0.0] * len(xs)
        lo, hi = DT_EXACT_RANGE
        threshold = lo
        mode = "exact"
    else:
        err = [math.sqrt(mean_se(norm_sq(gen, (finals[:, i] - finals[:, i + 1]).T))[0])
               for i in range(len(factors) - 1)]
        xs = list(spec.values[:-1])
        partners = list(spec.values[1:])
        threshold = DT_SELF_THRESHOLD
        mode = "self"
    positive = len(err) >= 2 and all(e > 0 for e in err)
    slope, hw = fit_slope(xs, err) if positive else (float("nan"), float("nan"))
    if mode == "exact":
        passed = bool(positive and lo <= slope <= hi)
    else:
        passed = bool(positive and slope >= threshold)
    monotone = all(b <= a for a, b in zip(err, err[1:]))
    return StudyReport(
        axis="dt", values=xs, partners=partners, fit_x=xs, D=err, D_se=[float("nan")] * len(err),
        slope=slope, slope_halfwidth=hw, threshold=threshold, passed=passed, paths=spec.paths,
        monotone=monotone, mode=mode,
    )


# --------------------------------------------------------------------------- initial data


@dataclass
class ContractionReport:
    times: np.ndarray
    mean_sq_diff: np.ndarray
    bound: np.ndarray
    rate: float
    per_time_pass: np.ndarray
    min_monotone_pairing: float
    nonincreasing: bool
    oracle: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return bool(np.all(self.per_time_pass))


def initial_data_contraction(gen: Generator, psi: Nonlinearity, B: NoiseOperator, cfg: CascadeConfig,
                             x, y, paths: int = 16, seed: int = 0, threads: int = 1) -> ContractionReport:
    """Mean-square ``F*`` distance of two solutions started at ``x`` and ``y``.

    Compared per time with ``e^{C t} ||x - y||^2_{F*}``,
    ``C = 2 (1 - nu)^2 / alpha_tilde + C_1``.  Also records the smallest
    ``<Psi(X) - Psi(Y), X - Y>_2`` met along the paths, which monotonicity
    keeps nonnegative.
    """
    x = gen.check_field(x, "x")
    y = gen.check_field(y, "y")

    def one(path):
        dW = wiener_increments(seed, path, B.modes, cfg.steps, cfg.dt)
        a = simulate(gen, psi, B, cfg.replace(x=x), path=path, seed=seed, increments=dW).states
        b = simulate(gen, psi, B, cfg.replace(x=y), path=path, seed=seed, increments=dW).states
        d = (a - b).T
        pair = (gen.space.weights[:, None] * (psi(a) - psi(b)).T * d).sum(axis=0)
        return norm_sq(gen, d, "F12dual"), float(pair.min())

    res = map_paths(one, paths, threads)
    sq = np.stack([r[0] for r in res])
    msd = sq.mean(axis=0)
    times = np.arange(cfg.steps + 1) * cfg.dt
    rate = 2.0 * (1.0 - cfg.nu) ** 2 / alpha_tilde(psi) + B.constant(gen)
    d0 = norm_sq(gen, x - y, "F12dual")
    bound = np.exp(rate * times) * d0
    ok = msd <= bound * (1 + 1e-12) + 1e-300
    oracle = None
    c = linear_coefficient(psi)
    if c is not None:
        S = linear_moment_recursion(gen, c, B, cfg.dt, cfg.steps, [(cfg.nu, cfg.lam)], x - y)[:, 0, 0, :]
        oracle = S @ (1.0 / (1.0 + gen.theta))
    return ContractionReport(
        times=times, mean_sq_diff=msd, bound=bound, rate=rate, per_time_pass=ok,
        min_monotone_pairing=min(r[1] for r in res),
        nonincreasing=bool(np.all(np.diff(msd) <= 1e-12 * max(1.0, d0))),
        oracle=oracle,
    )
