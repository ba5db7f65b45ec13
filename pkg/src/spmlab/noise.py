"""Truncated cylindrical Wiener process and linear multiplicative noise.

The noise acts as ``B(t, u) h = sum_k g_k(t) <h, phi_k>_2 Gamma_k u`` where
``phi_k`` are the first ``K`` eigenfunctions of the generator and each
``Gamma_k = gamma_k(-L)`` is a spectral multiplier.  Because all the
``Gamma_k`` commute with ``L``, one Euler increment collapses into a single
multiplier ``sum_k g_k(t) dW_k gamma_k(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .operators import Generator


@dataclass(frozen=True)
class TimeFactor:
    """Deterministic bounded ``g(t)``: ``const`` or ``value (1 + sin(2 pi t / period) / 2)``."""

    kind: str = "const"
    value: float = 1.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("const", "sin"):
            raise ValueError(f"unknown time factor {self.kind!r}")
        if not math.isfinite(self.value):
            raise ValueError("time factor value must be finite")
        if self.kind == "sin" and not self.period > 0:
            raise ValueError("sinusoidal time factor needs a positive period")

    def __call__(self, t: float) -> float:
        if self.kind == "const":
            return self.value
        return self.value * (1.0 + 0.5 * math.sin(2.0 * math.pi * t / self.period))

    def sup_sq(self) -> float:
        if self.kind == "const":
            return self.value**2
        return (1.5 * self.value) ** 2


@dataclass(frozen=True)
class SpectralMultiplier:
    """``gamma(theta)``: ``one`` (identity) or ``resolvent`` ``(1 + theta)^{-power}``."""

    kind: str = "one"
    power: float = 1.0

    def __post_init__(self):
        if self.kind not in ("one", "resolvent"):
            raise ValueError(f"unknown spectral multiplier {self.kind!r}")
        if self.kind == "resolvent" and not self.power >= 0:
            raise ValueError("resolvent power must be nonnegative")

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kind == "one":
            return np.ones_like(theta)
        return (1.0 + theta) ** (-self.power)


@dataclass(frozen=True)
class NoiseOperator:
    g: tuple
    gamma: tuple

    def __post_init__(self):
        if len(self.g) != len(self.gamma) or len(self.g) < 1:
            raise ValueError("need one time factor and one multiplier per mode")
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "gamma", tuple(self.gamma))

    @property
    def modes(self) -> int:
        return len(self.g)

    @classmethod
    def zero(cls) -> "NoiseOperator":
        return cls((TimeFactor("const", 0.0),), (SpectralMultiplier("one"),))

    @classmethod
    def rank_one(cls, amplitude: float, multiplier: SpectralMultiplier | None = None) -> "NoiseOperator":
        return cls((TimeFactor("const", float(amplitude)),), (multiplier or SpectralMultiplier("one"),))

    @property
    def is_zero(self) -> bool:
        return all(g.kind == "const" and g.value == 0 for g in self.g)

    @property
    def time_independent(self) -> bool:
        return all(g.kind == "const" for g in self.g)

    def bind_check(self, gen: Generator):
        if self.modes > gen.size:
            raise ValueError(f"noise has {self.modes} modes but the space has {gen.size} sites")

    def mode_gains(self, gen: Generator, t: float) -> np.ndarray:
        """``(K, n)`` array of ``g_k(t) gamma_k(theta_j)``."""
        return np.array([g(t) * gm(gen.theta) for g, gm in zip(self.g, self.gamma)])

    def constant(self, gen: Generator) -> float:
        """Claimed ``C_1 = C_2 = sum_k sup_t g_k^2 ||Gamma_k||^2_{op}``."""
        return float(sum(g.sup_sq() * np.max(gm(gen.theta) ** 2) for g, gm in zip(self.g, self.gamma)))


def hs_norm_sq(gen: Generator, B: NoiseOperator, t: float, u) -> float:
    """``sum_k ||B(t, u) phi_k||^2_{F*}`` in closed spectral form."""
    u = gen.check_field(u)
    B.bind_check(gen)
    c = gen.coefficients(u)
    gains = B.mode_gains(gen, t)
    return float(np.sum((gains**2).sum(axis=0) * c**2 / (1.0 + gen.theta)))


def hs_norm_sq_modes(gen: Generator, B: NoiseOperator, t: float, u) -> float:
    """Same quantity by summing over the orthonormal basis explicitly."""
    from .spaces import norm_sq

    u = gen.check_field(u)
    total = 0.0
    for j in range(gen.size):
        e = gen.basis[:, j]
        total += norm_sq(gen, apply_operator(gen, B, t, u, e), "F12dual")
    return total


def apply_operator(gen: Generator, B: NoiseOperator, t: float, u, h) -> np.ndarray:
    """``B(t, u) h`` for an ``L^2`` direction ``h``."""
    proj = gen.coefficients(np.asarray(h, dtype=float))[: B.modes]
    return diffuse(gen, B, t, u, proj)


def diffuse(gen: Generator, B: NoiseOperator, t: float, u, dW) -> np.ndarray:
    """One stochastic increment ``B(t, u) dW = sum_k g_k(t) dW_k Gamma_k u``."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (B.modes,):
        raise ValueError(f"expected {B.modes} Wiener increments, got shape {dW.shape}")
    mult = dW @ B.mode_gains(gen, t)
    return gen.spectral_apply(mult, u)


@dataclass(frozen=True)
class WienerSpec:
    modes: int
    seed: int
    dt: float

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("need at least one Wiener mode")
        if not self.dt > 0:
            raise ValueError("increment length must be positive")

    def increments(self, path: int, steps: int) -> np.ndarray:
        return wiener_increments(self.seed, path, self.modes, steps, self.dt)


def standard_normals(seed: int, path: int, mode: int, steps: int) -> np.ndarray:
    """Normals for one ``(seed, path, mode)`` stream, indexed by step.

    A Philox counter generator is keyed by the tuple; uniforms are mapped to
    the open unit interval and pushed through the inverse normal CDF, so
    entry ``n`` depends on ``(seed, path, mode, n)`` only.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(path), int(mode)])
    gen = np.random.Generator(np.random.Philox(ss))
    u = gen.random(steps) + 2.0**-54
    return ndtri(u)


def wiener_increments(seed: int, path: int, modes: int, steps: int, dt: float) -> np.ndarray:
    """``(steps, modes)`` array of i.i.d. ``N(0, dt)`` increments."""
    z = np.empty((steps, modes))
    for k in range(modes):
        z[:, k] = standard_normals(seed, path, k, steps)
    return math.sqrt(dt) * z


def coarsen(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` fine increments."""
    steps = dW.shape[0]
    if factor < 1 or steps % factor:
        raise ValueError(f"cannot coarsen {steps} steps by {factor}")
    return dW.reshape(steps // factor, factor, *dW.shape[1:]).sum(axis=1)


@dataclass
class H2Report:
    c1_measured: float
    c2_measured: float
    c1_claimed: float
    c2_claimed: float
    samples: int
    worst_case: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.c1_measured <= self.c1_claimed + 1e-9 and self.c2_measured <= self.c2_claimed + 1e-9

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "samples": self.samples,
            "constants": {
                "C1_measured": self.c1_measured,
                "C2_measured": self.c2_measured,
                "C1_claimed": self.c1_claimed,
                "C2_claimed": self.c2_claimed,
            },
            "worst_case": self.worst_case,
        }


def _probe_times(B: NoiseOperator, T: float, rng) -> list:
    ts = [0.0]
    for g in B.g:
        if g.kind == "sin":
            ts.append(0.25 * g.period)
    ts.extend(rng.uniform(0.0, T, 4).tolist())
    return ts


def verify_h2(gen: Generator, B: NoiseOperator, samples: int, seed: int = 0, T: float = 1.0) -> H2Report:
    """Measure the Lipschitz and growth ratios of ``B`` in ``L_2(L^2, F*)``.

    Random pairs are supplemented by every eigenfunction, where suprema of
    spectral operators are attained.
    """
    from .spaces import norm_sq

    if samples < 1:
        raise ValueError("need at least one sample")
    B.bind_check(gen)
    rng = np.random.default_rng(seed)
    times = _probe_times(B, T, rng)
    c1 = c2 = 0.0
    worst = {}
    n = gen.size
    us = [gen.synthesize(rng.standard_normal(n)) for _ in range(samples)]
    vs = [gen.synthesize(rng.standard_normal(n)) for _ in range(samples)]
    # eigenmodes are also used as differences (v = 0) so both suprema see them
    us += [gen.basis[:, j].copy() for j in range(n)]
    vs += [np.zeros(n)] * n
    for u, v in zip(us, vs):
        d = u - v
        du = norm_sq(gen, u, "F12dual")
        dd = norm_sq(gen, d, "F12dual")
        for t in times:
            if du > 0:
                r2 = hs_norm_sq(gen, B, t, u) / du
                if r2 > c2:
                    c2 = r2
                    worst["C2"] = {"t": t, "u": u.tolist()}
            if dd > 0:
                # B(u) - B(v) as an operator, mode by mode
                gains = B.mode_gains(gen, t)
                cd = gen.coefficients(u) - gen.coefficients(v)
                r1 = float(np.sum((gains**2).sum(axis=0) * cd**2 / (1.0 + gen.theta))) / dd
                if r1 > c1:
                    c1 = r1
                    worst["C1"] = {"t": t}
    C = B.constant(gen)
    return H2Report(c1_measured=c1, c2_measured=c2, c1_claimed=C, c2_claimed=C, samples=len(us), worst_case=worst)


def _time_factor(d) -> TimeFactor:
    return TimeFactor(kind=d.get("kind", "const"), value=float(d.get("value", 1.0)),
                      period=float(d.get("period", 1.0)))


def _multiplier(d) -> SpectralMultiplier:
    return SpectralMultiplier(kind=d.get("kind", "one"), power=float(d.get("power", 1.0)))


def noise_from_dict(spec: dict | None, horizon: float = 1.0) -> NoiseOperator:
    """``{"modes": K, "g": [...], "gamma": [...]}``; single entries broadcast to ``K``."""
    if spec is None or spec.get("kind") == "zero":
        return NoiseOperator.zero()
    K = int(spec.get("modes", 1))
    if K < 1:
        raise ValueError("noise modes must be a positive integer")
    gs = spec.get("g", [{"kind": "const", "value": 1.0}])
    gms = spec.get("gamma", [{"kind": "one"}])
    if len(gs) == 1:
        gs = gs * K
    if len(gms) == 1:
        gms = gms * K
    if len(gs) != K or len(gms) != K:
        raise ValueError(f"noise 'g' and 'gamma' must have 1 or {K} entries")
    g = []
    for d in gs:
        d = dict(d)
        if d.get("kind") == "sin":
            d.setdefault("period", horizon)
        g.append(_time_factor(d))
    return NoiseOperator(tuple(g), tuple(_multiplier(d) for d in gms))
