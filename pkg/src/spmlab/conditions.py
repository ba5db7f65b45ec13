"""Sampling verifiers for hemicontinuity, weak monotonicity, coercivity and boundedness.

All four concern ``A u = (L - nu) Psi(u)`` on the triple ``V = L^2(mu) ⊂
H = F*_{1,2} ⊂ V*`` together with a noise operator ``B``.  The ``V*``
pairing is evaluated through

    V*<A u, w>_V = -<Psi(u), w>_2 + (1 - nu) <(1 - L)^{-1} Psi(u), w>_2.

Samples are Gaussian in the eigenbasis, scaled by 1, 10 and 100, plus every
eigenfunction and the constant field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import Nonlinearity, alpha_tilde
from .noise import NoiseOperator, hs_norm_sq
from .operators import Generator
from .spaces import norm_sq, riesz_inverse

SLACK = 1e-9
AMPLITUDES = (1.0, 10.0, 100.0)


@dataclass
class ConditionReport:
    condition: str
    samples: int
    constants: dict
    passed: bool | None
    applicable: bool = True
    witnesses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "pass": self.passed,
            "applicable": self.applicable,
            "samples": self.samples,
            "constants": self.constants,
            "worst_case": self.witnesses,
        }


def sample_fields(gen: Generator, count: int, rng) -> list[np.ndarray]:
    """``count`` random fields followed by the eigenfunctions and the constant."""
    n = gen.size
    out = []
    for i in range(count):
        out.append(AMPLITUDES[i % len(AMPLITUDES)] * gen.synthesize(rng.standard_normal(n)))
    out.extend(gen.basis[:, j].copy() for j in range(n))
    out.append(np.ones(n))
    return out


def _pairing_matrix(gen: Generator, nu: float, P: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``V*<(L - nu) P[:, j], w>_V`` for every column of ``P``."""
    mw = gen.space.weights * w
    return -(mw @ P) + (1.0 - nu) * (mw @ riesz_inverse(gen, P))


def _bound_factor(nu: float) -> float:
    return max(2.0, 1.0 + abs(1.0 - nu))


def check_hemicontinuity(gen: Generator, psi: Nonlinearity, nu: float, samples: int = 1000,
                         seed: int = 0, triples=None, levels: int = 20) -> ConditionReport:
    """Deviation of ``lam -> V*<A(u + lam v), w>`` from its value at 0.

    Passes when every deviation at ``lam = ±2^-j`` stays inside the Lipschitz
    envelope ``k |lam| |v|_2 2 |w|_2``.  This quantitative test is stronger
    than continuity.
    """
    rng = np.random.default_rng(seed)
    if triples is None:
        us = sample_fields(gen, samples, rng)
        triples = [(u, AMPLITUDES[i % 3] * gen.synthesize(rng.standard_normal(gen.size)),
                    gen.synthesize(rng.standard_normal(gen.size))) for i, u in enumerate(us)]
    lams = 2.0 ** -np.arange(1, levels + 1)
    lams = np.concatenate([lams, -lams])
    k = psi.lipschitz
    factor = _bound_factor(nu)
    worst_ratio = 0.0
    last_dev = 0.0
    witness = {}
    for u, v, w in triples:
        # lam = 0 goes through the same evaluation so v = 0 gives exactly zero
        steps = np.concatenate([[0.0], lams])
        vals = _pairing_matrix(gen, nu, psi(u[:, None] + v[:, None] * steps[None, :]), w)
        dev = np.abs(vals[1:] - vals[0])
        env = k * np.abs(lams) * np.sqrt(norm_sq(gen, v)) * factor * np.sqrt(norm_sq(gen, w))
        last_dev = max(last_dev, float(dev[levels - 1]))
        over = dev - env
        if np.any(env > 0):
            r = float(np.max(dev[env > 0] / env[env > 0]))
            if r > worst_ratio:
                worst_ratio = r
                witness = {"u": u.tolist(), "v": v.tolist(), "w": w.tolist()}
        if np.any(over > SLACK * np.maximum(1.0, env)):
            witness["violation"] = float(np.max(over))
    passed = "violation" not in witness
    return ConditionReport(
        condition="hemicontinuity",
        samples=len(triples),
        constants={"max_envelope_ratio": worst_ratio, "deviation_at_smallest_step": last_dev},
        passed=passed,
        witnesses=witness,
    )


def check_weak_monotonicity(gen: Generator, psi: Nonlinearity, B: NoiseOperator, nu: float,
                            samples: int = 1000, seed: int = 0, pairs=None, T: float = 1.0) -> ConditionReport:
    """``2 V*<Au - Av, u - v>_V + ||B(u) - B(v)||^2 <= K ||u - v||^2_{F*}``.

    ``K = 2 (1 - nu)^2 / alpha_tilde + C_1``; the report carries the largest
    observed ratio.  Pairs with ``u = v`` are skipped.
    """
    rng = np.random.default_rng(seed)
    if pairs is None:
        us = sample_fields(gen, samples, rng)
        pairs = [(u, AMPLITUDES[i % 3] * gen.synthesize(rng.standard_normal(gen.size))) for i, u in enumerate(us)]
        pairs += [(u, np.zeros(gen.size)) for u in us[samples:]]
    C1 = B.constant(gen)
    at = alpha_tilde(psi)
    bound = 2.0 * (1.0 - nu) ** 2 / at + C1
    worst = -np.inf
    witness = {}
    used = 0
    for u, v in pairs:
        d = u - v
        dn = norm_sq(gen, d, "F12dual")
        if dn == 0:
            continue
        used += 1
        t = float(rng.uniform(0.0, T))
        a = psi(u) - psi(v)
        lhs = 2.0 * float(_pairing_matrix(gen, nu, a[:, None], d)[0]) + hs_norm_sq(gen, B, t, d)
        ratio = lhs / dn
        if ratio > worst:
            worst = ratio
            witness = {"u": u.tolist(), "v": v.tolist(), "t": t, "ratio": ratio}
    return ConditionReport(
        condition="weak_monotonicity",
        samples=used,
        constants={"K_monotone": float(worst), "K_bound": bound, "alpha_tilde": at, "C1": C1},
        passed=bool(worst <= bound + SLACK),
        witnesses=witness,
    )


def check_coercivity(gen: Generator, psi: Nonlinearity, B: NoiseOperator, nu: float,
                     samples: int = 1000, seed: int = 0, fields=None, T: float = 1.0) -> ConditionReport:
    """``2 V*<Au, u>_V + ||B(u)||^2 <= -delta |u|_2^2 + K ||u||^2_{F*}``.

    Only meaningful when ``Psi(r) r >= c r^2``.  With
    ``eps^2 = c / (2 k^2 |1 - nu|)`` the ``|u|_2^2`` coefficient is ``-c``
    and ``K = 2 |1 - nu| / eps^2 + C_2``.
    """
    if not psi.satisfies_coercivity:
        return ConditionReport(
            condition="coercivity", samples=0, constants={}, passed=None, applicable=False,
            witnesses={"reason": f"{psi.name} does not satisfy Psi(r) r >= c r^2 with c > 0"},
        )
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = sample_fields(gen, samples, rng)
    c, k = psi.coercivity, psi.lipschitz
    C2 = B.constant(gen)
    gap = abs(1.0 - nu)
    if gap == 0:
        eps2 = np.inf
        coef_l2, coef_dual = -2.0 * c, C2
    else:
        eps2 = c / (2.0 * k**2 * gap)
        coef_l2 = -2.0 * c + 2.0 * eps2 * k**2 * gap
        coef_dual = 2.0 * gap / eps2 + C2
    margin = np.inf
    witness = {}
    used = 0
    violated = False
    for u in fields:
        l2 = norm_sq(gen, u)
        if l2 == 0:
            continue
        used += 1
        t = float(rng.uniform(0.0, T))
        lhs = 2.0 * float(_pairing_matrix(gen, nu, psi(u)[:, None], u)[0]) + hs_norm_sq(gen, B, t, u)
        rhs = coef_l2 * l2 + coef_dual * norm_sq(gen, u, "F12dual")
        m = (rhs - lhs) / l2
        if m < margin:
            margin = m
            witness = {"u": u.tolist(), "t": t, "lhs": lhs, "rhs": rhs}
        if m < -SLACK:
            violated = True
    return ConditionReport(
        condition="coercivity",
        samples=used,
        constants={"delta_coercive": -coef_l2, "K_coercive": coef_dual, "eps_sq": eps2,
                   "min_normalized_margin": float(margin), "C2": C2},
        passed=not violated,
        witnesses=witness,
    )


def check_boundedness(gen: Generator, psi: Nonlinearity, nu: float, samples: int = 1000,
                      seed: int = 0, fields=None) -> ConditionReport:
    """``|Au|_{V*} <= 2 k |u|_2``, the dual norm taken as a supremum over ``|v|_2 = 1``.

    The functional ``v -> V*<Au, v>`` is ``<r, v>_2`` with
    ``r = -Psi(u) + (1 - nu)(1 - L)^{-1} Psi(u)``; the supremum is evaluated
    at its maximizer ``v = r / |r|_2``.
    """
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = sample_fields(gen, samples, rng)
    bound = _bound_factor(nu) * psi.lipschitz
    worst = 0.0
    witness = {}
    used = 0
    for u in fields:
        l2 = np.sqrt(norm_sq(gen, u))
        if l2 == 0:
            continue
        used += 1
        p = psi(u)
        r = -p + (1.0 - nu) * riesz_inverse(gen, p)
        rn = np.sqrt(norm_sq(gen, r))
        sup = 0.0 if rn == 0 else float(_pairing_matrix(gen, nu, p[:, None], r / rn)[0])
        ratio = sup / l2
        if ratio > worst:
            worst = ratio
            witness = {"u": u.tolist(), "ratio": ratio}
    return ConditionReport(
        condition="boundedness",
        samples=used,
        constants={"bound_ratio": worst, "bound": bound},
        passed=bool(worst <= bound + SLACK),
        witnesses=witness,
    )


def check_all(gen: Generator, psi: Nonlinearity, B: NoiseOperator, nu: float, samples: int = 1000,
              seed: int = 0, T: float = 1.0) -> list[ConditionReport]:
    return [
        check_hemicontinuity(gen, psi, nu, samples, seed),
        check_weak_monotonicity(gen, psi, B, nu, samples, seed + 1, T=T),
        check_coercivity(gen, psi, B, nu, samples, seed + 2, T=T),
        check_boundedness(gen, psi, nu, samples, seed + 3),
    ]
