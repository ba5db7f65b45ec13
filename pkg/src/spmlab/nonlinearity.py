"""Scalar monotone Lipschitz nonlinearities and their hypothesis checks.

The catalog here is a chosen set of test cases, not a canonical list:
identity, ``c r``, saturation, dead zone, a power law regularized by a
linear tail outside ``[-R, R]``, and user piecewise-linear tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Nonlinearity:
    """``Psi`` with its right derivative and Lipschitz constant.

    ``coercivity`` is ``c`` when ``Psi(r) r >= c r^2`` holds for all ``r``
    and ``None`` otherwise.
    """

    func: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    name: str
    coercivity: float | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.func(np.asarray(r, dtype=float))

    def derivative(self, r):
        return self.deriv(np.asarray(r, dtype=float))

    @property
    def satisfies_coercivity(self) -> bool:
        return self.coercivity is not None and self.coercivity > 0


def identity() -> Nonlinearity:
    return linear(1.0, name="identity")


def linear(c: float, name: str | None = None) -> Nonlinearity:
    if not c > 0:
        raise ValueError("linear slope must be positive")
    return Nonlinearity(
        func=lambda r: c * r,
        deriv=lambda r: np.full(np.shape(r), c),
        lipschitz=float(c),
        name=name or f"linear({c:g})",
        coercivity=float(c),
        params={"c": float(c)},
    )


def saturation(level: float = 1.0) -> Nonlinearity:
    """``clip(r, -level, level)``."""
    a = float(level)
    if not a > 0:
        raise ValueError("saturation level must be positive")
    return Nonlinearity(
        func=lambda r: np.clip(r, -a, a),
        # right derivative: 1 on [-a, a), 0 elsewhere
        deriv=lambda r: ((r >= -a) & (r < a)).astype(float),
        lipschitz=1.0,
        name=f"saturation({a:g})",
        params={"level": a},
    )


def dead_zone(threshold: float = 1.0) -> Nonlinearity:
    """``sign(r) max(|r| - threshold, 0)``."""
    a = float(threshold)
    if not a > 0:
        raise ValueError("dead-zone threshold must be positive")
    return Nonlinearity(
        func=lambda r: np.sign(r) * np.maximum(np.abs(r) - a, 0.0),
        deriv=lambda r: ((r >= a) | (r < -a)).astype(float),
        lipschitz=1.0,
        name=f"dead_zone({a:g})",
        params={"threshold": a},
    )


def porous_medium(m: float = 2.0, radius: float = 2.0) -> Nonlinearity:
    """``sign(r)|r|^m`` on ``[-R, R]`` continued linearly with slope ``m R^{m-1}``.

    Only valid as a porous-medium model on ``[-R, R]``; outside it the tail
    keeps the map globally Lipschitz.
    """
    m = float(m)
    R = float(radius)
    if m < 1:
        raise ValueError("exponent must be >= 1 for a Lipschitz regularization")
    if not R > 0:
        raise ValueError("validity radius must be positive")
    k = m * R ** (m - 1)
    top = R**m

    def func(r):
        a = np.abs(r)
        return np.sign(r) * np.where(a <= R, a**m, top + k * (a - R))

    def deriv(r):
        a = np.abs(r)
        return np.where(a <= R, m * a ** (m - 1), k)

    return Nonlinearity(
        func=func,
        deriv=deriv,
        lipschitz=k,
        name=f"porous_medium({m:g}, R={R:g})",
        coercivity=1.0 if m == 1 else None,
        params={"m": m, "radius": R, "validity_interval": [-R, R]},
    )


def piecewise_linear(breakpoints: Sequence[Sequence[float]], name: str = "table") -> Nonlinearity:
    """Interpolate ``[[r, Psi(r)], ...]``; extrapolate with the boundary slopes.

    No monotonicity or ``Psi(0) = 0`` is enforced here; ``check_h1`` reports
    violations.
    """
    pts = np.array(breakpoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("breakpoints must be a list of at least two [r, psi] pairs")
    if not np.all(np.isfinite(pts)):
        raise ValueError("breakpoints must be finite")
    r, y = pts[:, 0], pts[:, 1]
    if np.any(np.diff(r) <= 0):
        raise ValueError("breakpoint abscissae must be strictly increasing")
    slopes = np.diff(y) / np.diff(r)

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, r, y)
        lo = x < r[0]
        hi = x > r[-1]
        out = np.where(lo, y[0] + slopes[0] * (x - r[0]), out)
        out = np.where(hi, y[-1] + slopes[-1] * (x - r[-1]), out)
        return out

    def deriv(x):
        x = np.asarray(x, dtype=float)
        seg = np.clip(np.searchsorted(r, x, side="right") - 1, 0, slopes.size - 1)
        return slopes[seg]

    k = float(np.max(np.abs(slopes)))
    coercivity = None
    if abs(float(func(0.0))) == 0.0 and k > 0:
        ratios = [y[i] / r[i] for i in range(r.size) if r[i] != 0]
        d0 = [float(deriv(0.0)), float(deriv(np.nextafter(0.0, -1.0)))]
        c = min(ratios + d0 + [slopes[0], slopes[-1]])
        if c > 0:
            coercivity = float(c)
    return Nonlinearity(
        func=func,
        deriv=deriv,
        lipschitz=k if k > 0 else 1.0,
        name=name,
        coercivity=coercivity,
        params={"breakpoints": pts.tolist()},
    )


CATALOG = {
    "identity": lambda: identity(),
    "linear": lambda c=1.0: linear(float(c)),
    "saturation": lambda level=1.0: saturation(float(level)),
    "dead_zone": lambda threshold=1.0: dead_zone(float(threshold)),
    "porous_medium": lambda m=2.0, radius=2.0: porous_medium(float(m), float(radius)),
}


def catalog() -> list[Nonlinearity]:
    """Default instance of every shipped nonlinearity."""
    return [identity(), linear(3.0), saturation(1.0), dead_zone(1.0), porous_medium(2.0, 2.0)]


def nonlinearity_from_dict(spec: dict) -> Nonlinearity:
    if "breakpoints" in spec:
        return piecewise_linear(spec["breakpoints"], name=spec.get("name", "table"))
    kind = spec.get("kind")
    if kind not in CATALOG:
        raise ValueError(f"unknown nonlinearity {kind!r}; expected one of {sorted(CATALOG)} or 'breakpoints'")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        return CATALOG[kind](**params)
    except TypeError:
        raise ValueError(f"unknown parameter for nonlinearity {kind!r}: {sorted(params)}") from None


def alpha_tilde(psi: Nonlinearity) -> float:
    """``1 / (Lip Psi + 1)``, the cocoercivity constant of a monotone ``Psi``."""
    return 1.0 / (psi.lipschitz + 1.0)


def apply_field(psi: Nonlinearity, u) -> np.ndarray:
    return psi(u)


@dataclass
class H1Report:
    name: str
    psi_zero: float
    monotone_violation: float
    lipschitz_measured: float
    lipschitz_claimed: float
    coercivity_measured: float
    coercivity_claimed: float | None
    coercivity_violation: float | None
    cocoercivity_violation: float

    @property
    def passed(self) -> bool:
        """``Psi(0) = 0``, nondecreasing, Lipschitz with the claimed constant."""
        return (
            abs(self.psi_zero) <= 1e-12
            and self.monotone_violation <= 1e-12
            and self.lipschitz_measured <= self.lipschitz_claimed + 1e-9
        )

    @property
    def coercive(self) -> bool:
        return (
            self.coercivity_claimed is not None
            and self.coercivity_claimed > 0
            and self.coercivity_violation is not None
            and self.coercivity_violation <= 1e-12
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "coercive": self.coercive,
            "psi_zero": self.psi_zero,
            "monotone_violation": self.monotone_violation,
            "lipschitz_measured": self.lipschitz_measured,
            "lipschitz_claimed": self.lipschitz_claimed,
            "coercivity_measured": self.coercivity_measured,
            "coercivity_claimed": self.coercivity_claimed,
            "coercivity_violation": self.coercivity_violation,
            "cocoercivity_violation": self.cocoercivity_violation,
        }


def default_grid(radius: float = 10.0, points: int = 4001) -> np.ndarray:
    g = np.linspace(-radius, radius, points)
    return np.union1d(g, [0.0])


def check_h1(psi: Nonlinearity, grid=None, pairs: int = 10_000, seed: int = 0) -> H1Report:
    """Sample ``Psi`` on ``grid`` (must contain 0) plus random pairs.

    Failures are report fields; nothing is raised for a bad ``Psi``.
    """
    g = default_grid() if grid is None else np.unique(np.asarray(grid, dtype=float))
    if g.size == 0 or not np.any(g == 0):
        raise ValueError("sampling grid must be nonempty and contain 0")
    vals = psi(g)
    dg = np.diff(g)
    dv = np.diff(vals)
    mono = float(max(0.0, -np.min(dv))) if dv.size else 0.0
    lip = float(np.max(np.abs(dv) / dg)) if dv.size else 0.0

    rng = np.random.default_rng(seed)
    span = float(np.max(np.abs(g)))
    a = rng.uniform(-span, span, pairs)
    b = rng.uniform(-span, span, pairs)
    pa, pb = psi(a), psi(b)
    diff = a - b
    ok = diff != 0
    if np.any(ok):
        lip = max(lip, float(np.max(np.abs(pa - pb)[ok] / np.abs(diff[ok]))))
        mono = max(mono, float(max(0.0, -np.min((pa - pb) * diff))))
    at = alpha_tilde(psi)
    coco = float(max(0.0, np.max(at * (pa - pb) ** 2 - (pa - pb) * diff)))

    nz = g != 0
    ratio = vals[nz] * g[nz] / g[nz] ** 2
    c_hat = float(np.min(ratio)) if ratio.size else 0.0
    c_viol = None
    if psi.coercivity is not None:
        c_viol = float(max(0.0, np.max(psi.coercivity * g**2 - vals * g)))
    return H1Report(
        name=psi.name,
        psi_zero=float(psi(0.0)),
        monotone_violation=mono,
        lipschitz_measured=lip,
        lipschitz_claimed=psi.lipschitz,
        coercivity_measured=c_hat,
        coercivity_claimed=psi.coercivity,
        coercivity_violation=c_viol,
        cocoercivity_violation=coco,
    )
