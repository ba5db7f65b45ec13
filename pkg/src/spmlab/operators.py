"""Finite measure spaces, sub-Markovian generators and their spectral calculus.

A generator ``L`` on a finite atomic measure space is stored through the
eigendecomposition of its symmetrization ``D^{1/2} M D^{-1/2}`` where
``D = diag(mu)`` and ``M`` is the matrix acting on coefficient vectors.  The
columns ``phi_k = D^{-1/2} q_k`` are then orthonormal in ``L^2(mu)`` and every
function of ``L`` (semigroup, resolvent, fractional power, gamma transform)
is a diagonal multiplier in that basis.

Eigenvalues of ``L`` are ``-theta_k`` with ``theta_k >= 0``; this module
works with ``theta`` throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

MAX_SITES = 1024

# Relative tolerance for accepting slightly negative theta from roundoff.
_PSD_TOL = 1e-9
# |theta| below this (relative to max theta) is roundoff of a zero eigenvalue;
# it must be exactly 0 or fractional powers turn 1e-16 into 1e-8.
_ZERO_TOL = 1e-11


@dataclass(frozen=True)
class MeasureSpace:
    """Finite set of atoms with strictly positive masses."""

    weights: np.ndarray
    points: tuple = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size < 1:
            raise ValueError("measure space needs at least one site")
        if w.size > MAX_SITES:
            raise ValueError(f"at most {MAX_SITES} sites are supported, got {w.size}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        pts = tuple(self.points) if self.points else tuple(range(w.size))
        if len(pts) != w.size:
            raise ValueError("points and weights differ in length")
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.weights.size

    def inner(self, u, v) -> float:
        """Weighted inner product <u, v>_2 = sum_i mu_i u_i v_i."""
        return float(np.dot(self.weights * u, v))


@dataclass(frozen=True)
class ConductanceGraph:
    """Jump conductances ``c_ij`` and killing rates ``k_i`` on a measure space."""

    space: MeasureSpace
    conductances: np.ndarray
    killing: np.ndarray = None

    def __post_init__(self):
        n = self.space.size
        c = np.array(self.conductances, dtype=float)
        if c.shape != (n, n):
            raise ValueError(f"conductances must be {n}x{n}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("conductances must be finite")
        if np.any(c < 0):
            raise ValueError("conductances must be nonnegative")
        if not np.array_equal(c, c.T):
            raise ValueError("conductances must be symmetric")
        if np.any(np.diag(c) != 0):
            raise ValueError("conductances must vanish on the diagonal")
        k = np.zeros(n) if self.killing is None else np.array(self.killing, dtype=float).reshape(-1)
        if k.shape != (n,):
            raise ValueError(f"killing must have length {n}")
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValueError("killing must be finite and nonnegative")
        c.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "conductances", c)
        object.__setattr__(self, "killing", k)

    @classmethod
    def from_edges(cls, space: MeasureSpace, edges: Sequence, killing=None) -> "ConductanceGraph":
        """Build from ``[i, j, c]`` triples; a pair listed twice must agree."""
        n = space.size
        c = np.zeros((n, n))
        seen = {}
        for entry in edges:
            if len(entry) != 3:
                raise ValueError(f"edge entries are [i, j, c], got {entry!r}")
            i, j, w = int(entry[0]), int(entry[1]), float(entry[2])
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for {n} sites")
            if i == j:
                raise ValueError(f"self-loop at site {i}")
            if (i, j) in seen and seen[(i, j)] != w:
                raise ValueError(f"conflicting conductances for edge ({i}, {j})")
            if (j, i) in seen and seen[(j, i)] != w:
                raise ValueError(f"non-symmetric conductances on edge ({i}, {j})")
            seen[(i, j)] = w
            c[i, j] = w
            c[j, i] = w
        return cls(space, c, killing)

    def matrix(self) -> np.ndarray:
        """Assembled ``(Lu)_i = mu_i^{-1} [sum_j c_ij (u_j - u_i) - k_i u_i]``."""
        c = self.conductances
        m = c - np.diag(c.sum(axis=1) + self.killing)
        return m / self.space.weights[:, None]


class Generator:
    """Self-adjoint, negative semidefinite generator on a finite measure space.

    Parameters
    ----------
    space : MeasureSpace
    theta : array_like
        Nonnegative spectral values; the eigenvalues of ``L`` are ``-theta``.
    basis : ndarray
        Columns ``phi_k`` orthonormal in ``L^2(mu)``.
    kind : str
        Provenance tag (``conductance``, ``weighted``, ``fractional(a)``, ``custom``).
    meta : dict, optional
        Builder metadata, e.g. ``{"killing_free": True}``.
    """

    def __init__(self, space: MeasureSpace, theta, basis, kind: str = "custom", meta: dict | None = None):
        theta = np.array(theta, dtype=float)
        basis = np.array(basis, dtype=float)
        n = space.size
        if theta.shape != (n,) or basis.shape != (n, n):
            raise ValueError("spectral data does not match the measure space")
        if np.any(theta < 0):
            raise ValueError("generator must be negative semidefinite")
        sq = np.sqrt(space.weights)
        self.space = space
        self.theta = theta
        self.basis = basis
        self.kind = kind
        self.meta = dict(meta or {})
        # u -> coefficients <u, phi_k>_2 and back
        self._analysis = basis.T * space.weights
        self._synthesis = basis
        self._sqrt_weights = sq
        for arr in (self.theta, self.basis, self._analysis):
            arr.setflags(write=False)
        self._matrix = None

    @classmethod
    def from_matrix(cls, space: MeasureSpace, matrix, kind: str = "custom", meta: dict | None = None) -> "Generator":
        """Eigendecompose a matrix that is self-adjoint in ``L^2(mu)``.

        Raises ``ValueError`` if ``diag(mu) M`` is not symmetric or if the
        spectrum has a positive part beyond roundoff.
        """
        m = np.array(matrix, dtype=float)
        n = space.size
        if m.shape != (n, n):
            raise ValueError(f"matrix must be {n}x{n}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix must be finite")
        dm = space.weights[:, None] * m
        scale = max(1.0, float(np.max(np.abs(dm))))
        if np.max(np.abs(dm - dm.T)) > 1e-12 * scale:
            raise ValueError("matrix is not self-adjoint in the weighted inner product")
        sq = np.sqrt(space.weights)
        sym = sq[:, None] * m / sq[None, :]
        sym = 0.5 * (sym + sym.T)
        evals, q = np.linalg.eigh(sym)
        theta = -evals[::-1]
        q = q[:, ::-1]
        tscale = max(1.0, float(np.max(np.abs(theta))))
        if np.min(theta) < -_PSD_TOL * tscale:
            raise ValueError("generator has a positive eigenvalue; not negative semidefinite")
        theta = np.where(theta <= _ZERO_TOL * tscale, 0.0, theta)
        gen = cls(space, theta, q / sq[:, None], kind=kind, meta=meta)
        gen._matrix = m
        gen._matrix.setflags(write=False)
        return gen

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return -self.theta

    @property
    def matrix(self) -> np.ndarray:
        """Matrix of ``L`` acting on coefficient vectors."""
        if self._matrix is None:
            m = self._synthesis @ (-self.theta[:, None] * self._analysis)
            m.setflags(write=False)
            self._matrix = m
        return self._matrix

    def coefficients(self, u) -> np.ndarray:
        """Spectral coefficients ``<u, phi_k>_2``; ``u`` may be ``(n,)`` or ``(n, m)``."""
        return self._analysis @ u

    def synthesize(self, coef) -> np.ndarray:
        return self._synthesis @ coef

    def spectral_apply(self, multiplier, u) -> np.ndarray:
        """Apply ``f(-L)`` given the values ``f(theta_k)`` (array) or a callable."""
        vals = multiplier(self.theta) if callable(multiplier) else np.asarray(multiplier)
        coef = self._analysis @ u
        if coef.ndim == 2:
            return self._synthesis @ (vals[:, None] * coef)
        return self._synthesis @ (vals * coef)

    def spectral_matrix(self, multiplier) -> np.ndarray:
        vals = multiplier(self.theta) if callable(multiplier) else np.asarray(multiplier)
        return self._synthesis @ (vals[:, None] * self._analysis)

    def apply(self, u) -> np.ndarray:
        """``Lu`` through the eigendecomposition."""
        return self.spectral_apply(-self.theta, u)

    def check_field(self, u, name: str = "u") -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        if arr.shape != (self.size,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({self.size},)")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} has non-finite entries")
        return arr

    def __repr__(self):
        return f"Generator(kind={self.kind!r}, n={self.size}, theta_max={self.theta.max():.4g})"


def build_conductance_generator(graph: ConductanceGraph) -> Generator:
    killing_free = bool(np.all(graph.killing == 0))
    return Generator.from_matrix(
        graph.space, graph.matrix(), kind="conductance", meta={"killing_free": killing_free}
    )


def path_graph(n: int, conductance: float = 1.0, weights=None, killing=None) -> ConductanceGraph:
    """Nearest-neighbour chain with uniform conductance (Neumann ends)."""
    space = MeasureSpace(np.ones(n) if weights is None else weights)
    c = np.zeros((n, n))
    idx = np.arange(n - 1)
    c[idx, idx + 1] = conductance
    c[idx + 1, idx] = conductance
    return ConductanceGraph(space, c, killing)


def weighted_conductance_graph(density, h: float = 1.0) -> ConductanceGraph:
    """Graph realizing ``int u' v' rho^2 dx`` on ``L^2(rho^2 dx)`` over a 1D grid.

    Site masses are ``rho_i^2 h`` and edge conductances ``rho_edge^2 / h`` with
    ``rho_edge^2`` the arithmetic mean of the endpoint values of ``rho^2``.
    """
    rho = np.asarray(density, dtype=float).reshape(-1)
    if not h > 0 or not math.isfinite(h):
        raise ValueError("grid spacing h must be positive")
    if rho.size < 1 or not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise ValueError("density must be strictly positive")
    r2 = rho**2
    space = MeasureSpace(r2 * h)
    n = rho.size
    c = np.zeros((n, n))
    edge = 0.5 * (r2[:-1] + r2[1:]) / h
    idx = np.arange(n - 1)
    c[idx, idx + 1] = edge
    c[idx + 1, idx] = edge
    return ConductanceGraph(space, c)


def build_weighted_generator(density, h: float = 1.0) -> Generator:
    """Discrete ``L u = u'' + 2 (rho'/rho) u'`` on ``L^2(rho^2 dx)`` (Neumann)."""
    graph = weighted_conductance_graph(density, h)
    return Generator.from_matrix(graph.space, graph.matrix(), kind="weighted", meta={"killing_free": True, "h": h})


def fractional_power(gen: Generator, alpha: float) -> Generator:
    """``-(-L)^alpha`` on the same eigenbasis; ``alpha = 1`` returns ``gen``."""
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return gen
    meta = dict(gen.meta, alpha=alpha, base_kind=gen.kind)
    return Generator(gen.space, gen.theta**alpha, gen.basis, kind=f"fractional({alpha:g})", meta=meta)


def semigroup_apply(gen: Generator, t: float, u) -> np.ndarray:
    """``P_t u = e^{tL} u``."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return np.array(u, dtype=float, copy=True)
    return gen.spectral_apply(np.exp(-gen.theta * t), u)


def semigroup_matrix(gen: Generator, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    return gen.spectral_matrix(np.exp(-gen.theta * t))


def resolvent_apply(gen: Generator, alpha: float, u, power: float = 1.0) -> np.ndarray:
    """``(alpha - L)^{-power} u`` for ``alpha > 0``."""
    if not alpha > 0:
        raise ValueError("resolvent parameter must be positive")
    return gen.spectral_apply((alpha + gen.theta) ** (-power), u)


def gamma_transform(gen: Generator, r: float, f) -> np.ndarray:
    """Gamma transform ``V_r f = (1 - L)^{-r/2} f`` in closed form."""
    if not r > 0:
        raise ValueError("gamma transform order must be positive")
    return gen.spectral_apply((1.0 + gen.theta) ** (-0.5 * r), f)


def gamma_transform_quadrature(gen: Generator, r: float, f, x_min: float = -30.0,
                               x_max: float = 30.0, step: float = 0.05) -> np.ndarray:
    """Gamma transform from its integral definition.

    ``Gamma(r/2)^{-1} int_0^inf s^{r/2-1} e^{-s} P_s f ds`` with ``s = e^x`` and a
    truncated trapezoid rule on ``[x_min, x_max]``.  ``P_s f`` is evaluated at
    every node; nothing here uses the closed form.  The part of the integral
    below ``s = e^{x_min}`` is added as ``(2/r) e^{r x_min / 2} f`` since
    ``P_s f -> f`` there.
    """
    if not r > 0:
        raise ValueError("gamma transform order must be positive")
    f = np.asarray(f, dtype=float)
    xs = np.arange(x_min, x_max + 0.5 * step, step)
    s = np.exp(xs)
    w = np.exp(0.5 * r * xs - s)
    w[0] *= 0.5
    w[-1] *= 0.5
    acc = np.zeros_like(f)
    for wi, si in zip(w, s):
        if wi == 0.0:
            continue
        acc += wi * semigroup_apply(gen, si, f)
    tail = (2.0 / r) * math.exp(0.5 * r * x_min) * f
    return (step * acc + tail) / gamma_fn(0.5 * r)


@dataclass
class SubMarkovReport:
    times: list
    min_entry: list = field(default_factory=list)
    max_row_sum: list = field(default_factory=list)
    min_row_sum: list = field(default_factory=list)
    killing_free: bool = False
    tol: float = 1e-12

    @property
    def passed(self) -> bool:
        ok = all(m >= -self.tol for m in self.min_entry)
        ok &= all(s <= 1 + self.tol for s in self.max_row_sum)
        if self.killing_free:
            ok &= all(s >= 1 - self.tol for s in self.min_row_sum)
        return ok

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "min_entry": self.min_entry,
            "max_row_sum": self.max_row_sum,
            "min_row_sum": self.min_row_sum,
            "killing_free": self.killing_free,
            "pass": self.passed,
        }


def check_sub_markov(gen: Generator, times=(0.01, 0.1, 1.0, 10.0), tol: float = 1e-12,
                     semigroup: Callable | None = None) -> SubMarkovReport:
    """Positivity and ``P_t 1 <= 1`` for the semigroup at each time.

    Positivity for all ``f >= 0`` is equivalent to nonnegative matrix entries,
    so the matrix of ``P_t`` is inspected directly.
    """
    semigroup = semigroup or semigroup_matrix
    rep = SubMarkovReport(times=list(times), killing_free=bool(gen.meta.get("killing_free", False)), tol=tol)
    for t in times:
        p = semigroup(gen, t)
        rows = p.sum(axis=1)
        rep.min_entry.append(float(p.min()))
        rep.max_row_sum.append(float(rows.max()))
        rep.min_row_sum.append(float(rows.min()))
    return rep


def generator_from_dict(spec: dict) -> Generator:
    """Build a generator from the JSON operator document.

    ``{"kind": "conductance" | "weighted" | "fractional", ...}``; see the
    README for the field list.
    """
    kind = spec.get("kind")
    if kind == "weighted":
        if "density" not in spec:
            raise ValueError("weighted generator needs 'density'")
        return build_weighted_generator(spec["density"], float(spec.get("h", 1.0)))
    if kind not in ("conductance", "fractional"):
        raise ValueError(f"unknown generator kind {kind!r}")
    graph = graph_from_dict(spec)
    gen = build_conductance_generator(graph)
    if kind == "fractional":
        if "alpha" not in spec:
            raise ValueError("fractional generator needs 'alpha'")
        gen = fractional_power(gen, float(spec["alpha"]))
    return gen


def graph_from_dict(spec: dict) -> ConductanceGraph:
    if "path" in spec:
        n = int(spec["path"])
        weights = spec.get("weights", np.ones(n))
        space = MeasureSpace(weights)
        value = float(spec.get("conductance", 1.0))
        if value < 0:
            raise ValueError("conductances must be nonnegative")
        edges = [[i, i + 1, value] for i in range(n - 1)]
        return ConductanceGraph.from_edges(space, edges, spec.get("killing"))
    if "weights" not in spec:
        raise ValueError("conductance generator needs 'weights'")
    space = MeasureSpace(spec["weights"])
    for e in spec.get("conductances", []):
        if len(e) == 3 and float(e[2]) < 0:
            raise ValueError(f"conductances must be nonnegative, got {e[2]} on edge ({e[0]}, {e[1]})")
    return ConductanceGraph.from_edges(space, spec.get("conductances", []), spec.get("killing"))
