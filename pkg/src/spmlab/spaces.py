"""Norms and pairings of the triple ``L^2(mu) ⊂ F*_{1,2} ⊂ (L^2(mu))*``.

Fields are plain coefficient vectors; which space a vector is read in is
decided by the norm requested at the call site.  With ``u_k = <u, phi_k>_2``:

* ``|u|_2^2            = sum u_k^2``
* ``||u||_{F}^2        = sum (1 + theta_k) u_k^2``
* ``||u||_{F*}^2       = sum (1 + theta_k)^{-1} u_k^2``
* ``||u||_{F*,nu}^2    = sum (nu + theta_k)^{-1} u_k^2``

Two different identifications coexist and must not be confused: the Riesz
map ``(1 - L)^{-1}`` sends ``F*`` onto ``F``, while ``L^2`` sits inside
``F*`` as the identity on coefficient vectors.  ``riesz_inverse`` is the
first, not the second.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import Generator

NORM_KINDS = ("L2", "F12", "F12dual", "F12dual_nu")


def _weights(gen: Generator, kind: str, nu: float | None) -> np.ndarray:
    if kind == "L2":
        return np.ones_like(gen.theta)
    if kind == "F12":
        return 1.0 + gen.theta
    if kind == "F12dual":
        return 1.0 / (1.0 + gen.theta)
    if kind == "F12dual_nu":
        if nu is None or not nu > 0:
            raise ValueError("F12dual_nu needs nu > 0")
        return 1.0 / (nu + gen.theta)
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def norm_sq(gen: Generator, u, kind: str = "L2", nu: float | None = None):
    """Squared norm; ``u`` of shape ``(n,)`` gives a float, ``(n, m)`` gives ``(m,)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != gen.size:
        raise ValueError(f"field has {u.shape[0]} sites, generator has {gen.size}")
    w = _weights(gen, kind, nu)
    c = gen.coefficients(u)
    if c.ndim == 2:
        return np.einsum("k,km,km->m", w, c, c)
    return float(np.dot(w * c, c))


def norm(gen: Generator, u, kind: str = "L2", nu: float | None = None):
    return np.sqrt(norm_sq(gen, u, kind, nu))


def pairing(gen: Generator, u, v, kind: str = "L2", nu: float | None = None) -> float:
    """Inner product of two fields in the chosen space."""
    u = gen.check_field(u, "u")
    v = gen.check_field(v, "v")
    w = _weights(gen, kind, nu)
    return float(np.dot(w * gen.coefficients(u), gen.coefficients(v)))


def riesz_forward(gen: Generator, u) -> np.ndarray:
    """``(1 - L) u``: isometry ``F_{1,2} -> F*_{1,2}``."""
    return gen.spectral_apply(1.0 + gen.theta, u)


def riesz_inverse(gen: Generator, u) -> np.ndarray:
    """``(1 - L)^{-1} u``: Riesz map ``F*_{1,2} -> F_{1,2}``."""
    return gen.spectral_apply(1.0 / (1.0 + gen.theta), u)


def dual_pairing(gen: Generator, eta, v) -> float:
    """``V*<eta, v>_V`` with ``V = L^2``, computed as ``<(1-L)^{-1} eta, v>_2``.

    This is the ``F*`` inner product of ``eta`` and ``v``; for
    ``eta = (1 - L) u`` it reduces to ``<u, v>_2``.
    """
    return gen.space.inner(riesz_inverse(gen, eta), v)


def dual_representer(gen: Generator, eta) -> np.ndarray:
    """The ``r in L^2`` with ``V*<eta, v>_V = <r, v>_2`` for every ``v``."""
    return riesz_inverse(gen, eta)


def dual_norm(gen: Generator, eta) -> float:
    """``|eta|_{V*} = sup_{|v|_2 = 1} V*<eta, v>_V = |(1 - L)^{-1} eta|_2``."""
    return float(norm(gen, dual_representer(gen, eta), "L2"))


@dataclass
class IsometryReport:
    dual_norm: float
    sup_witness: float
    l2_norm: float
    gap: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.gap <= self.tol * max(1.0, self.l2_norm)


def l2_isometry_check(gen: Generator, u, tol: float = 1e-10) -> IsometryReport:
    """Check that ``1 - L`` maps ``L^2`` isometrically onto ``(L^2)*``.

    The dual norm of ``(1 - L) u`` is computed spectrally and, independently,
    by evaluating the pairing at the maximizer ``v = u / |u|_2``.
    """
    u = gen.check_field(u)
    eta = riesz_forward(gen, u)
    l2 = float(norm(gen, u))
    dn = dual_norm(gen, eta)
    witness = 0.0 if l2 == 0 else dual_pairing(gen, eta, u / l2)
    gap = max(abs(dn - l2), abs(witness - l2))
    return IsometryReport(dual_norm=dn, sup_witness=witness, l2_norm=l2, gap=gap, tol=tol)


@dataclass
class RieszReport:
    f_norm: float
    dual_norm_spectral: float
    dual_norm_matrix: float
    roundtrip_error: float
    tol: float = 1e-10

    @property
    def gap(self) -> float:
        return max(abs(self.dual_norm_spectral - self.f_norm), abs(self.dual_norm_matrix - self.f_norm))

    @property
    def passed(self) -> bool:
        scale = max(1.0, self.f_norm)
        return self.gap <= self.tol * scale and self.roundtrip_error <= self.tol * scale


def riesz_isometry_check(gen: Generator, u, tol: float = 1e-10) -> RieszReport:
    """Check ``||(1 - L) u||_{F*} = ||u||_F`` and ``(1 - L)^{-1} (1 - L) u = u``.

    The dual norm is evaluated twice: from eigen-coefficients, and from the
    assembled matrix ``1 - L`` with a dense linear solve.
    """
    u = gen.check_field(u)
    f = float(norm(gen, u, "F12"))
    eta = riesz_forward(gen, u)
    spectral = float(norm(gen, eta, "F12dual"))
    A = np.eye(gen.size) - gen.matrix
    eta_m = A @ u
    rep = np.linalg.solve(A, eta_m)
    matrix = float(np.sqrt(max(gen.space.inner(rep, eta_m), 0.0)))
    back = riesz_inverse(gen, eta)
    err = float(max(norm(gen, back - u), norm(gen, rep - u)))
    return RieszReport(f_norm=f, dual_norm_spectral=spectral, dual_norm_matrix=matrix, roundtrip_error=err, tol=tol)
