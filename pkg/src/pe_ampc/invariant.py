"""Invariant sets and uncertainty bounds for the tube controller.

Covers the parametric mismatch bound, the maximal constraint-admissible
positively invariant set, an outer epsilon-approximation of the minimal
robust positively invariant set, and lambda-contractive terminal sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelFamily, PlantModel
from .polyhedra import (
    TOL,
    Polytope,
    PolytopeError,
    canonicalize,
    contains_set,
    intersect,
    linear_map,
    minkowski_sum,
    preimage,
    scale,
    support_many,
    vertices,
)

MAX_PI_ITERATIONS = 1000
MAX_MRPI_TERMS = 500


class InvariantSetError(RuntimeError):
    """Raised when an invariant-set computation cannot be carried out."""


@dataclass(frozen=True)
class UncertaintyBound:
    """State-space polytope bounding a model-mismatch residual."""

    set: Polytope

    def contains(self, w, tol: float = TOL) -> bool:
        return bool(np.all(self.set.A @ np.asarray(w, dtype=float) <= self.set.b + tol))


def spectral_radius(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _require_schur(M, what: str) -> None:
    rho = spectral_radius(M)
    if not rho < 1.0 - 1e-9:
        raise InvariantSetError(f"{what} is not Schur (spectral radius {rho:.6g})")


def _residual_bound(points: np.ndarray, n: int) -> UncertaintyBound:
    if np.max(np.abs(points), initial=0.0) <= 1e-14:
        return UncertaintyBound(Polytope.origin(n))
    # the origin belongs to every bound by convention (C-set)
    return UncertaintyBound(Polytope.from_vertices(np.vstack([points, np.zeros(n)])))


def parametric_bound(family: ModelFamily, nominal: PlantModel, X: Polytope, U: Polytope) -> UncertaintyBound:
    """Hull of ``(A - A_nom) x + (B - B_nom) u`` over members and set vertices.

    Exact for vertex families: for a fixed member the residual is linear in
    ``(x, u)``, so its extremes over ``X x U`` occur at vertex pairs.
    """
    if family is None or len(family) == 0:
        raise InvariantSetError("empty model family")
    Vx, Vu = vertices(X), vertices(U)
    pts = []
    for mem in family:
        dA = mem.A - nominal.A
        dB = mem.B - nominal.B
        px = Vx @ dA.T
        pu = Vu @ dB.T
        pts.append((px[:, None, :] + pu[None, :, :]).reshape(-1, nominal.n))
    return _residual_bound(np.vstack(pts), nominal.n)


def terminal_uncertainty_bound(family: ModelFamily, nominal: PlantModel, Zf: Polytope, K) -> UncertaintyBound:
    """Hull of ``((A - A_nom) + (B - B_nom) K) z`` over members and vertices of ``Zf``."""
    if family is None or len(family) == 0:
        raise InvariantSetError("empty model family")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Vz = vertices(Zf)
    pts = [Vz @ ((mem.A - nominal.A) + (mem.B - nominal.B) @ K).T for mem in family]
    return _residual_bound(np.vstack(pts), nominal.n)


def _maximal_invariant(A_cl: np.ndarray, omega0: Polytope, max_iter: int = MAX_PI_ITERATIONS) -> Polytope:
    omega = canonicalize(omega0)
    if omega.is_empty:
        return omega
    for _ in range(max_iter):
        pre = Polytope(omega.A @ A_cl, omega.b, validate=False)
        h = support_many(omega, pre.A)
        if np.all(h <= pre.b + TOL):
            return omega
        omega = intersect(omega, pre)
        if omega.is_empty:
            return omega
    raise InvariantSetError(f"invariant-set iteration did not converge in {max_iter} steps")


def constraint_set(state_box: Polytope, input_box: Polytope | None, K) -> Polytope:
    """``{x in state_box : K x in input_box}``."""
    if input_box is None or K is None:
        return state_box
    return intersect(state_box, preimage(K, input_box))


def max_pi_set(A_cl, state_box: Polytope, input_box: Polytope | None = None, K=None) -> Polytope:
    """Maximal constraint-admissible positively invariant set of ``x+ = A_cl x``.

    Starting from ``{x in state_box : K x in input_box}``, intersects with the
    one-step preimage until the set maps into itself.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    _require_schur(A_cl, "closed-loop matrix")
    return _maximal_invariant(A_cl, constraint_set(state_box, input_box, K))


def lambda_contractive_set(A_cl, lam: float, omega0: Polytope) -> Polytope:
    """Largest ``Omega`` inside ``omega0`` with ``A_cl Omega`` inside ``lam * Omega``."""
    if not 0.0 < lam <= 1.0:
        raise InvariantSetError(f"contraction factor must lie in (0, 1], got {lam}")
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    # spectral radius exactly 1 is allowed; the iteration cap catches non-convergence
    rho = spectral_radius(A_cl / lam)
    if rho > 1.0 + 1e-9:
        raise InvariantSetError(f"scaled closed-loop matrix is not Schur (spectral radius {rho:.6g})")
    return _maximal_invariant(A_cl / lam, omega0)


def _box_radius_terms(A_cl: np.ndarray, W: Polytope, s: int) -> float:
    n = A_cl.shape[0]
    E = np.vstack([np.eye(n), -np.eye(n)])
    acc = np.zeros(2 * n)
    Ak = np.eye(n)
    for _ in range(s):
        acc += support_many(W, E @ Ak)
        Ak = A_cl @ Ak
    return float(acc.max())


def mrpi_approx(A_cl, W: Polytope, eps: float = 1e-4, max_terms: int = MAX_MRPI_TERMS) -> Polytope:
    """Outer epsilon-approximation of the minimal RPI set of ``x+ = A_cl x + w``.

    Finds the smallest ``s`` and ``alpha`` with ``A_cl^s W`` inside
    ``alpha W`` and ``alpha/(1-alpha) * radius(F_s) <= eps``, where
    ``F_s = W + A_cl W + ... + A_cl^(s-1) W`` and radius is the infinity-norm
    bound, then returns ``F_s / (1 - alpha)``.  A flat ``W`` is first
    inflated by a small box so the containment search is well posed.
    """
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    _require_schur(A_cl, "closed-loop matrix")
    n = A_cl.shape[0]
    if np.max(np.abs(vertices(W))) <= 1e-14:
        return Polytope.origin(n)
    if np.any(W.b <= 1e-12) or W.chebyshev_radius() <= 1e-9:
        W = minkowski_sum(W, Polytope.box(np.full(n, eps * 1e-2)))
    if np.any(W.b <= 0):
        raise InvariantSetError("disturbance set must contain the origin in its interior")
    Ak = np.eye(n)
    for s in range(1, max_terms + 1):
        Ak = A_cl @ Ak  # A_cl^s
        alpha = float(np.max(support_many(W, W.A @ Ak) / W.b))
        if alpha < 1.0:
            radius = _box_radius_terms(A_cl, W, s)
            if alpha <= eps / (eps + radius):
                break
    else:
        raise InvariantSetError(f"mRPI approximation needs more than {max_terms} terms")
    F = W
    Ak = np.eye(n)
    for _ in range(1, s):
        Ak = A_cl @ Ak
        F = minkowski_sum(F, linear_map(Ak, W))
    return scale(F, 1.0 / (1.0 - alpha))


def check_rpi(S: Polytope, A_cl, W: Polytope, tol: float = TOL) -> bool:
    """``A_cl S (+) W`` contained in ``S``."""
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    if S.dim != W.dim or A_cl.shape != (S.dim, S.dim):
        raise PolytopeError("dimension mismatch in RPI check")
    # support of the sum equals the sum of supports
    h = support_many(S, S.A @ A_cl) + support_many(W, S.A)
    return bool(np.all(h <= S.b + tol))


def check_pi(T: Polytope, A_cl, tol: float = TOL) -> bool:
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    return bool(np.all(support_many(T, T.A @ A_cl) <= T.b + tol))


def check_admissible(S: Polytope, X: Polytope, K, U_part: Polytope, tol: float = TOL) -> bool:
    """``S`` inside ``X`` and ``K S`` inside ``U_part``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if not contains_set(X, S, tol):
        return False
    hK = support_many(S, U_part.A @ K)
    return bool(np.all(hK <= U_part.b + tol))
