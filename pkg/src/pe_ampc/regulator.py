"""Tube MPC regulator.

The nominal model ``z+ = A z + B v`` is steered by a finite-horizon QP over
tightened constraints ``Z = X - S`` and ``V = U_hat - Kt S`` with terminal
set ``Zf``; the plant receives ``u_hat = v + Kt (x - z)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import invariant
from .invariant import UncertaintyBound, spectral_radius
from .models import ModelFamily, PlantModel
from .polyhedra import (
    TOL,
    Polytope,
    contains_point,
    linear_map,
    minkowski_sum,
    pontryagin_diff,
    scale,
    support,
)
from .qp import QPInfeasible, QPResult, solve_qp

log = logging.getLogger(__name__)

DARE_MAX_ITER = 100_000


class DesignError(RuntimeError):
    """A stage of the offline design pipeline failed.

    ``stage`` names the failing step; ``hint`` suggests a remedy.
    """

    def __init__(self, stage: str, message: str, hint: str = ""):
        super().__init__(f"[{stage}] {message}" + (f" ({hint})" if hint else ""))
        self.stage = stage
        self.hint = hint


class TubeViolation(RuntimeError):
    """The plant state left the tube ``{z} + S``."""


class MPCInfeasible(RuntimeError):
    """The nominal QP has no solution from the current nominal state."""

    def __init__(self, message, violation=np.nan, rows=()):
        super().__init__(message)
        self.violation = violation
        self.rows = list(rows)


def schur_check(M) -> bool:
    """Spectral radius strictly below one (margin 1e-9)."""
    return spectral_radius(M) < 1.0 - 1e-9


def dare_gain(model: PlantModel, Q, R, rtol: float = 1e-12, max_iter: int = DARE_MAX_ITER):
    """Infinite-horizon LQR gain and cost by Riccati fixed-point iteration.

    Returns ``(K, P)`` with ``u = K x`` (sign included) and ``P`` the
    stationary solution of the discrete algebraic Riccati equation.
    """
    A, B = model.A, model.B
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.linalg.norm(P_next - P)
        P = P_next
        if not np.all(np.isfinite(P)) or np.linalg.norm(P) > 1e14:
            raise DesignError("dare", "Riccati iteration diverged", "is (A, B) stabilizable?")
        if delta <= rtol * max(np.linalg.norm(P), 1e-300):
            break
    else:
        raise DesignError("dare", f"Riccati iteration did not converge in {max_iter} steps",
                          "is (A, B) stabilizable?")
    K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    if not schur_check(A + B @ K):
        raise DesignError("dare", "Riccati gain is not stabilizing", "is (A, B) stabilizable?")
    return K, P


def lyapunov_slack(A_K, P, Q, R, K) -> float:
    """Smallest eigenvalue of ``P - Q - K'RK - A_K' P A_K`` (>= 0 means decrease)."""
    M = P - Q - K.T @ R @ K - A_K.T @ P @ A_K
    return float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))


@dataclass(frozen=True)
class TubeDesign:
    """All offline ingredients of the tube controller for one nominal model."""

    K: np.ndarray
    Kt: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: Polytope
    Z: Polytope
    V: Polytope
    Zf: Polytope
    N: int
    alpha: float
    X: Polytope
    U: Polytope
    U_hat: Polytope
    W_hat: Polytope
    Wp: UncertaintyBound
    W: Polytope
    terminal_lambda: float = 1.0

    def summary(self, model: PlantModel) -> dict:
        A_K = model.A + model.B @ self.K
        A_Kt = model.A + model.B @ self.Kt
        return {
            "spectral_radius_AK": spectral_radius(A_K),
            "spectral_radius_AKt": spectral_radius(A_Kt),
            "lyapunov_slack": lyapunov_slack(A_K, self.P, self.Q, self.R, self.K),
            "S_volume": self.S.volume(),
            "Z_volume": self.Z.volume(),
            "Zf_volume": self.Zf.volume(),
            "V_interval": ([-support(self.V, [-1.0]), support(self.V, [1.0])] if self.V.dim == 1 else None),
            "S_facets": self.S.n_facets,
            "Zf_facets": self.Zf.n_facets,
            "terminal_lambda": self.terminal_lambda,
        }

    _MATRICES = ("K", "Kt", "P", "Q", "R")
    _SETS = ("S", "Z", "V", "Zf", "X", "U", "U_hat", "W_hat", "W")

    def to_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in self._MATRICES}
        out.update({k: getattr(self, k).to_dict() for k in self._SETS})
        out.update(Wp=self.Wp.set.to_dict(), N=self.N, alpha=self.alpha, terminal_lambda=self.terminal_lambda)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TubeDesign":
        kw = {k: np.asarray(data[k], dtype=float) for k in cls._MATRICES}
        kw.update({k: Polytope.from_dict(data[k]) for k in cls._SETS})
        return cls(**kw, Wp=UncertaintyBound(Polytope.from_dict(data["Wp"])), N=int(data["N"]),
                   alpha=float(data["alpha"]), terminal_lambda=float(data.get("terminal_lambda", 1.0)))


def build_design(nominal: PlantModel, family: ModelFamily, X: Polytope, U: Polytope,
                 Q, R, alpha: float, N: int, *, K=None, Kt=None, eps: float = 1e-4,
                 terminal_lambda: float = 1.0, Wp: UncertaintyBound | None = None) -> TubeDesign:
    """Run the offline pipeline for ``nominal``.

    Stages: input split, parametric bound, Riccati gain and cost, minimal
    RPI tube, admissibility, constraint tightening, terminal set.  Any
    failure raises :class:`DesignError` naming the stage.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not 0.0 < alpha < 1.0:
        raise DesignError("split", f"alpha must lie in (0, 1), got {alpha}")
    if np.min(np.linalg.eigvalsh(Q)) < -1e-12 or np.min(np.linalg.eigvalsh(R)) <= 0:
        raise DesignError("weights", "Q must be PSD and R positive definite")
    U_hat = scale(U, alpha)
    W_hat = scale(U, 1.0 - alpha)
    if Wp is None:
        Wp = invariant.parametric_bound(family, nominal, X, U)
    K_lqr, P = dare_gain(nominal, Q, R)
    K = K_lqr if K is None else np.atleast_2d(np.asarray(K, dtype=float))
    Kt = K if Kt is None else np.atleast_2d(np.asarray(Kt, dtype=float))
    A_K = nominal.A + nominal.B @ K
    A_Kt = nominal.A + nominal.B @ Kt
    if not schur_check(A_K) or not schur_check(A_Kt):
        raise DesignError("gains", "closed-loop matrices are not Schur")
    if K is not K_lqr:
        P = _lyapunov_cost(A_K, Q + K.T @ R @ K)
    W = minkowski_sum(linear_map(nominal.B, W_hat), Wp.set)
    try:
        S = invariant.mrpi_approx(A_Kt, W, eps)
    except invariant.InvariantSetError as exc:
        raise DesignError("mrpi", str(exc)) from exc
    if not invariant.check_admissible(S, X, Kt, U_hat):
        raise DesignError("admissibility", "tube cross-section S is not admissible",
                          "reduce the model uncertainty or alpha's complement")
    Z = pontryagin_diff(X, S)
    V = pontryagin_diff(U_hat, linear_map(Kt, S))
    if Z.is_empty or V.is_empty:
        raise DesignError("tightening", "tightened constraint set is empty")
    omega0 = invariant.constraint_set(Z, V, K)
    try:
        if terminal_lambda < 1.0:
            Zf = invariant.lambda_contractive_set(A_K, terminal_lambda, omega0)
        else:
            Zf = invariant.max_pi_set(A_K, Z, V, K)
    except invariant.InvariantSetError as exc:
        raise DesignError("terminal", str(exc)) from exc
    if Zf.is_empty or not contains_point(Zf, np.zeros(nominal.n)):
        raise DesignError("terminal", "terminal set does not contain the origin")
    return TubeDesign(K=K, Kt=Kt, P=P, Q=Q, R=R, S=S, Z=Z, V=V, Zf=Zf, N=int(N), alpha=float(alpha),
                      X=X, U=U, U_hat=U_hat, W_hat=W_hat, Wp=Wp, W=W, terminal_lambda=terminal_lambda)


def _lyapunov_cost(A_K, Qk):
    from scipy.linalg import solve_discrete_lyapunov

    return solve_discrete_lyapunov(A_K.T, Qk)


# ---------------------------------------------------------------------- #
# nominal MPC
# ---------------------------------------------------------------------- #
@dataclass(frozen=True)
class ControllerState:
    z: np.ndarray
    last_cost: float = np.nan
    vseq: np.ndarray | None = None


@dataclass
class MPCSolution:
    v: np.ndarray
    vseq: np.ndarray
    zseq: np.ndarray
    cost: float
    qp: QPResult = field(repr=False, default=None)
    kkt: dict = field(default_factory=dict)


def _prediction_matrices(model: PlantModel, N: int):
    """``Phi`` and ``Gamma`` with ``z_k = Phi_k z_0 + Gamma_k v`` for k = 0..N."""
    n, m = model.n, model.m
    A, B = model.A, model.B
    Phi = np.zeros(((N + 1) * n, n))
    Gam = np.zeros(((N + 1) * n, N * m))
    Ak = np.eye(n)
    for k in range(N + 1):
        Phi[k * n:(k + 1) * n] = Ak
        Ak = A @ Ak
    for k in range(1, N + 1):
        for j in range(k):
            Gam[k * n:(k + 1) * n, j * m:(j + 1) * m] = np.linalg.matrix_power(A, k - 1 - j) @ B
    return Phi, Gam


def _block_diag(*blocks):
    from scipy.linalg import block_diag

    return block_diag(*blocks)


def _condensed(design: TubeDesign, model: PlantModel):
    """Cost and constraints over ``y = [z0; v]``."""
    N, n, m = design.N, model.n, model.m
    Phi, Gam = _prediction_matrices(model, N)
    T = np.hstack([Phi, Gam])  # stacked states as a map of [z0; v]
    Wz = _block_diag(*([design.Q] * N + [design.P]))
    Wv = _block_diag(*([design.R] * N))
    Hs = T.T @ Wz @ T
    Hs[n:, n:] += Wv
    H = 2.0 * Hs
    Zs = [design.Z] * N + [design.Zf]
    Gz = _block_diag(*[s.A for s in Zs]) @ T
    hz = np.concatenate([s.b for s in Zs])
    Gv = np.hstack([np.zeros((N * design.V.n_facets, n)), _block_diag(*([design.V.A] * N))])
    hv = np.tile(design.V.b, N)
    G = np.vstack([Gz, Gv])
    hh = np.concatenate([hz, hv])
    return H, G, hh


def _solve(design: TubeDesign, model: PlantModel, z0, x_for_tube=None) -> MPCSolution:
    n, m, N = model.n, model.m, design.N
    H, G, h = _condensed(design, model)
    if x_for_tube is None:
        z0 = np.asarray(z0, dtype=float).reshape(n)
        # eliminate z0: y = [z0; v]
        Hv = H[n:, n:]
        f = H[n:, :n] @ z0
        Gv = G[:, n:]
        hv = h - G[:, :n] @ z0
        const = 0.5 * z0 @ H[:n, :n] @ z0
        try:
            res = solve_qp(Hv, f, Gv, hv)
        except QPInfeasible as exc:
            raise MPCInfeasible(f"nominal QP infeasible: {exc}", exc.violation, exc.rows) from exc
        v = res.x
        kkt = res.kkt_residuals(Hv, f, Gv, hv)
        cost = res.value + const
    else:
        x = np.asarray(x_for_tube, dtype=float).reshape(n)
        S = design.S
        # x - z0 in S  <=>  -S.A z0 <= S.b - S.A x
        Gt = np.hstack([-S.A, np.zeros((S.n_facets, N * m))])
        ht = S.b - S.A @ x
        Ga, ha = np.vstack([G, Gt]), np.concatenate([h, ht])
        f = np.zeros(n + N * m)
        try:
            res = solve_qp(H, f, Ga, ha)
        except QPInfeasible as exc:
            raise MPCInfeasible(f"initialization QP infeasible: {exc}", exc.violation, exc.rows) from exc
        z0, v = res.x[:n], res.x[n:]
        kkt = res.kkt_residuals(H, f, Ga, ha)
        cost = res.value
    vseq = v.reshape(N, m)
    zseq = [z0]
    for k in range(N):
        zseq.append(model.A @ zseq[-1] + model.B @ vseq[k])
    return MPCSolution(v=vseq[0].copy(), vseq=vseq, zseq=np.array(zseq), cost=float(cost), qp=res, kkt=kkt)


def solve_nominal_mpc(state: ControllerState, design: TubeDesign, model: PlantModel) -> MPCSolution:
    """Solve the nominal finite-horizon problem from ``state.z``.

    Returns the first input, the full input sequence and the optimal cost.
    Raises :class:`MPCInfeasible` with the violated rows if no solution
    exists.
    """
    return _solve(design, model, state.z)


def optimal_cost(z, design: TubeDesign, model: PlantModel) -> float:
    return _solve(design, model, z).cost


def initialize_nominal(x0, design: TubeDesign, model: PlantModel, mode: str = "x0") -> ControllerState:
    """Choose ``z(0)`` with ``x(0) - z(0)`` in ``S``.

    ``mode="x0"`` sets ``z(0) = x(0)``; ``mode="optimize"`` minimizes the
    nominal cost jointly over ``z(0)`` and the input sequence.
    """
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    if mode == "x0":
        sol = _solve(design, model, x0)
        return ControllerState(z=x0.copy(), last_cost=sol.cost, vseq=sol.vseq)
    if mode == "optimize":
        sol = _solve(design, model, None, x_for_tube=x0)
        return ControllerState(z=sol.zseq[0].copy(), last_cost=sol.cost, vseq=sol.vseq)
    raise ValueError(f"unknown initialization mode {mode!r}")


def tube_control(x, state: ControllerState, design: TubeDesign, v, check: bool = True) -> np.ndarray:
    """Composite law ``u_hat = v + Kt (x - z)``."""
    x = np.asarray(x, dtype=float)
    e = x - state.z
    if check and not contains_point(design.S, e):
        raise TubeViolation(f"x - z = {e} is outside the tube cross-section")
    return np.asarray(v, dtype=float) + design.Kt @ e


def advance_nominal(state: ControllerState, model: PlantModel, v, cost: float | None = None,
                    vseq=None) -> ControllerState:
    z = model.A @ state.z + model.B @ np.asarray(v, dtype=float)
    return replace(state, z=z, last_cost=state.last_cost if cost is None else cost,
                   vseq=state.vseq if vseq is None else vseq)


def unconstrained_lqr_first_input(z, model: PlantModel, Q, R, P, N: int) -> np.ndarray:
    """First input of the finite-horizon LQR by backward Riccati recursion."""
    A, B = model.A, model.B
    Pk = P
    gain = None
    for _ in range(N):
        gain = -np.linalg.solve(R + B.T @ Pk @ B, B.T @ Pk @ A)
        Pk = Q + A.T @ Pk @ A + A.T @ Pk @ B @ gain
    return gain @ np.asarray(z, dtype=float)


def tube_disturbance(design: TubeDesign, model: PlantModel) -> Polytope:
    return minkowski_sum(linear_map(model.B, design.W_hat), design.Wp.set)


__all__ = [
    "ControllerState", "DesignError", "MPCInfeasible", "MPCSolution", "PlantModel", "ModelFamily",
    "TubeDesign", "TubeViolation", "advance_nominal", "build_design", "dare_gain", "initialize_nominal",
    "lyapunov_slack", "optimal_cost", "schur_check", "solve_nominal_mpc", "tube_control",
    "unconstrained_lqr_first_input", "TOL",
]
