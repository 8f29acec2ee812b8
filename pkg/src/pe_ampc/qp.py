"""Dense dual active-set solver for small strictly convex QPs.

Solves ``min 0.5 x'Hx + f'x  s.t.  G x <= h`` with ``H`` positive definite
by the Goldfarb-Idnani method: start from the unconstrained minimiser and
add the most violated constraint one at a time, keeping the multipliers
of the working set nonnegative.  Nearly parallel constraint rows, common
in the finely faceted tube sets, are handled by the dual step instead of
a primal rank decision, so the method needs no phase-one point and does
not cycle on degenerate vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.optimize import linprog

FEAS_TOL = 1e-10
DEPENDENCE_TOL = 1e-12
MAX_ITER = 1000


class QPInfeasible(RuntimeError):
    """The constraint set ``G x <= h`` is empty.

    ``violation`` is the smallest uniform relaxation that makes it feasible
    and ``rows`` lists the constraints binding at that relaxation.
    """

    def __init__(self, message: str, violation: float = np.nan, rows=()):
        super().__init__(message)
        self.violation = violation
        self.rows = list(rows)


@dataclass
class QPResult:
    x: np.ndarray
    value: float
    multipliers: np.ndarray
    active: list = field(default_factory=list)
    iterations: int = 0

    def kkt_residuals(self, H, f, G, h) -> dict:
        lam = self.multipliers
        g = G @ self.x - h
        return {
            "stationarity": float(np.max(np.abs(H @ self.x + f + G.T @ lam), initial=0.0)),
            "primal": float(max(np.max(g, initial=0.0), 0.0)),
            "dual": float(max(-np.min(lam, initial=0.0), 0.0)),
            "complementarity": float(np.max(np.abs(lam * g), initial=0.0)),
        }


def _infeasibility(G: np.ndarray, h: np.ndarray, n: int) -> QPInfeasible:
    # minimize t  s.t.  G x - t <= h, so t* is the uniform relaxation needed
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((G.shape[0], 1))])
    res = linprog(c, A_ub=A_ub, b_ub=h, bounds=[(None, None)] * n + [(-1.0, None)],
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return QPInfeasible(f"QP infeasible (relaxation LP: {res.message})")
    x, t = res.x[:n], res.x[-1]
    rows = np.flatnonzero(G @ x - h >= t - 1e-9)
    return QPInfeasible(f"QP infeasible: constraints need relaxation {t:.3e}", max(t, 0.0), rows)


def solve_qp(H, f, G, h, max_iter: int = MAX_ITER) -> QPResult:
    """Goldfarb-Idnani dual active-set method.

    The working-set subproblems are solved from scratch on each iteration
    through a QR factorisation of ``L^-1 G_w'`` with ``H = L L'``; the
    problems in this package have at most a few dozen variables.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    f = np.asarray(f, dtype=float).reshape(-1)
    n = f.size
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    H = 0.5 * (H + H.T)
    try:
        chol = cho_factor(H, lower=True)
    except LinAlgError as exc:
        raise ValueError("QP Hessian must be positive definite") from exc
    L = np.tril(chol[0])
    Linv = solve_triangular(L, np.eye(n), lower=True)

    x = -cho_solve(chol, f)
    row_norm = np.maximum(np.linalg.norm(G, axis=1), 1e-300)
    active: list = []
    redundant: set = set()  # rows implied by the working set up to rounding
    u = np.zeros(0)
    it = 0
    while True:
        viol = (G @ x - h) / row_norm
        masked = active + sorted(redundant)
        if masked:
            viol[masked] = -np.inf
        p = int(np.argmax(viol)) if viol.size else -1
        if p < 0 or viol[p] <= FEAS_TOL:
            break
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise RuntimeError(f"dual active-set QP did not converge in {max_iter} iterations")
            # constraint p written as n'x >= b with n = -G[p]
            Ln = -(Linv @ G[p])
            k = len(active)
            if k:
                Q1, R = np.linalg.qr(-(Linv @ G[active].T))
                proj = Q1.T @ Ln
                resid = Ln - Q1 @ proj
                r = solve_triangular(R, proj)
            else:
                resid, r = Ln, np.zeros(0)
            z = Linv.T @ resid
            # dual step: largest step keeping the working multipliers nonnegative
            t1, drop = np.inf, None
            for j in np.flatnonzero(r > 0.0):
                ratio = u_plus[j] / r[j]
                if ratio < t1:
                    t1, drop = ratio, int(j)
            dependent = np.linalg.norm(resid) <= DEPENDENCE_TOL * max(np.linalg.norm(Ln), 1.0)
            if dependent:
                if drop is None:
                    err = _infeasibility(G, h, n)
                    if not err.violation <= FEAS_TOL:
                        raise err
                    # G[p] = G_w' r, so any weight already on p moves onto the working rows
                    redundant.add(p)
                    u = np.maximum(u_plus[:k] + u_plus[k] * r, 0.0)
                    break
                u_plus[:k] -= t1 * r
                u_plus[k] += t1
            else:
                t2 = (G[p] @ x - h[p]) / (resid @ resid)
                t = min(t1, t2)
                x = x + t * z
                if t > 0.0:
                    redundant.clear()
                u_plus[:k] -= t * r
                u_plus[k] += t
                if t2 <= t1:
                    active.append(p)
                    u = u_plus
                    break
            del active[drop]
            u_plus = np.delete(u_plus, drop)

    lam = np.zeros(G.shape[0])
    if active:
        lam[active] = np.maximum(u, 0.0)
    value = float(0.5 * x @ H @ x + f @ x)
    return QPResult(x=x, value=value, multipliers=lam, active=list(active), iterations=it)
