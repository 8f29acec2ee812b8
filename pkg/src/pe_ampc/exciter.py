"""Persistently exciting part of the input.

Index convention (right-aligned windows).  With ``w(t)`` the exciting input
at time ``t`` the stacked block is::

    block(t) = [w(t), w(t-1), ..., w(t-h+1)]          (length m*h)

and the excitation matrix at time ``i`` sums the ``l`` most recent blocks::

    M(i) = sum_{j=0}^{l-1} block(i-j) block(i-j)^T - rho0 * I

so it reads the values ``w(i-l-h+2) .. w(i)``::

    time   i-l-h+2  ...  i-h+1  ...  i-1   i
           |<------- block(i-l+1) ->|
                          ...  |<--- block(i) --->|

A buffer of ``h+l-1`` values (times ``0 .. h+l-2``) is the shortest
sequence on which ``M`` can be evaluated at its last index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .models import PlantModel
from .polyhedra import Polytope, contains_point, vertices
from .qp import solve_qp

PE_MARGIN = 1e-9


class ExcitationError(RuntimeError):
    """Excitation design is infeasible (buffer synthesis failed)."""

    def __init__(self, message: str, best_min_eig: float = -np.inf):
        super().__init__(message)
        self.best_min_eig = best_min_eig


@dataclass(frozen=True)
class PEMatrixReport:
    min_eig: float
    matrix_dim: int
    feasible: bool


def _as_seq(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    return seq


def pe_matrix(seq, i: int, l: int, h: int, rho0: float) -> np.ndarray:
    seq = _as_seq(seq)
    if i - l - h + 2 < 0 or i >= len(seq):
        raise IndexError(f"PE matrix at time {i} needs values from {i - l - h + 2}; history has {len(seq)}")
    G = kernels.pe_gram(seq, i, l, h)
    return G - rho0 * np.eye(G.shape[0])


def pe_measure(seq, i: int, l: int, h: int, rho0: float, margin: float = PE_MARGIN) -> PEMatrixReport:
    """Smallest eigenvalue of the excitation matrix at time ``i``."""
    M = pe_matrix(seq, i, l, h, rho0)
    lo = float(np.linalg.eigvalsh(M)[0])
    return PEMatrixReport(min_eig=lo, matrix_dim=M.shape[0], feasible=lo > margin)


def spe_order_check(seq, i: int, h: int, l: int, rho0: float, rho1: float) -> bool:
    """Both bounds ``rho1 I > sum block block^T > rho0 I`` at time ``i``."""
    G = pe_matrix(seq, i, l, h, 0.0)
    eig = np.linalg.eigvalsh(G)
    return bool(eig[0] > rho0 and eig[-1] < rho1)


def required_order(n: int, m: int) -> int:
    """Excitation order that carries over to a order-1 regressor: ``2n + m``."""
    return 2 * n + m


def state_reachability_check(model: PlantModel, rtol: float = 1e-9) -> bool:
    n = model.n
    blocks = [model.B]
    for _ in range(n - 1):
        blocks.append(model.A @ blocks[-1])
    s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    return bool(s.size >= n and s[n - 1] > rtol * max(s[0], 1e-300))


def output_reachability_check(model: PlantModel, Kt, rtol: float = 1e-9) -> bool:
    """Full row rank of ``[I, Kt B, Kt A_Kt B, ..., Kt A_Kt^(n-1) B]``."""
    Kt = np.atleast_2d(np.asarray(Kt, dtype=float))
    A_Kt = model.A + model.B @ Kt
    cols = [np.eye(model.m)]
    Ak = np.eye(model.n)
    for _ in range(model.n):
        cols.append(Kt @ Ak @ model.B)
        Ak = A_Kt @ Ak
    s = np.linalg.svd(np.hstack(cols), compute_uv=False)
    return bool(s[model.m - 1] > rtol * max(s[0], 1e-300))


def _draw_in(W_hat: Polytope, rng: np.random.Generator, count: int) -> np.ndarray:
    V = vertices(W_hat)
    lo, hi = V.min(axis=0), V.max(axis=0)
    out = []
    while len(out) < count:
        pts = rng.uniform(lo, hi, size=(max(count, 8), W_hat.dim))
        ok = np.all(pts @ W_hat.A.T <= W_hat.b, axis=1)
        out.extend(pts[ok][:count - len(out)])
    return np.array(out)


def synthesize_buffer(W_hat: Polytope, l: int, h: int, rho0: float, seed: int = 0,
                      max_draws: int = 1000, margin: float = PE_MARGIN) -> np.ndarray:
    """An ``l``-periodic sequence of length ``h+l-1`` in ``W_hat`` with ``M > 0`` at its end.

    Each draw takes one period from the extreme points of ``W_hat`` with
    pseudo-random choices, shrunk by a scale that decreases slowly from 1
    to 0.5 over the draws so later draws keep some distance from the
    boundary.  Raises :class:`ExcitationError` with the best margin found.
    """
    if l < h:
        raise ValueError(f"window length l={l} must be at least the order h={h}")
    V = vertices(W_hat)
    peak = float(np.max(np.sum(V * V, axis=1)))
    if rho0 >= l * peak:
        raise ExcitationError(
            f"rho0={rho0} exceeds the trace bound l*max|w|^2={l * peak:.4g}; "
            "no sequence in W_hat can reach it", best_min_eig=l * peak - rho0)
    rng = np.random.default_rng(seed)
    best = -np.inf
    end = h + l - 2
    for draw in range(max_draws):
        shrink = 1.0 - 0.5 * draw / max_draws
        period = V[rng.integers(len(V), size=l)] * shrink
        seq = np.array([period[j % l] for j in range(h + l - 1)])
        rep = pe_measure(seq, end, l, h, rho0, margin)
        best = max(best, rep.min_eig)
        if rep.feasible:
            return seq
    raise ExcitationError(
        f"no valid buffer after {max_draws} draws (best min eigenvalue {best:.4g}); "
        "rho0 too large for W_hat", best_min_eig=best)


def _validate_buffer(buffer: np.ndarray, W_hat: Polytope, l: int, h: int, rho0: float, margin: float) -> None:
    if len(buffer) < h + l - 1:
        raise ValueError(f"buffer needs {h + l - 1} entries, got {len(buffer)}")
    for j in range(l, len(buffer)):
        if not np.allclose(buffer[j], buffer[j - l], atol=0.0, rtol=0.0):
            raise ValueError("buffer is not l-periodic")
    for w in buffer:
        if not contains_point(W_hat, w):
            raise ValueError("buffer value outside W_hat")
    if not pe_measure(buffer, h + l - 2, l, h, rho0, margin).feasible:
        raise ValueError("buffer does not satisfy the excitation condition")


@dataclass
class ExciterState:
    """Receding-horizon exciter.

    ``history`` holds every emitted value; the first ``h+l-1`` come from the
    buffer.  Candidate sampling draws from ``rng`` so runs are reproducible
    under ``seed``.
    """

    W_hat: Polytope
    l: int
    h: int
    rho0: float
    buffer: np.ndarray
    n_random: int = 64
    seed: int = 0
    margin: float = PE_MARGIN
    history: list = field(default_factory=list)
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        self.buffer = _as_seq(self.buffer)
        _validate_buffer(self.buffer, self.W_hat, self.l, self.h, self.rho0, self.margin)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @property
    def m(self) -> int:
        return self.W_hat.dim

    @property
    def time(self) -> int:
        return len(self.history)

    def sequence(self) -> np.ndarray:
        return np.array(self.history, dtype=float).reshape(-1, self.m)

    def push(self, w) -> None:
        self.history.append(np.asarray(w, dtype=float).reshape(self.m))


@dataclass(frozen=True)
class PEStep:
    w: np.ndarray
    cost: float
    fallback_cost: float
    used_fallback: bool
    feasible: bool
    n_feasible: int


def _rollout_costs(cands: np.ndarray, pinned: np.ndarray, x, model: PlantModel, Q, R) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    base = x @ Q @ x
    cost = base + np.einsum("ci,ij,cj->c", cands, R, cands)
    xs = (model.A @ x)[None, :] + cands @ model.B.T
    for w in pinned:
        cost += np.einsum("ci,ij,cj->c", xs, Q, xs) + w @ R @ w
        xs = xs @ model.A.T + (model.B @ w)[None, :]
    return cost


def solve_pe_step(ex: ExciterState, x, model: PlantModel, Q, R) -> PEStep:
    """Choose the exciting input for the current instant and append it.

    During the first ``h+l-1`` instants the buffer is replayed.  Afterwards,
    the candidate set is the periodic fallback ``w(i-l)``, the vertices of
    ``W_hat``, the cost minimizer over ``W_hat`` and ``n_random`` uniform
    draws; candidates failing any of the ``h`` future excitation checks are
    discarded and the cheapest survivor is returned.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    i = ex.time
    l, h = ex.l, ex.h
    if i < h + l - 1:
        w = ex.buffer[i].copy()
        ex.push(w)
        return PEStep(w=w, cost=np.nan, fallback_cost=np.nan, used_fallback=True, feasible=True, n_feasible=1)
    seq = ex.sequence()
    tail = seq[i - (l + h - 2):i]
    pinned = np.array([seq[i + k + 1 - l] for k in range(h - 1)]).reshape(h - 1, ex.m)
    fallback = seq[i - l]
    parts = [fallback[None, :], vertices(ex.W_hat), _cost_minimizer(x, pinned, model, Q, R, ex.W_hat)[None, :]]
    if ex.n_random:
        parts.append(_draw_in(ex.W_hat, ex.rng, ex.n_random))
    cands = np.vstack(parts)
    inside = np.all(cands @ ex.W_hat.A.T <= ex.W_hat.b + 1e-12, axis=1)
    ok = kernels.pe_screen(tail, cands, pinned, l, h, ex.rho0, ex.margin) & inside
    costs = _rollout_costs(cands, pinned, x, model, Q, R)
    fallback_cost = float(costs[0])
    if not np.any(ok):
        ex.push(fallback)
        return PEStep(w=fallback.copy(), cost=fallback_cost, fallback_cost=fallback_cost,
                      used_fallback=True, feasible=False, n_feasible=0)
    masked = np.where(ok, costs, np.inf)
    best = int(np.argmin(masked))
    # prefer the periodic value on ties so periodicity persists
    if ok[0] and masked[0] <= masked[best]:
        best = 0
    w = cands[best].copy()
    ex.push(w)
    return PEStep(w=w, cost=float(costs[best]), fallback_cost=fallback_cost, used_fallback=best == 0,
                  feasible=True, n_feasible=int(ok.sum()))


def _cost_minimizer(x, pinned, model: PlantModel, Q, R, W_hat: Polytope) -> np.ndarray:
    """Minimizer of the (convex) rollout cost over ``W_hat``, ignoring excitation."""
    m = model.m
    # cost(c) = c'Hc/2 + f'c + const; the rollout is affine in c
    x = np.asarray(x, dtype=float)
    H = 2.0 * R.copy()
    f = np.zeros(m)
    Ak = np.eye(model.n)
    drift = model.A @ x
    for w in pinned:
        # x_k = drift + Ak B c
        Mk = Ak @ model.B
        H += 2.0 * Mk.T @ Q @ Mk
        f += 2.0 * Mk.T @ Q @ drift
        drift = model.A @ drift + model.B @ w
        Ak = model.A @ Ak
    return solve_qp(H, f, W_hat.A, W_hat.b).x
