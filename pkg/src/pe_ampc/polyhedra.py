"""Halfspace-representation polytopes.

Every set used by the controller (state and input constraints, disturbance
bounds, tube cross-sections, terminal sets) is a :class:`Polytope`
``{x : A x <= b}``.  The H-representation is primary; vertex enumeration is
used only for low-dimensional sets (``dim <= 4``), where brute-force
enumeration of basic solutions is exact and cheap.

All geometric comparisons use the absolute tolerance :data:`TOL`.
"""

from __future__ import annotations

import itertools
import json
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError, cKDTree

TOL = 1e-9
VERTEX_MERGE_TOL = 1e-10
MAX_VERTEX_DIM = 4

_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class PolytopeError(ValueError):
    """Raised for invalid polytope construction or operands."""


class Polytope:
    """Bounded convex polytope ``{x : A x <= b}``.

    Instances are treated as immutable; the arrays are copied and marked
    read-only on construction.  An empty set is represented by the marker
    returned from :meth:`Polytope.empty` and reported through
    :attr:`is_empty`.

    Parameters
    ----------
    A : array_like, shape (k, dim)
        Facet normals.
    b : array_like, shape (k,)
        Facet offsets.
    validate : bool
        If True, check nonemptiness and boundedness with linear programs.
    """

    __slots__ = ("A", "b", "dim", "_empty", "_vertices")

    def __init__(self, A, b, validate: bool = True):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise PolytopeError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        if A.shape[1] < 1:
            raise PolytopeError("polytope dimension must be positive")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise PolytopeError("non-finite entries in H-representation")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.dim = A.shape[1]
        self._empty = False
        self._vertices = None
        if validate:
            if _lp_feasible_point(A, b) is None:
                raise PolytopeError("polytope is empty")
            if not _is_bounded(A, b):
                raise PolytopeError("polytope is unbounded")

    # ------------------------------------------------------------------ #
    # constructors
    # ------------------------------------------------------------------ #
    @classmethod
    def empty(cls, dim: int) -> "Polytope":
        """Explicit empty-set marker of dimension ``dim``."""
        p = cls.__new__(cls)
        p.A = np.zeros((0, dim))
        p.b = np.zeros(0)
        for arr in (p.A, p.b):
            arr.setflags(write=False)
        p.dim = dim
        p._empty = True
        p._vertices = np.zeros((0, dim))
        return p

    @classmethod
    def box(cls, lower, upper=None) -> "Polytope":
        """Axis-aligned box.  ``box(r)`` is the symmetric box ``[-r, r]``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        if upper is None:
            upper, lower = lower, -lower
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lower, upper = np.broadcast_arrays(lower, upper)
        if np.any(upper < lower):
            raise PolytopeError("box upper bound below lower bound")
        n = lower.size
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([upper, -lower])
        return cls(A, b, validate=False)

    @classmethod
    def origin(cls, dim: int) -> "Polytope":
        """The singleton ``{0}``."""
        return cls.box(np.zeros(dim))

    @classmethod
    def from_vertices(cls, points) -> "Polytope":
        """Convex hull of a finite point set (any affine dimension)."""
        A, b, V = hull_halfspaces(points)
        A, b = _normalize_rows(A, b)
        A, b = _merge_parallel(A, b)
        return _sorted(A, b, V)

    # ------------------------------------------------------------------ #
    @property
    def is_empty(self) -> bool:
        return self._empty

    @property
    def normals(self) -> np.ndarray:
        return self.A

    @property
    def offsets(self) -> np.ndarray:
        return self.b

    @property
    def n_facets(self) -> int:
        return self.A.shape[0]

    def __repr__(self) -> str:
        if self._empty:
            return f"Polytope.empty(dim={self.dim})"
        return f"Polytope(dim={self.dim}, facets={self.n_facets})"

    def __contains__(self, x) -> bool:
        return contains_point(self, x)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Polytope":
        return cls(data["A"], data["b"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        return cls.from_dict(json.loads(text))

    def chebyshev_radius(self) -> float:
        """Radius of the largest inscribed ball (0 for flat sets)."""
        if self._empty:
            return 0.0
        norms = np.linalg.norm(self.A, axis=1)
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, norms[:, None]])
        res = linprog(c, A_ub=A_ub, b_ub=self.b, bounds=[(None, None)] * self.dim + [(0, None)],
                      method="highs", options=_LP_OPTIONS)
        return float(res.x[-1]) if res.status == 0 else 0.0

    def volume(self) -> float:
        verts = vertices(self)
        if len(verts) <= self.dim:
            return 0.0
        try:
            return float(ConvexHull(verts).volume)
        except QhullError:
            return 0.0


# ---------------------------------------------------------------------- #
# LP helpers
# ---------------------------------------------------------------------- #
def _lp_feasible_point(A: np.ndarray, b: np.ndarray):
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.zeros(n)
    res = linprog(np.zeros(n), A_ub=A, b_ub=b + TOL, bounds=[(None, None)] * n,
                  method="highs", options=_LP_OPTIONS)
    return res.x if res.status == 0 else None


def _lp_max(A: np.ndarray, b: np.ndarray, d: np.ndarray):
    """Return (status, value) of max d.x over {A x <= b}."""
    n = A.shape[1]
    res = linprog(-d, A_ub=A, b_ub=b, bounds=[(None, None)] * n,
                  method="highs", options=_LP_OPTIONS)
    if res.status == 3:
        return "unbounded", np.inf
    if res.status == 2:
        return "infeasible", -np.inf
    if res.status != 0:
        raise PolytopeError(f"LP failed: {res.message}")
    return "ok", float(-res.fun)


def _is_bounded(A: np.ndarray, b: np.ndarray) -> bool:
    n = A.shape[1]
    for j in range(n):
        for s in (1.0, -1.0):
            d = np.zeros(n)
            d[j] = s
            status, _ = _lp_max(A, b, d)
            if status == "unbounded":
                return False
    return True


# ---------------------------------------------------------------------- #
# primitives
# ---------------------------------------------------------------------- #
def _check_same_dim(p: Polytope, q: Polytope) -> None:
    if p.dim != q.dim:
        raise PolytopeError(f"dimension mismatch: {p.dim} vs {q.dim}")


def support(p: Polytope, d) -> float:
    """Support function ``max_{x in p} d.x`` solved as a linear program."""
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.size != p.dim:
        raise PolytopeError(f"direction has size {d.size}, polytope dim is {p.dim}")
    if p.is_empty:
        raise PolytopeError("support of an empty set")
    status, val = _lp_max(p.A, p.b, d)
    if status == "unbounded":
        raise PolytopeError("unbounded support LP; polytope invariant violated")
    if status == "infeasible":
        raise PolytopeError("support of an infeasible H-representation")
    return val


def support_many(p: Polytope, D) -> np.ndarray:
    """Support values for every row of ``D``.

    Uses the vertex set when ``p.dim <= 4`` and falls back to one LP per
    direction otherwise.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if p.dim <= MAX_VERTEX_DIM:
        V = vertices(p)
        if len(V) == 0:
            raise PolytopeError("support of an empty set")
        return (D @ V.T).max(axis=1)
    return np.array([support(p, d) for d in D])


def vertices(p: Polytope) -> np.ndarray:
    """All extreme points of ``p`` as rows, deduplicated at :data:`TOL`.

    Brute-force enumeration over every ``dim``-subset of facets: each
    nonsingular subset gives a candidate basic solution, kept if it
    satisfies all inequalities.
    """
    if p._vertices is not None:
        return p._vertices
    n = p.dim
    if n > MAX_VERTEX_DIM:
        raise PolytopeError(f"vertex enumeration limited to dim <= {MAX_VERTEX_DIM}, got {n}")
    A, b = p.A, p.b
    k = A.shape[0]
    if k < n:
        raise PolytopeError("too few facets to bound the set")
    combos = np.array(list(itertools.combinations(range(k), n)), dtype=int)
    As = A[combos]
    bs = b[combos]
    dets = np.linalg.det(As)
    scale = np.prod(np.linalg.norm(As, axis=2), axis=1)
    ok = np.abs(dets) > 1e-12 * np.maximum(scale, 1e-300)
    if not np.any(ok):
        raise PolytopeError("vertex enumeration failed: no nonsingular facet subset")
    X = np.linalg.solve(As[ok], bs[ok][..., None])[..., 0]
    feas = np.all(X @ A.T <= b + 1e-8 * (1.0 + np.abs(b)), axis=1)
    X = X[feas]
    V = _dedupe(X, VERTEX_MERGE_TOL)
    if len(V) == 0:
        raise PolytopeError("vertex enumeration failed: no feasible vertex")
    V.setflags(write=False)
    p._vertices = V
    return V


def _dedupe(X: np.ndarray, tol: float) -> np.ndarray:
    """Drop points within ``tol`` (max-norm) of an earlier one in lexicographic order."""
    if len(X) == 0:
        return X.reshape(0, X.shape[-1] if X.ndim == 2 else 0)
    X = X[np.lexsort(X.T[::-1])]
    pairs = cKDTree(X).query_pairs(tol, p=np.inf, output_type="ndarray")
    keep = np.ones(len(X), dtype=bool)
    for a, b in sorted(map(tuple, pairs)):
        if keep[a]:
            keep[b] = False
    return X[keep]


def contains_point(p: Polytope, x, tol: float = TOL) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != p.dim:
        raise PolytopeError(f"point has size {x.size}, polytope dim is {p.dim}")
    if p.is_empty:
        return False
    return bool(np.all(p.A @ x <= p.b + tol))


def contains_set(outer: Polytope, inner: Polytope, tol: float = TOL) -> bool:
    """True iff ``inner`` is a subset of ``outer`` (facet-wise support test)."""
    _check_same_dim(outer, inner)
    if inner.is_empty:
        return True
    if outer.is_empty:
        return False
    h = support_many(inner, outer.A)
    return bool(np.all(h <= outer.b + tol))


def equals(p: Polytope, q: Polytope, tol: float = TOL) -> bool:
    """Set equality via mutual containment."""
    return contains_set(p, q, tol) and contains_set(q, p, tol)


# ---------------------------------------------------------------------- #
# canonical form
# ---------------------------------------------------------------------- #
def _normalize_rows(A: np.ndarray, b: np.ndarray):
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 1e-14
    # zero rows are either trivially true (b >= 0) or make the set empty
    if np.any(~keep & (b < -TOL)):
        return None, None
    A = A[keep] / norms[keep, None]
    b = b[keep] / norms[keep]
    return A, b


def _merge_parallel(A: np.ndarray, b: np.ndarray):
    """Keep the tightest offset among rows with equal unit normals."""
    keys = np.round(A / 1e-10).astype(np.int64)
    best = {}
    for i, key in enumerate(map(tuple, keys)):
        if key not in best or b[i] < b[best[key]]:
            best[key] = i
    idx = sorted(best.values())
    return A[idx], b[idx]


def canonicalize(p: Polytope) -> Polytope:
    """Irredundant H-representation with rows in lexicographic order.

    For ``dim <= 4`` the canonical form is the hull of the enumerated
    vertex set.  Above that, row ``i`` is dropped when maximizing
    ``a_i.x`` over the remaining rows cannot exceed ``b_i`` by more than
    :data:`TOL` (one LP per row).
    """
    if p.is_empty:
        return p
    A, b = _normalize_rows(p.A, p.b)
    if A is None:
        return Polytope.empty(p.dim)
    A, b = _merge_parallel(A, b)
    if p.dim <= MAX_VERTEX_DIM:
        try:
            V = vertices(Polytope(A, b, validate=False))
        except PolytopeError:
            if _lp_feasible_point(A, b) is None:
                return Polytope.empty(p.dim)
            raise
        return Polytope.from_vertices(V)
    if _lp_feasible_point(A, b) is None:
        return Polytope.empty(p.dim)
    keep = np.ones(len(b), dtype=bool)
    for i in range(len(b)):
        mask = keep.copy()
        mask[i] = False
        # cap the tested row so the LP stays bounded
        A_i = np.vstack([A[mask], A[i]])
        b_i = np.append(b[mask], b[i] + 1.0)
        status, val = _lp_max(A_i, b_i, A[i])
        if status == "ok" and val <= b[i] + TOL:
            keep[i] = False
    return _sorted(A[keep], b[keep])


def _sorted(A: np.ndarray, b: np.ndarray, V=None) -> Polytope:
    order = np.lexsort(np.column_stack([A, b]).T[::-1])
    q = Polytope(A[order], b[order], validate=False)
    if V is not None:
        V = np.array(V, dtype=float)
        V.setflags(write=False)
        q._vertices = V
    return q


# ---------------------------------------------------------------------- #
# hull of points
# ---------------------------------------------------------------------- #
def hull_halfspaces(points):
    """H-representation ``(A, b)`` and extreme points of ``conv(points)``.

    Full-dimensional clouds go through Qhull.  Lower-dimensional clouds are
    hulled inside their affine span and lifted back, padded with pairs of
    tight facets along the orthogonal complement.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise PolytopeError("hull of an empty point set")
    P = _dedupe(P, VERTEX_MERGE_TOL)
    n = P.shape[1]
    if n == 1:
        lo, hi = P.min(), P.max()
        V = np.array([[lo], [hi]]) if hi - lo > VERTEX_MERGE_TOL else np.array([[hi]])
        return np.array([[1.0], [-1.0]]), np.array([hi, -lo]), V
    c = P.mean(axis=0)
    Y = P - c
    extent = max(np.max(np.abs(Y)), 1.0)
    _, s, Vt = np.linalg.svd(Y, full_matrices=True)
    r = int(np.sum(s > 1e-11 * extent))
    if r == n:
        try:
            hull = ConvexHull(P)
            eq = hull.equations
            return eq[:, :-1].copy(), -eq[:, -1].copy(), P[hull.vertices]
        except QhullError:
            # nearly flat: drop the weakest direction
            r = n - 1
    basis = Vt[:r]          # span directions
    comp = Vt[r:]           # orthogonal complement
    rows, offs = [], []
    if r == 0:
        V = P[:1]
    elif r == 1:
        t = Y @ basis[0]
        rows += [basis[0], -basis[0]]
        offs += [t.max() + basis[0] @ c, -t.min() - basis[0] @ c]
        V = P[[int(np.argmin(t)), int(np.argmax(t))]]
    else:
        T = Y @ basis.T
        hull = ConvexHull(T)
        for a_sub, off in zip(hull.equations[:, :-1], -hull.equations[:, -1]):
            a = a_sub @ basis
            rows.append(a)
            offs.append(off + a @ c)
        V = P[hull.vertices]
    for u in comp:
        rows += [u, -u]
        offs += [u @ c, -u @ c]
    return np.array(rows), np.array(offs), V


# ---------------------------------------------------------------------- #
# set operations
# ---------------------------------------------------------------------- #
def minkowski_sum(p: Polytope, q: Polytope) -> Polytope:
    """``{a + b : a in p, b in q}`` via pairwise vertex sums and a hull."""
    _check_same_dim(p, q)
    if p.is_empty or q.is_empty:
        return Polytope.empty(p.dim)
    Vp, Vq = vertices(p), vertices(q)
    pts = (Vp[:, None, :] + Vq[None, :, :]).reshape(-1, p.dim)
    return Polytope.from_vertices(pts)


def minkowski_sum_many(sets: Sequence[Polytope]) -> Polytope:
    if not sets:
        raise PolytopeError("empty sum")
    out = sets[0]
    for s in sets[1:]:
        out = minkowski_sum(out, s)
    return out


def pontryagin_diff(p: Polytope, q: Polytope) -> Polytope:
    """``{x : x + d in p for all d in q}``.

    Each offset of ``p`` is reduced by the support of ``q`` along the facet
    normal.  Returns :meth:`Polytope.empty` when the result is empty.
    """
    _check_same_dim(p, q)
    if p.is_empty:
        return p
    if q.is_empty:
        raise PolytopeError("Pontryagin difference by an empty set")
    b = p.b - support_many(q, p.A)
    return canonicalize(Polytope(p.A, b, validate=False))


def linear_map(M, p: Polytope) -> Polytope:
    """Image ``{M x : x in p}`` via vertex images and a hull."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != p.dim:
        raise PolytopeError(f"map has {M.shape[1]} columns, polytope dim is {p.dim}")
    if p.is_empty:
        return Polytope.empty(M.shape[0])
    return Polytope.from_vertices(vertices(p) @ M.T)


def preimage(M, p: Polytope) -> Polytope:
    """``{x : M x in p}``; may be unbounded, so not validated."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return Polytope(p.A @ M, p.b, validate=False)


def intersect(p: Polytope, q: Polytope) -> Polytope:
    _check_same_dim(p, q)
    if p.is_empty or q.is_empty:
        return Polytope.empty(p.dim)
    return canonicalize(Polytope(np.vstack([p.A, q.A]), np.concatenate([p.b, q.b]), validate=False))


def scale(p: Polytope, alpha: float) -> Polytope:
    """``alpha * p`` for ``alpha > 0``."""
    if not alpha > 0:
        raise PolytopeError(f"scale factor must be positive, got {alpha}")
    if p.is_empty:
        return p
    q = Polytope(p.A, p.b * alpha, validate=False)
    if p._vertices is not None:
        V = p._vertices * alpha
        V.setflags(write=False)
        q._vertices = V
    return q


def cartesian_points(*sets: Iterable[np.ndarray]) -> np.ndarray:
    """Helper: rows of all concatenations of vertex lists."""
    return np.array([np.concatenate(c) for c in itertools.product(*sets)])
