"""Plant model containers shared across the controller modules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time pair ``x+ = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(A.shape[0], -1)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("non-finite model entries")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def step(self, x, u) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def theta(self) -> np.ndarray:
        """Stacked parameter matrix ``[A B]^T`` of shape (n+m, n)."""
        return np.hstack([self.A, self.B]).T

    @classmethod
    def from_theta(cls, theta) -> "PlantModel":
        theta = np.asarray(theta, dtype=float)
        n = theta.shape[1]
        AB = theta.T
        return cls(AB[:, :n], AB[:, n:])

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PlantModel":
        return cls(data["A"], data["B"])

    def same_as(self, other: "PlantModel", tol: float = 0.0) -> bool:
        return (self.A.shape == other.A.shape and self.B.shape == other.B.shape
                and np.max(np.abs(self.A - other.A), initial=0.0) <= tol
                and np.max(np.abs(self.B - other.B), initial=0.0) <= tol)


@dataclass(frozen=True)
class ModelFamily:
    """Finite list of candidate ``(A, B)`` pairs spanning the uncertainty set.

    The list need not be convex-hull minimal.  Model residuals are affine in
    ``(A, B)``, so bounds computed over these members also cover every
    model in their convex hull.
    """

    members: tuple

    def __init__(self, members: Sequence[PlantModel]):
        members = tuple(members)
        if not members:
            raise ValueError("model family must be nonempty")
        n, m = members[0].n, members[0].m
        for p in members:
            if (p.n, p.m) != (n, m):
                raise ValueError("family members have inconsistent dimensions")
        object.__setattr__(self, "members", members)

    @property
    def n(self) -> int:
        return self.members[0].n

    @property
    def m(self) -> int:
        return self.members[0].m

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def contains_member(self, model: PlantModel, tol: float = 1e-12) -> bool:
        return any(model.same_as(p, tol) for p in self.members)
