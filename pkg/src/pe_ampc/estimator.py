"""Recursive least squares with exponential forgetting.

The predictor is ``x_hat(i)^T = phi(i)^T theta(i-1)`` with regressor
``phi(i) = [x(i-1); u(i-1)]`` and ``theta = [A B]^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve

from .models import PlantModel


@dataclass
class EstimatorState:
    theta: np.ndarray
    E: np.ndarray
    lam: float = 0.75

    @classmethod
    def from_model(cls, model: PlantModel, lam: float = 0.75, delta: float = 1e-4) -> "EstimatorState":
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {lam}")
        if not delta > 0:
            raise ValueError("initial information matrix must be positive definite")
        k = model.n + model.m
        return cls(theta=model.theta().copy(), E=delta * np.eye(k), lam=lam)

    def model(self) -> PlantModel:
        return PlantModel.from_theta(self.theta)


def regressor(x, u) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float).reshape(-1), np.asarray(u, dtype=float).reshape(-1)])


def rls_update(est: EstimatorState, phi, x_next) -> EstimatorState:
    """One recursion step; returns a new state.

    ``E <- lam E + phi phi^T`` and
    ``theta <- theta + E^{-1} phi (x_next^T - phi^T theta)``.
    """
    phi = np.asarray(phi, dtype=float).reshape(-1)
    x_next = np.asarray(x_next, dtype=float).reshape(-1)
    E = est.lam * est.E + np.outer(phi, phi)
    E = 0.5 * (E + E.T)
    innovation = x_next - phi @ est.theta
    gain = solve(E, phi, assume_a="pos")
    theta = est.theta + np.outer(gain, innovation)
    return EstimatorState(theta=theta, E=E, lam=est.lam)


def predict(est: EstimatorState, phi) -> np.ndarray:
    return np.asarray(phi, dtype=float) @ est.theta


def estimate_error(est: EstimatorState, truth: PlantModel) -> float:
    return float(np.linalg.norm(est.theta - truth.theta()))
