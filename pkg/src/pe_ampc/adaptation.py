"""Prediction-model updates.

Three strategies decide whether converged estimates may replace the
prediction model:

* ``verify``: keep every controller parameter and check that the tube
  guarantees survive the new model;
* ``robustified``: the terminal set was designed lambda-contractive, which
  discharges the terminal invariance check; a new terminal cost is solved;
* ``redesign``: rerun the whole offline pipeline for the new model.

All strategies finally require the nominal problem to be feasible for the
new model with a strictly smaller optimal cost than the last one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from . import invariant
from .invariant import UncertaintyBound
from .models import ModelFamily, PlantModel
from .polyhedra import Polytope, contains_set, linear_map, minkowski_sum, scale
from .regulator import (
    DesignError,
    MPCInfeasible,
    TubeDesign,
    build_design,
    lyapunov_slack,
    optimal_cost,
    schur_check,
)

VERIFY = "verify"
ROBUSTIFIED = "robustified"
REDESIGN = "redesign"
STRATEGIES = (VERIFY, ROBUSTIFIED, REDESIGN)
LYAPUNOV_TOL = 1e-8


@dataclass
class UpdateVerdict:
    admissible: bool
    strategy: str
    failed_conditions: list = field(default_factory=list)
    cost_delta: float = np.nan
    design: TubeDesign | None = field(default=None, repr=False)
    model: PlantModel | None = field(default=None, repr=False)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"admissible": self.admissible, "strategy": self.strategy,
                "failed_conditions": list(self.failed_conditions),
                "cost_delta": None if not np.isfinite(self.cost_delta) else float(self.cost_delta),
                **self.details}


@dataclass
class RedesignBundle:
    model: PlantModel
    Wp: UncertaintyBound
    design: TubeDesign


def _disturbance(model: PlantModel, design: TubeDesign, Wp: UncertaintyBound) -> Polytope:
    return minkowski_sum(linear_map(model.B, design.W_hat), Wp.set)


def _cost_condition(candidate: PlantModel, design: TubeDesign, z, last_cost: float):
    """Feasibility from ``z`` under ``candidate`` and ``new - last < 0``."""
    try:
        cost = optimal_cost(z, design, candidate)
    except MPCInfeasible:
        return False, np.nan
    delta = cost - last_cost
    return bool(delta < 0.0), float(delta)


def verify_update(candidate: PlantModel, family: ModelFamily, design: TubeDesign, z, last_cost: float) -> UpdateVerdict:
    """Check conditions (a)-(e) for swapping in ``candidate`` with the design unchanged.

    (a) a mismatch bound over the whole family exists for the candidate as
    nominal; (b) ``Zf`` is invariant under ``A + B K``; (c) ``S`` is RPI
    under ``A + B Kt`` for ``B W_hat (+) Wp``; (d) the nominal problem is
    feasible from ``z`` and the optimal cost decreases; (e) the terminal
    cost still satisfies the Lyapunov inequality.
    """
    failed = []
    details = {}
    Wp = invariant.parametric_bound(family, candidate, design.X, design.U)
    if Wp.set.is_empty or not np.all(np.isfinite(Wp.set.b)):
        failed.append("a")
    A_K = candidate.A + candidate.B @ design.K
    A_Kt = candidate.A + candidate.B @ design.Kt
    if not (schur_check(A_K) and invariant.check_pi(design.Zf, A_K)):
        failed.append("b")
    W_new = _disturbance(candidate, design, Wp)
    if not (schur_check(A_Kt) and invariant.check_rpi(design.S, A_Kt, W_new)):
        failed.append("c")
    new_design = replace(design, Wp=Wp, W=W_new)
    ok, delta = _cost_condition(candidate, new_design, z, last_cost)
    if not ok:
        failed.append("d")
    slack = lyapunov_slack(A_K, design.P, design.Q, design.R, design.K)
    details["lyapunov_slack"] = slack
    if slack < -LYAPUNOV_TOL:
        failed.append("e")
    return UpdateVerdict(admissible=not failed, strategy=VERIFY, failed_conditions=failed,
                         cost_delta=delta, design=new_design, model=candidate, details=details)


def robustified_gate_check(candidate: PlantModel, family_sub: ModelFamily, design: TubeDesign, lam: float,
                           z, last_cost: float, family: ModelFamily | None = None,
                           nominal: PlantModel | None = None) -> UpdateVerdict:
    """Reduced check when ``Zf`` is lambda-contractive.

    Labels: ``terminal`` when neither ``(1-lam) Zf`` contains the terminal
    mismatch bound over ``family_sub`` nor ``Zf`` is directly invariant
    under the candidate loop; ``a``, ``c``, ``d`` as in
    :func:`verify_update`; ``P`` when no terminal cost ``P~`` with the
    Lyapunov inequality exists for the candidate.  ``family`` (default
    ``family_sub``) is the set over which the mismatch bound ``Wp`` is
    taken and ``nominal`` the model the contractive set was built for.
    """
    family = family_sub if family is None else family
    failed = []
    details = {}
    A_K = candidate.A + candidate.B @ design.K
    if nominal is not None:
        members = list(family_sub.members)
        if not family_sub.contains_member(candidate, 1e-12):
            members.append(candidate)
        Wf = invariant.terminal_uncertainty_bound(ModelFamily(members), nominal, design.Zf, design.K)
        inclusion = lam < 1.0 and contains_set(scale(design.Zf, 1.0 - lam), Wf.set)
        details["terminal_inclusion"] = bool(inclusion)
        # the inclusion is sufficient for invariance; without it check invariance directly
        if not inclusion and not (schur_check(A_K) and invariant.check_pi(design.Zf, A_K)):
            failed.append("terminal")
    Wp = invariant.parametric_bound(family, candidate, design.X, design.U)
    if Wp.set.is_empty:
        failed.append("a")
    A_Kt = candidate.A + candidate.B @ design.Kt
    W_new = _disturbance(candidate, design, Wp)
    if not (schur_check(A_Kt) and invariant.check_rpi(design.S, A_Kt, W_new)):
        failed.append("c")
    P_new = design.P
    if schur_check(A_K):
        Qk = design.Q + design.K.T @ design.R @ design.K
        P_new = solve_discrete_lyapunov(A_K.T, Qk)
        P_new = 0.5 * (P_new + P_new.T)
        slack = lyapunov_slack(A_K, P_new, design.Q, design.R, design.K)
        details["lyapunov_slack"] = slack
        if slack < -LYAPUNOV_TOL:
            failed.append("P")
    else:
        failed.append("P")
    new_design = replace(design, Wp=Wp, W=W_new, P=P_new)
    ok, delta = _cost_condition(candidate, new_design, z, last_cost)
    if not ok:
        failed.append("d")
    return UpdateVerdict(admissible=not failed, strategy=ROBUSTIFIED, failed_conditions=failed,
                         cost_delta=delta, design=new_design, model=candidate, details=details)


def full_redesign(candidate: PlantModel, family: ModelFamily, X: Polytope, U: Polytope, weights,
                  alpha: float, N: int, eps: float = 1e-4, terminal_lambda: float = 1.0) -> RedesignBundle:
    """Recompute every controller parameter for ``candidate``.

    Raises :class:`~pe_ampc.regulator.DesignError` naming the failing stage.
    """
    Q, R = weights
    design = build_design(candidate, family, X, U, Q, R, alpha, N, eps=eps, terminal_lambda=terminal_lambda)
    return RedesignBundle(model=candidate, Wp=design.Wp, design=design)


def redesign_gate(bundle: RedesignBundle, z, last_cost: float) -> UpdateVerdict:
    """Feasibility of the redesigned problem from ``z`` with cost decrease."""
    failed = []
    if not np.all(bundle.design.Z.A @ z <= bundle.design.Z.b + 1e-9):
        failed.append("d")
        delta = np.nan
    else:
        ok, delta = _cost_condition(bundle.model, bundle.design, z, last_cost)
        if not ok:
            failed.append("d")
    return UpdateVerdict(admissible=not failed, strategy=REDESIGN, failed_conditions=failed,
                         cost_delta=delta, design=bundle.design, model=bundle.model)


@dataclass(frozen=True)
class PredictionSetup:
    """The model and design the controller currently predicts with."""

    model: PlantModel
    design: TubeDesign
    since: int = 0
    version: int = 0


class UpdateRejected(RuntimeError):
    pass


def apply_update(update, setup: PredictionSetup, switch_time: int) -> PredictionSetup:
    """Swap in an admissible verdict or a gated redesign bundle.

    The nominal state is untouched; only the prediction model and design
    change, effective from ``switch_time``.
    """
    if isinstance(update, RedesignBundle):
        raise UpdateRejected("a redesign bundle must pass redesign_gate before it is applied")
    if not isinstance(update, UpdateVerdict) or not update.admissible:
        raise UpdateRejected(f"inadmissible update: failed {getattr(update, 'failed_conditions', '?')}")
    return PredictionSetup(model=update.model, design=update.design, since=switch_time, version=setup.version + 1)


__all__ = [
    "PredictionSetup", "RedesignBundle", "UpdateRejected", "UpdateVerdict", "apply_update", "full_redesign",
    "redesign_gate", "robustified_gate_check", "verify_update", "STRATEGIES", "DesignError",
]
