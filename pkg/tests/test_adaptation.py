import numpy as np
import pytest

from pe_ampc import invariant
from pe_ampc.adaptation import (ROBUSTIFIED, UpdateRejected, UpdateVerdict, PredictionSetup, apply_update,
                                full_redesign, redesign_gate, robustified_gate_check, verify_update)
from pe_ampc.models import PlantModel
from pe_ampc.regulator import DesignError, build_design, initialize_nominal, optimal_cost


@pytest.fixture(scope="module")
def lam_design(truck_cfg):
    c = truck_cfg
    return build_design(c.nominal, c.family, c.X, c.U, c.Q, c.R, c.alpha, c.N, eps=c.mrpi_eps,
                        terminal_lambda=0.99)


@pytest.fixture(scope="module")
def start(truck_cfg, truck_setup):
    st = initialize_nominal(truck_cfg.x0, truck_setup.design, truck_cfg.nominal, "optimize")
    return st.z, optimal_cost(st.z, truck_setup.design, truck_cfg.nominal)


def test_nominal_candidate_passes_structure(truck_cfg, truck_setup, start):
    z, cost = start
    v = verify_update(truck_cfg.nominal, truck_cfg.family, truck_setup.design, z, cost + 1.0)
    assert v.admissible, v.failed_conditions
    assert v.cost_delta == pytest.approx(-1.0)
    # the same cost is not a strict decrease
    v = verify_update(truck_cfg.nominal, truck_cfg.family, truck_setup.design, z, cost)
    assert v.failed_conditions == ["d"]


def test_load_candidate_fails_invariance_with_max_pi(truck_cfg, truck_setup, start):
    z, cost = start
    load = truck_cfg.models["load"]
    v = verify_update(load, truck_cfg.family, truck_setup.design, z, cost + 1.0)
    assert not v.admissible
    assert "b" in v.failed_conditions
    d = truck_setup.design
    assert not invariant.check_pi(d.Zf, load.A + load.B @ d.K)


def test_load_candidate_keeps_contractive_terminal_set(truck_cfg, lam_design, start):
    load = truck_cfg.models["load"]
    assert invariant.check_pi(lam_design.Zf, load.A + load.B @ lam_design.K)
    z, _ = start
    cost = optimal_cost(z, lam_design, truck_cfg.nominal)
    v = robustified_gate_check(load, truck_cfg.family_sub, lam_design, 0.99, z, cost + 1.0,
                               family=truck_cfg.family, nominal=truck_cfg.nominal)
    assert v.strategy == ROBUSTIFIED
    assert "terminal" not in v.failed_conditions
    assert "P" not in v.failed_conditions
    assert v.details["lyapunov_slack"] >= -1e-8


def test_full_redesign_reproduces_design(truck_cfg, truck_setup):
    c = truck_cfg
    bundle = full_redesign(c.nominal, c.family, c.X, c.U, (c.Q, c.R), c.alpha, c.N, eps=c.mrpi_eps)
    d = truck_setup.design
    np.testing.assert_allclose(bundle.design.K, d.K, atol=1e-12)
    np.testing.assert_allclose(bundle.design.P, d.P, atol=1e-9)
    np.testing.assert_allclose(bundle.design.S.b, d.S.b, atol=1e-9)
    np.testing.assert_allclose(bundle.design.Zf.b, d.Zf.b, atol=1e-9)


def test_redesign_unstabilizable(truck_cfg):
    from pe_ampc.models import ModelFamily
    from pe_ampc.polyhedra import Polytope
    bad = PlantModel([[1.5]], [[0.0]])
    with pytest.raises(DesignError) as exc:
        full_redesign(bad, ModelFamily([bad]), Polytope.box([1.0]), Polytope.box([1.0]),
                      (np.eye(1), np.eye(1)), 0.9, 3)
    assert exc.value.stage == "dare"


def test_redesign_gate(truck_cfg, start):
    c = truck_cfg
    z, cost = start
    bundle = full_redesign(c.nominal, c.family, c.X, c.U, (c.Q, c.R), c.alpha, c.N, eps=c.mrpi_eps)
    assert redesign_gate(bundle, z, cost + 1e-3).admissible
    assert redesign_gate(bundle, z, cost).failed_conditions == ["d"]
    far = redesign_gate(bundle, np.array([100.0, 0.0]), np.inf)
    assert not far.admissible


def test_apply_update(truck_cfg, truck_setup, start):
    c = truck_cfg
    z, cost = start
    pred = PredictionSetup(model=c.nominal, design=truck_setup.design)
    ok = verify_update(c.nominal, c.family, truck_setup.design, z, cost + 1.0)
    new = apply_update(ok, pred, 12)
    assert new.version == 1 and new.since == 12
    assert new.model is c.nominal
    with pytest.raises(UpdateRejected):
        apply_update(UpdateVerdict(admissible=False, strategy="verify", failed_conditions=["b"]), pred, 3)
    bundle = full_redesign(c.nominal, c.family, c.X, c.U, (c.Q, c.R), c.alpha, c.N, eps=c.mrpi_eps)
    with pytest.raises(UpdateRejected):
        apply_update(bundle, pred, 3)
    gated = redesign_gate(bundle, z, cost + 1.0)
    assert apply_update(gated, pred, 5).version == 1
