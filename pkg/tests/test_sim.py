import copy

import numpy as np
import pytest

from pe_ampc import sim
from pe_ampc.polyhedra import contains_point
from pe_ampc.regulator import schur_check

from conftest import random_tube_scenario


class TestZOH:
    def test_pure_integrator(self):
        m = sim.discretize_zoh(np.zeros((2, 2)), np.eye(2), 1.0)
        np.testing.assert_allclose(m.A, np.eye(2))
        np.testing.assert_allclose(m.B, np.eye(2))

    def test_scalar(self):
        m = sim.discretize_zoh([[-1.0]], [[1.0]], 0.1)
        assert m.A[0, 0] == pytest.approx(np.exp(-0.1), abs=1e-12)
        assert m.B[0, 0] == pytest.approx(1 - np.exp(-0.1), abs=1e-12)
        assert m.A[0, 0] == pytest.approx(0.904837, abs=1e-6)
        assert m.B[0, 0] == pytest.approx(0.095163, abs=1e-6)

    def test_truck_models_schur(self, truck_cfg):
        for model in truck_cfg.models.values():
            assert schur_check(model.A)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            sim.discretize_zoh([[0.0]], [[1.0]], 0.0)


class TestSchedule:
    def test_lookup(self, truck_cfg):
        s = truck_cfg.schedule
        assert [s.model_id(i) for i in (0, 39, 40, 79, 80, 119, 120, 159)] == [
            "nominal", "nominal", "stiffness_loss", "stiffness_loss", "loss_and_load", "loss_and_load",
            "load", "load"]
        assert s.windows(160) == [(0, 40, "nominal"), (40, 80, "stiffness_loss"),
                                  (80, 120, "loss_and_load"), (120, 160, "load")]
        assert s.windows(50)[-1] == (40, 50, "stiffness_loss")

    @pytest.mark.parametrize("segments", [[(1, "a")], [(0, "a"), (0, "a")], [(0, "a"), (5, "b")], []])
    def test_invalid(self, segments):
        with pytest.raises(sim.ConfigError):
            sim.PlantSchedule(segments, {"a": None})


class TestConfig:
    def test_truck_values(self, truck_cfg):
        assert truck_cfg.h == 5 and truck_cfg.l == 5
        assert truck_cfg.N == 3 and truck_cfg.steps == 160
        np.testing.assert_allclose(truck_cfg.x0, [-1.0, 15.0])
        np.testing.assert_allclose(truck_cfg.Q, np.diag([100.0, 1.0]))

    def test_missing_key(self, truck_cfg):
        data = copy.deepcopy(truck_cfg.raw)
        del data["constraints"]
        with pytest.raises(sim.ConfigError):
            sim.ScenarioConfig.from_dict(data)

    @pytest.mark.parametrize("override", [{"adaptation.strategy": "magic"}, {"exciter.l": 3},
                                          {"plant.nominal": "ghost"}, {"run.steps": -1}])
    def test_rejects(self, truck_cfg, override):
        with pytest.raises(sim.ConfigError):
            truck_cfg.with_overrides(**override)

    def test_strategy_order(self, truck_cfg):
        cfg = truck_cfg.with_overrides(**{"adaptation.strategy": ["redesign", "verify", "robustified"]})
        assert cfg.strategies == ["verify", "robustified", "redesign"]
        assert cfg.design_lambda() == pytest.approx(0.99)
        assert truck_cfg.design_lambda() == 1.0

    def test_bundled_lookup(self):
        for name in ("truck", "truck_adaptive", "equilibrium"):
            assert sim.ScenarioConfig.load(name).name == name


class TestLoop:
    def test_equilibrium(self):
        tr = sim.run_closed_loop(sim.ScenarioConfig.load("equilibrium"))
        assert len(tr) == 50
        for name in ("x", "z", "u", "v"):
            np.testing.assert_array_equal(tr.array(name), 0.0)
        assert tr.all_flags_ok()

    def test_truck_flags(self, truck_trace):
        assert len(truck_trace) == 160
        for name in sim.FLAG_NAMES:
            assert truck_trace.flag(name).all(), name

    def test_tube_against_design(self, truck_trace, truck_setup):
        S = truck_setup.design.S
        for x, z in zip(truck_trace.array("x"), truck_trace.array("z")):
            assert contains_point(S, x - z, 1e-9)

    def test_input_split(self, truck_trace):
        np.testing.assert_allclose(truck_trace.array("u"),
                                   truck_trace.array("u_hat") + truck_trace.array("w_hat"), atol=1e-14)

    def test_plant_switch_events(self, truck_trace):
        switches = [e for e in truck_trace.events if e["type"] == "plant_switch"]
        assert [e["step"] for e in switches] == [40, 80, 120]

    def test_initial_state_outside(self, truck_cfg):
        cfg = truck_cfg.with_overrides(**{"run.x0": [0.0, 20.0], "run.steps": 5})
        with pytest.raises(sim.InvariantBreach) as exc:
            sim.run_closed_loop(cfg)
        assert exc.value.step == 0

    def test_residual_breach_when_family_too_small(self, truck_cfg):
        # the plant leaves the family the tube was designed for
        cfg = truck_cfg.with_overrides(**{"plant.family": ["nominal"], "run.steps": 60})
        with pytest.raises(sim.InvariantBreach) as exc:
            sim.run_closed_loop(cfg)
        assert exc.value.step >= 40
        tr = sim.run_closed_loop(cfg.with_overrides(**{"run.steps": 45}), assert_invariants=False)
        assert not tr.flag("residual_in_Wp")[40:].all()
        assert tr.flag("residual_in_Wp")[:40].all()

    def test_deterministic(self):
        cfg = sim.ScenarioConfig.load("truck").with_overrides(**{"run.steps": 30})
        assert sim.run_closed_loop(cfg).to_csv() == sim.run_closed_loop(cfg).to_csv()

    def test_seed_changes_excitation(self, truck_cfg):
        a = sim.run_closed_loop(truck_cfg.with_overrides(**{"run.steps": 30}))
        b = sim.run_closed_loop(truck_cfg.with_overrides(**{"run.steps": 30, "exciter.seed": 99}))
        assert not np.array_equal(a.array("w_hat"), b.array("w_hat"))

    def test_empty_run(self, truck_cfg):
        tr = sim.run_closed_loop(truck_cfg.with_overrides(**{"run.steps": 0}))
        assert len(tr) == 0
        assert tr.to_csv().splitlines() == [",".join(tr.columns())]

    @pytest.mark.parametrize("seed", range(3))
    def test_random_scenarios(self, seed):
        cfg, setup = random_tube_scenario(np.random.default_rng(100 + seed))
        tr = sim.run_closed_loop(cfg, setup=setup)
        assert tr.all_flags_ok()


class TestAnalysis:
    def test_window_errors(self, truck_trace, truck_cfg):
        errs = sim.window_errors(truck_trace, truck_cfg)
        assert [e[2] for e in errs] == ["nominal", "stiffness_loss", "loss_and_load", "load"]
        assert max(e[3] for e in errs) <= 1e-3

    def test_decay_rate(self, truck_trace):
        assert 0.0 < sim.decay_rate(truck_trace) < 1.0

    def test_decay_rate_synthetic(self):
        tr = sim.SimTrace(n=1, m=1)
        for i in range(20):
            tr.records.append(sim.StepRecord(i=i, x=np.zeros(1), z=np.array([0.5 ** i]), u=np.zeros(1),
                                             u_hat=np.zeros(1), w_hat=np.zeros(1), v=np.zeros(1),
                                             theta=np.zeros((2, 1)), pe_min_eig=np.nan, qp_cost=0.0,
                                             flags={}, plant_id="a", prediction_version=0,
                                             est_error=0.0))
        assert sim.decay_rate(tr) == pytest.approx(0.5, abs=1e-12)

    def test_realized_margins(self, truck_trace, truck_cfg):
        own = sim.realized_pe_margins(truck_trace, truck_cfg)
        logged = truck_trace.array("pe_min_eig")
        np.testing.assert_allclose(own[8:], logged[8:], atol=1e-12)

    def test_compare_baseline(self, truck_cfg):
        rep = sim.compare_baseline(truck_cfg.with_overrides(**{"run.steps": 80}))
        on, off = rep["exciter_on"], rep["exciter_off"]
        assert on["pe_min_eig_min"] > 0 >= off["pe_min_eig_min"]
        assert max(w["final_error"] for w in off["window_errors"]) > 1e-3
        assert on["all_flags_ok"]


def test_adaptive_redesign_run():
    cfg = sim.ScenarioConfig.load("truck_adaptive")
    tr = sim.run_closed_loop(cfg)
    assert tr.all_flags_ok()
    updates = [e for e in tr.events if e["type"] == "model_update"]
    assert updates
    versions = tr.array("prediction_version")
    assert np.all(np.diff(versions) >= 0)
    assert versions[-1] == len(updates)
    assert {e["strategy"] for e in updates} <= {"verify", "robustified", "redesign"}
