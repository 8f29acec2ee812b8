import sys

import numpy as np
import pytest

from pe_ampc import sim
from pe_ampc.polyhedra import Polytope


def random_polytope(rng, dim=2, n_points=8, spread=1.0, center=None):
    """Hull of random points around ``center`` (origin by default)."""
    pts = rng.normal(size=(n_points, dim)) * spread
    if center is not None:
        pts += center
    return Polytope.from_vertices(pts)


def random_c_set(rng, dim=2, n_points=8, spread=1.0):
    """Random polytope with the origin in its interior."""
    pts = rng.normal(size=(n_points, dim)) * spread
    pts = np.vstack([pts, -pts[: dim + 1]])
    return Polytope.from_vertices(pts)


@pytest.fixture(scope="session")
def truck_cfg():
    return sim.ScenarioConfig.load("truck")


@pytest.fixture(scope="session")
def truck_setup(truck_cfg):
    return sim.design_controller(truck_cfg)


@pytest.fixture(scope="session")
def truck_trace(truck_cfg, truck_setup):
    return sim.run_closed_loop(truck_cfg, setup=truck_setup)


@pytest.fixture(scope="session")
def truck_off_trace(truck_cfg):
    cfg = truck_cfg.with_overrides(**{"exciter.enabled": False})
    return sim.run_closed_loop(cfg, assert_invariants=False)


def random_tube_scenario(rng, steps=45, max_tries=50):
    """Random stabilizable 2-state plant with a small vertex family around it.

    The plant switches between family members every 15 steps.  Draws whose
    tube is not admissible are discarded.
    """
    from pe_ampc.exciter import ExcitationError
    from pe_ampc.regulator import DesignError

    for _ in range(max_tries):
        A = rng.normal(size=(2, 2))
        A *= rng.uniform(0.6, 1.1) / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.normal(size=(2, 1))
        if abs(np.linalg.det(np.hstack([B, A @ B]))) < 0.1:
            continue
        d = rng.uniform(0.005, 0.02)
        models = {"m0": {"A": A.tolist(), "B": B.tolist()}}
        for k in (1, 2):
            models[f"m{k}"] = {"A": (A + d * rng.normal(size=(2, 2))).tolist(),
                               "B": (B + d * rng.normal(size=(2, 1))).tolist()}
        data = {"name": "random", "plant": {"models": models, "nominal": "m0",
                                             "schedule": [[0, "m0"], [15, "m1"], [30, "m2"]]},
                "constraints": {"X": {"box": [10, 10]}, "U": {"box": [3]}},
                "controller": {"N": 4, "z0": "optimize"},
                "exciter": {"seed": int(rng.integers(1 << 30))},
                "run": {"steps": steps, "x0": rng.uniform(-1, 1, 2).tolist()}}
        cfg = sim.ScenarioConfig.from_dict(data)
        try:
            return cfg, sim.design_controller(cfg)
        except (DesignError, ExcitationError):
            continue
    raise RuntimeError("no admissible random scenario found")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
