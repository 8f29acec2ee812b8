from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linprog, minimize

from pe_ampc.qp import QPInfeasible, solve_qp


def random_qp(rng, n=3, k=8):
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    f = rng.normal(size=n) * 3
    G = rng.normal(size=(k, n))
    h = rng.uniform(0.2, 1.0, size=k)  # origin strictly feasible
    return H, f, G, h


def test_unconstrained():
    H = np.diag([2.0, 4.0])
    f = np.array([-2.0, -4.0])
    res = solve_qp(H, f, np.zeros((0, 2)), np.zeros(0))
    np.testing.assert_allclose(res.x, [1.0, 1.0])
    assert res.value == pytest.approx(-3.0)


def test_single_active_bound():
    res = solve_qp(np.eye(1) * 2, [-4.0], [[1.0]], [1.0])
    np.testing.assert_allclose(res.x, [1.0])
    assert res.multipliers[0] == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(20))
def test_kkt_certificate_and_slsqp(seed):
    rng = np.random.default_rng(seed)
    H, f, G, h = random_qp(rng)
    res = solve_qp(H, f, G, h)
    kkt = res.kkt_residuals(H, f, G, h)
    assert max(kkt.values()) <= 1e-8
    ref = minimize(lambda x: 0.5 * x @ H @ x + f @ x, np.zeros(3), jac=lambda x: H @ x + f,
                   constraints=[{"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    assert res.value <= ref.fun + 1e-7
    np.testing.assert_allclose(res.x, ref.x, atol=1e-5)


def test_constraint_order_irrelevant():
    rng = np.random.default_rng(42)
    H, f, G, h = random_qp(rng)
    perm = rng.permutation(G.shape[0])
    a = solve_qp(H, f, G, h)
    b = solve_qp(H, f, G[perm], h[perm])
    np.testing.assert_allclose(a.x, b.x, atol=1e-10)
    np.testing.assert_allclose(a.multipliers[perm], b.multipliers, atol=1e-8)


def test_inactive_constraints_untouched():
    H, f = np.eye(2), np.array([-0.1, -0.2])
    res = solve_qp(H, f, np.eye(2), np.ones(2))
    np.testing.assert_allclose(res.x, [0.1, 0.2])
    assert res.active == [] and res.iterations == 0


def test_not_positive_definite():
    with pytest.raises(ValueError):
        solve_qp(np.diag([1.0, -1.0]), [0.0, 0.0], np.zeros((0, 2)), np.zeros(0))


def test_infeasible_reports_rows():
    G = np.array([[1.0], [-1.0]])
    h = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
    with pytest.raises(QPInfeasible) as exc:
        solve_qp(np.eye(1), [0.0], G, h)
    assert exc.value.violation == pytest.approx(1.0)
    assert set(exc.value.rows) == {0, 1}


def test_degenerate_duplicate_constraints():
    G = np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    h = np.array([0.5, 0.5, 1.0, 0.5])
    res = solve_qp(np.eye(2), [-3.0, -3.0], G, h)
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-12)
    assert max(res.kkt_residuals(np.eye(2), [-3.0, -3.0], G, h).values()) <= 1e-8


@pytest.mark.parametrize("name", ["near_parallel_qp", "near_parallel_qp_2"])
def test_near_parallel_working_set(name):
    # captured from a random tube scenario: many almost parallel rows around
    # the optimum, on which a primal active-set method stalls
    data = np.load(Path(__file__).parent / "data" / f"{name}.npz")
    H, f, G, h = data["H"], data["f"], data["G"], data["h"]
    res = solve_qp(H, f, G, h)
    assert max(res.kkt_residuals(H, f, G, h).values()) <= 1e-8
    assert res.iterations < 50
    ref = minimize(lambda x: 0.5 * x @ H @ x + f @ x, np.zeros(len(f)), jac=lambda x: H @ x + f,
                   constraints=[{"type": "ineq", "fun": lambda x: h - G @ x, "jac": lambda x: -G}],
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    assert res.value <= ref.fun + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_degenerate_random_rows(seed):
    # clusters of almost parallel rows with random offsets; feasibility by an independent LP
    rng = np.random.default_rng(seed)
    for _ in range(50):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 40))
        M = rng.normal(size=(n, n))
        H, f = M @ M.T + 1e-3 * np.eye(n), rng.normal(size=n) * 3
        base = rng.normal(size=(max(1, m // 4), n))
        G = np.array([base[rng.integers(len(base))] + 10.0 ** rng.integers(-12, -2) * rng.normal(size=n)
                      for _ in range(m)])
        h = rng.uniform(-0.2, 1.0, size=m)
        feasible = linprog(np.zeros(n), A_ub=G, b_ub=h, bounds=[(None, None)] * n, method="highs").status == 0
        if not feasible:
            with pytest.raises(QPInfeasible):
                solve_qp(H, f, G, h)
            continue
        res = solve_qp(H, f, G, h)
        kkt = res.kkt_residuals(H, f, G, h)
        scale = max(1.0, np.abs(res.multipliers).max())
        assert kkt["primal"] <= 1e-9 and kkt["dual"] == 0.0
        assert kkt["stationarity"] <= 1e-9 * scale
