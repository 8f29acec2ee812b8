import numpy as np
import pytest

from pe_ampc import exciter
from pe_ampc.exciter import (ExcitationError, ExciterState, output_reachability_check, pe_matrix, pe_measure,
                             required_order, solve_pe_step, spe_order_check, state_reachability_check,
                             synthesize_buffer)
from pe_ampc.models import PlantModel
from pe_ampc.polyhedra import Polytope

W_HAT = Polytope.box([0.5])
H = L = 5
RHO0 = 0.05


def direct_pe_matrix(seq, i, l, h, rho0):
    """Independent construction straight from the block definition."""
    seq = np.asarray(seq, dtype=float).reshape(len(seq), -1)
    m = seq.shape[1]
    M = -rho0 * np.eye(m * h)
    for j in range(l):
        blk = np.concatenate([seq[i - j - r] for r in range(h)])
        M += np.outer(blk, blk)
    return M


class TestPEMeasure:
    def test_zero_sequence(self):
        rep = pe_measure(np.zeros(12), 11, L, H, RHO0)
        assert rep.min_eig == pytest.approx(-RHO0)
        assert not rep.feasible
        assert rep.matrix_dim == H

    @pytest.mark.parametrize("c", [0.1, 0.2, 0.3])
    def test_scalar_closed_form(self, c):
        seq = np.array([0.0, 0.0, c, c])
        rep = pe_measure(seq, 3, 2, 1, RHO0)
        assert rep.min_eig == pytest.approx(2 * c * c - RHO0)
        assert rep.feasible == (c * c > RHO0 / 2)

    def test_sinusoid_against_dense_oracle(self):
        seq = 0.5 * np.sin(0.9 * np.arange(20))
        for i in range(5, 20):
            rep = pe_measure(seq, i, 5, 2, RHO0)
            ref = np.linalg.eigvalsh(direct_pe_matrix(seq, i, 5, 2, RHO0))[0]
            assert rep.min_eig == pytest.approx(ref, abs=1e-10)

    def test_multi_input_orientation(self):
        rng = np.random.default_rng(0)
        seq = rng.normal(size=(15, 2))
        np.testing.assert_allclose(pe_matrix(seq, 14, 4, 3, 0.1), direct_pe_matrix(seq, 14, 4, 3, 0.1), atol=1e-12)

    def test_insufficient_history(self):
        with pytest.raises(IndexError):
            pe_measure(np.ones(8), 7, L, H, RHO0)


class TestSPE:
    def test_zero(self):
        assert not spe_order_check(np.zeros(12), 11, H, L, RHO0, 10.0)

    def test_buffer(self):
        buf = synthesize_buffer(W_HAT, L, H, RHO0, seed=0)
        bound = L * 0.25
        assert spe_order_check(buf, H + L - 2, H, L, RHO0, 2 * bound * H)

    def test_trivial_upper_bound(self):
        rng = np.random.default_rng(3)
        seq = rng.uniform(-0.5, 0.5, size=(20, 1))
        rho1 = L * H * 0.25 * 1 + 1
        G = pe_matrix(seq, 19, L, H, 0.0)
        assert np.linalg.eigvalsh(G)[-1] < rho1


class TestBuffer:
    def test_truck_buffer(self):
        buf = synthesize_buffer(W_HAT, L, H, RHO0, seed=0)
        assert buf.shape == (H + L - 1, 1)
        assert np.all(np.abs(buf) <= 0.5 + 1e-12)
        np.testing.assert_array_equal(buf[L:], buf[:H - 1])
        assert pe_measure(buf, H + L - 2, L, H, RHO0).min_eig > exciter.PE_MARGIN

    def test_rho_zero_still_strict(self):
        buf = synthesize_buffer(W_HAT, L, H, 0.0, seed=1)
        assert pe_measure(buf, H + L - 2, L, H, 0.0).min_eig > 0

    def test_trace_bound_failure(self):
        with pytest.raises(ExcitationError) as exc:
            synthesize_buffer(W_HAT, L, H, L * 0.25 + 0.01)
        assert exc.value.best_min_eig < 0

    def test_window_shorter_than_order(self):
        with pytest.raises(ValueError):
            synthesize_buffer(W_HAT, 3, 5, RHO0)

    def test_seeded(self):
        a = synthesize_buffer(W_HAT, L, H, RHO0, seed=7)
        b = synthesize_buffer(W_HAT, L, H, RHO0, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_invalid_buffer_rejected(self):
        buf = synthesize_buffer(W_HAT, L, H, RHO0, seed=0).copy()
        buf[-1] = -buf[-1] if buf[-1] != 0 else 0.1
        with pytest.raises(ValueError, match="periodic"):
            ExciterState(W_hat=W_HAT, l=L, h=H, rho0=RHO0, buffer=buf)


class TestPEStep:
    @pytest.fixture
    def setup(self, truck_cfg):
        buf = synthesize_buffer(W_HAT, L, H, RHO0, seed=0)
        return ExciterState(W_hat=W_HAT, l=L, h=H, rho0=RHO0, buffer=buf, seed=0), truck_cfg

    def test_buffer_replay_then_feasible(self, setup):
        ex, cfg = setup
        rng = np.random.default_rng(0)
        for i in range(60):
            x = rng.uniform(-3, 3, 2)
            step = solve_pe_step(ex, x, cfg.nominal, cfg.Q, cfg.R)
            assert step.feasible
            if i < H + L - 1:
                np.testing.assert_array_equal(step.w, ex.buffer[i])
            else:
                assert step.cost <= step.fallback_cost + 1e-12
            assert abs(step.w[0]) <= 0.5 + 1e-12
        seq = ex.sequence()
        for i in range(H + L - 1, len(seq)):
            assert pe_measure(seq, i, L, H, RHO0).min_eig > 0

    def test_fallback_only(self, setup):
        ex, cfg = setup
        ex.n_random = 0
        for _ in range(H + L - 1):
            solve_pe_step(ex, np.zeros(2), cfg.nominal, cfg.Q, cfg.R)
        # far from the origin with no random draws the periodic value is still available
        step = solve_pe_step(ex, np.array([14.0, 14.0]), cfg.nominal, cfg.Q, cfg.R)
        assert step.feasible and step.n_feasible >= 1

    def test_fallback_always_passes_screen(self, setup):
        # windows k >= 1 are shifts of already accepted windows when w(i) = w(i - l)
        ex, cfg = setup
        rng = np.random.default_rng(5)
        for _ in range(80):
            i = ex.time
            if i >= H + L - 1:
                seq = ex.sequence()
                tail = seq[i - (L + H - 2):i]
                pinned = np.array([seq[i + k + 1 - L] for k in range(H - 1)])
                ok = exciter.kernels.pe_screen(tail, seq[i - L][None, :], pinned, L, H, RHO0, exciter.PE_MARGIN)
                assert ok[0]
            solve_pe_step(ex, rng.uniform(-5, 5, 2), cfg.nominal, cfg.Q, cfg.R)

    def test_deviates_from_buffer(self, truck_trace):
        w = truck_trace.array("w_hat")[:, 0]
        dev = np.flatnonzero(np.abs(w[L:] - w[:-L]) > 1e-12) + L
        assert dev.size > 0
        assert dev[0] >= H + L - 1


class TestOrders:
    def test_required_order(self):
        assert required_order(2, 1) == 5
        assert required_order(1, 1) == 3
        assert required_order(3, 2) == 8

    def test_state_reachability(self, truck_cfg):
        assert state_reachability_check(PlantModel(np.zeros((2, 2)), np.eye(2)))
        assert not state_reachability_check(PlantModel(np.eye(2), np.zeros((2, 1))))
        for m in truck_cfg.models.values():
            assert state_reachability_check(m)

    def test_output_reachability(self, truck_cfg, truck_setup):
        assert output_reachability_check(truck_cfg.nominal, truck_setup.design.Kt)
        assert output_reachability_check(truck_cfg.nominal, np.zeros((1, 2)))
        rng = np.random.default_rng(0)
        for _ in range(5):
            m = PlantModel(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)))
            assert output_reachability_check(m, rng.normal(size=(2, 3)))
