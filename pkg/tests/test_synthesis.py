import math

import numpy as np
import pytest

from dplqg.errors import ControllabilityError, DefinitenessError, DimensionError, SingularMatrixError
from dplqg.matrix import spectral_radius, sym_eig
from dplqg.mechanisms import AdjacencyParams, PrivacyParams
from dplqg.presets import case_study_scenario, single_vehicle, vehicle_matrices
from dplqg.synthesis import (
    AgentModel,
    FilterState,
    NetworkModel,
    assemble_network,
    closed_loop_matrix,
    control_input,
    filter_covariances,
    filter_step,
    initial_filter_state,
    solve_reference_offset,
    synthesize,
    synthesize_gains,
)

from conftest import GOLDEN, golden_network, random_spd

LN3 = math.log(3.0)


def agent(n=2, A=None, ref=None, **kw):
    A = np.eye(n) if A is None else A
    return AgentModel(A=A, B=np.eye(n)[:, :1] if n > 1 else [[1.0]], C=np.eye(n), W=np.eye(n),
                      privacy=PrivacyParams(LN3, 1e-3), reference_privacy=PrivacyParams(LN3, 0.2),
                      reference_limit=np.ones(n) if ref is None else ref, **kw)


class TestAssemble:
    def test_single_agent(self):
        net = assemble_network([agent(A=np.eye(2), ref=np.zeros(2))], np.eye(2), np.eye(1))
        np.testing.assert_array_equal(net.A, np.eye(2))

    def test_two_agents_block_structure(self):
        a1 = agent(A=[[1.0, 0.1], [0.0, 1.0]])
        a2 = agent(A=[[0.5, 0.0], [0.2, 0.3]])
        net = assemble_network([a1, a2], np.eye(4), np.eye(2), seed=3)
        assert net.A.shape == (4, 4)
        assert not np.any(net.A[:2, 2:]) and not np.any(net.A[2:, :2])
        np.testing.assert_array_equal(net.A[2:, 2:], a2.A)
        np.testing.assert_allclose(np.diag(net.V), [2.96628 ** 2] * 4, rtol=1e-5)
        np.testing.assert_allclose(np.diag(net.Wbar), [1.15882 ** 2] * 4, rtol=1e-5)

    def test_case_study_dynamics(self):
        sc = case_study_scenario(agents=100)
        net = sc.network()
        A1, _ = vehicle_matrices()
        np.testing.assert_allclose(A1, [[1.0, 0.1], [0.0, 1.0]])
        assert len(net.blocks) == 100 and net.A.shape == (200, 200)
        for b in net.blocks:
            np.testing.assert_array_equal(net.A[b.state, b.state], A1)
        assert np.count_nonzero(net.A) == 300

    def test_reference_is_privatized_reproducibly(self):
        a = [agent(ref=np.ones(2))]
        n1 = assemble_network(a, np.eye(2), np.eye(1), seed=5)
        n2 = assemble_network(a, np.eye(2), np.eye(1), seed=5)
        n3 = assemble_network(a, np.eye(2), np.eye(1), seed=6)
        np.testing.assert_array_equal(n1.x_tilde, n2.x_tilde)
        assert not np.array_equal(n1.x_tilde, n3.x_tilde)
        np.testing.assert_array_equal(n1.x_bar, np.ones(2))

    def test_static_sensitivity_override(self):
        a = agent(adjacency=AdjacencyParams(static_radius=2.0))
        assert a.reference_noise_scale() == pytest.approx(2 * 1.15882, rel=1e-5)
        a = agent(adjacency=AdjacencyParams(static_radius=2.0), static_sensitivity=1.0)
        assert a.reference_noise_scale() == pytest.approx(1.15882, rel=1e-5)

    def test_empty(self):
        with pytest.raises(DimensionError):
            assemble_network([], np.eye(2), np.eye(1))

    def test_cost_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            assemble_network([agent()], np.eye(3), np.eye(1))

    def test_indefinite_cost(self):
        with pytest.raises(DefinitenessError):
            assemble_network([agent()], -np.eye(2), np.eye(1))

    def test_non_pd_process_noise(self):
        with pytest.raises(DefinitenessError):
            AgentModel(A=np.eye(1), B=[[1.0]], C=[[1.0]], W=[[0.0]], privacy=PrivacyParams(1, 0.01),
                       reference_privacy=PrivacyParams(1, 0.01), reference_limit=[0.0])


class TestGains:
    def test_golden_ratio(self, golden):
        K, L, M = synthesize_gains(golden)
        assert K[0, 0] == pytest.approx(GOLDEN, rel=1e-9)
        assert L[0, 0] == pytest.approx(-K[0, 0] / (1 + K[0, 0]), rel=1e-12)
        assert M[0, 0] == pytest.approx(-1 / (1 + K[0, 0]), rel=1e-12)
        assert L[0, 0] == pytest.approx(-0.618034, abs=1e-6)
        assert M[0, 0] == pytest.approx(-0.381966, abs=1e-6)

    def test_zero_dynamics(self):
        net = NetworkModel.from_matrices(0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        K, L, M = synthesize_gains(net)
        assert (K[0, 0], L[0, 0], M[0, 0]) == pytest.approx((1.0, 0.0, -0.5), abs=1e-12)

    def test_uncontrollable(self):
        with pytest.raises(ControllabilityError):
            synthesize_gains(NetworkModel.from_matrices(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0))

    def test_closed_loop_stable(self):
        net = case_study_scenario(agents=3).network()
        synth = synthesize(net)
        assert spectral_radius(closed_loop_matrix(net, synth)) < 1

    def test_certainty_equivalence(self):
        net = case_study_scenario(agents=2).network()
        base = synthesize_gains(net)
        for s, sb in [(0.1, 0.0), (10.0, 5.0), (1e-6, 100.0)]:
            other = synthesize_gains(net.with_noise(s, sb))
            for a, b in zip(base, other):
                assert np.array_equal(a, b)


class TestOffset:
    def test_zero_reference(self, golden):
        net = golden_network(x_tilde=0.0)
        K, _, _ = synthesize_gains(net)
        np.testing.assert_array_equal(solve_reference_offset(net, K), [0.0])

    def test_golden_ratio(self, golden):
        K, _, _ = synthesize_gains(golden)
        assert solve_reference_offset(golden, K)[0] == pytest.approx(-GOLDEN, rel=1e-9)

    def test_zero_dynamics(self):
        net = NetworkModel.from_matrices(0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, x_tilde=[3.0])
        K, _, _ = synthesize_gains(net)
        assert solve_reference_offset(net, K)[0] == pytest.approx(-6.0, rel=1e-12)

    def test_fixed_point_residual(self):
        net = case_study_scenario(agents=3).network()
        K, _, _ = synthesize_gains(net)
        g = solve_reference_offset(net, K)
        A, B, R = net.A, net.B, net.R
        T = A.T @ (np.eye(net.n) - K @ B @ np.linalg.solve(R + B.T @ K @ B, B.T))
        res = np.linalg.norm(g - (T @ g - net.Q @ net.x_tilde))
        assert res <= 1e-9 * np.linalg.norm(g)

    def test_override_reference(self, golden):
        K, _, _ = synthesize_gains(golden)
        assert solve_reference_offset(golden, K, reference=[2.0])[0] == pytest.approx(-2 * GOLDEN, rel=1e-9)

    def test_singular(self):
        # with K = 0 the iteration matrix is A' itself, which has a unit eigenvalue here
        net = NetworkModel.from_matrices(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, x_tilde=[1.0])
        with pytest.raises(SingularMatrixError, match="spectral radius"):
            solve_reference_offset(net, np.zeros((1, 1)))


class TestCovariances:
    def test_golden_ratio(self, golden):
        S, Sb = filter_covariances(golden)
        assert S[0, 0] == pytest.approx(GOLDEN, rel=1e-9)
        assert Sb[0, 0] == pytest.approx(GOLDEN - 1, rel=1e-9)

    def test_zero_dynamics(self):
        net = NetworkModel.from_matrices(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2))
        S, Sb = filter_covariances(net)
        np.testing.assert_allclose(S, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(Sb, np.eye(2) / 2, atol=1e-14)

    def test_vehicle_block_table_value(self):
        from dplqg.mechanisms import noise_scale
        net = single_vehicle(noise_scale(PrivacyParams(1.0, 0.05), 1.0))
        _, Sb = filter_covariances(net)
        assert np.trace(Sb) == pytest.approx(2.95, rel=0.01)

    def test_information_form_agrees(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(3, 3)) * 0.4
        C, V, W = np.diag([1.0, 2.0, 0.5]), np.diag([1.0, 4.0, 2.0]), random_spd(rng, 3)
        net = NetworkModel.from_matrices(A, np.eye(3), C, W, V, np.eye(3), np.eye(3))
        S, Sb = filter_covariances(net)
        info = np.linalg.inv(C.T @ np.linalg.inv(V) @ C + np.linalg.inv(S))
        np.testing.assert_allclose(Sb, info, rtol=1e-10, atol=1e-12)

    def test_orderings_and_block_structure(self):
        net = case_study_scenario(agents=4).network()
        S, Sb = filter_covariances(net)
        assert sym_eig(S - Sb)[0] >= -1e-9
        assert sym_eig(S - net.W)[0] >= -1e-9
        mask = np.ones_like(S, dtype=bool)
        for b in net.blocks:
            mask[b.state, b.state] = False
        assert np.linalg.norm(S[mask]) <= 1e-9 and np.linalg.norm(Sb[mask]) <= 1e-9

    def test_block_solve_matches_joint_solve(self):
        from dplqg.matrix import solve_filter_dare
        net = case_study_scenario(agents=3).network()
        S, _ = filter_covariances(net)
        np.testing.assert_allclose(S, solve_filter_dare(net.A, net.C, net.V, net.W), rtol=1e-8, atol=1e-9)


class TestFilterAndControl:
    def test_ignores_measurement_when_gain_is_zero(self, golden):
        synth = synthesize(golden)
        synth.kalman_gain = np.zeros((1, 1))
        out = filter_step(FilterState(np.array([2.0]), np.array([0.0])), synth, golden, [0.5], [100.0])
        assert out.x_hat[0] == pytest.approx(2.5)

    def test_full_correction(self):
        net = NetworkModel.from_matrices(np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2))
        synth = synthesize(net)
        synth.kalman_gain = np.eye(2)
        out = filter_step(initial_filter_state([1.0, 2.0]), synth, net, [0.0, 0.0], [5.0, -1.0])
        np.testing.assert_array_equal(out.x_hat, [5.0, -1.0])

    def test_golden_ratio_update(self, golden):
        synth = synthesize(golden)
        out = filter_step(initial_filter_state([0.0]), synth, golden, [0.0], [1.0])
        assert out.x_hat[0] == pytest.approx(GOLDEN - 1, rel=1e-9)
        assert out.x_prior[0] == 0.0

    def test_control_at_reference(self, golden):
        synth = synthesize(golden)
        assert control_input(synth, [1.0])[0] == pytest.approx(0.0, abs=1e-9)

    def test_control_zero(self):
        net = golden_network(x_tilde=0.0)
        assert control_input(synthesize(net), [0.0])[0] == 0.0

    def test_control_without_feedback(self, golden):
        synth = synthesize(golden)
        synth.L = np.zeros((1, 1))
        for x in (-3.0, 0.0, 7.0):
            assert control_input(synth, [x])[0] == pytest.approx((synth.M @ synth.g)[0])


@pytest.mark.slow
def test_filter_mse_matches_covariance():
    """Two-state system: the empirical a posteriori error over 1e5 steps is within 5% of tr of the covariance."""
    A = np.array([[0.9, 0.2], [0.0, 0.7]])
    net = NetworkModel.from_matrices(A, np.eye(2), np.eye(2), np.eye(2), 4.0 * np.eye(2), np.eye(2), np.eye(2))
    synth = synthesize(net)
    rng = np.random.default_rng(11)
    steps = 100_000
    w = rng.standard_normal((steps, 2))
    v = 2.0 * rng.standard_normal((steps, 2))
    x = np.zeros(2)
    st = initial_filter_state(np.zeros(2))
    err = np.empty(steps)
    for k in range(steps):
        x = A @ x + w[k]
        st = filter_step(st, synth, net, np.zeros(2), x + v[k])
        err[k] = np.sum((x - st.x_hat) ** 2)
    assert err[100:].mean() == pytest.approx(np.trace(synth.Sigma_bar), rel=0.05)
