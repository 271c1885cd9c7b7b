import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmnss.certificates import epsilon_star
from hmnss.engine import run
from hmnss.errors import ConfigError
from hmnss.full_info import HmNssParams, flow_map_h1, initial_state, jump_map_g1
from hmnss.game import quadratic_game
from hmnss.network import big_laplacian, build_selection, complete_graph, laplacian, psi, ring_graph
from hmnss.partial_info import (build_h2, consensus_error, consensus_target, default_qhat,
                                default_step_h2, estimate_matrix, flow_map_h2, flow_map_h2_dense,
                                initial_state_h2, jump_map_g2)

from conftest import random_quadratic

GAME2 = quadratic_game([[2.0, 1.0], [1.0, 3.0]], [1.0, -1.0])
P2 = HmNssParams.create(2, eta=0.5, T0=0.1, T=1.1)
L2 = laplacian(complete_graph(2))


def test_psi_consensus_and_hand_example():
    sel = build_selection(2)
    np.testing.assert_array_equal(psi([1.0, 2.0], consensus_target([1.0, 2.0], 2), sel),
                                  [1.0, 2.0, 1.0, 2.0])
    np.testing.assert_array_equal(psi([1.0, 2.0], [5.0, 7.0], sel), [1.0, 5.0, 7.0, 2.0])


def test_estimate_matrix_rows():
    np.testing.assert_array_equal(estimate_matrix([1.0, 2.0], [5.0, 7.0], 2), [[1, 5], [7, 2]])


def test_flow_at_consensus_matches_full_information(rng):
    g = random_quadratic(rng, 4)
    p = HmNssParams.create(4, T0=0.1, T=1.0)
    L = laplacian(ring_graph(4))
    x1 = np.concatenate([rng.standard_normal(8), rng.uniform(0.1, 1.0, 4)])
    x = np.concatenate([x1, consensus_target(x1[:4], 4)])
    d = flow_map_h2(g, p, 0.37, L, x)
    np.testing.assert_allclose(d[:12], flow_map_h1(g, p, x1), atol=1e-12)
    assert np.all(d[12:] == 0)


def test_hand_computed_two_player_field():
    x = np.array([1.0, 2.0, 0.0, 0.0, 1.0, 1.0, 5.0, 7.0])
    d = flow_map_h2(GAME2, P2, 1.0, L2, x)
    # E = [[1,5],[7,2]], L E = [[-6,3],[6,-3]]
    np.testing.assert_allclose(d, [4.0, -1.0, -16.0, -24.0, 0.5, 0.5, -3.0, -6.0], atol=1e-12)
    dense = flow_map_h2_dense(GAME2, P2, 1.0, build_selection(2), big_laplacian(complete_graph(2)), x)
    np.testing.assert_allclose(d, dense, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10**6), st.floats(1e-3, 1.0))
def test_fast_field_matches_dense_oracle(n, seed, eps):
    rng = np.random.default_rng(seed)
    g = random_quadratic(rng, n)
    p = HmNssParams.create(n, T0=0.1, T=1.0)
    graph = ring_graph(n) if n >= 3 else complete_graph(n)
    x = np.concatenate([rng.standard_normal(2 * n), rng.uniform(0.1, 1.0, n),
                        rng.standard_normal(n * n - n)])
    fast = flow_map_h2(g, p, eps, laplacian(graph), x)
    dense = flow_map_h2_dense(g, p, eps, build_selection(n), big_laplacian(graph), x)
    np.testing.assert_allclose(fast, dense, rtol=1e-11, atol=1e-11)
    sysd = build_h2(g, p, eps, graph)
    np.testing.assert_allclose(sysd.flow_map(x, None), fast, rtol=1e-13, atol=1e-13)


def test_gain_linearity():
    x = np.array([1.0, 2.0, 0.3, -0.2, 0.5, 0.9, 5.0, 7.0])
    a = flow_map_h2(GAME2, P2, 0.2, L2, x)
    b = flow_map_h2(GAME2, P2, 0.1, L2, x)
    np.testing.assert_allclose(b[6:], 2 * a[6:])
    np.testing.assert_array_equal(a[:6], b[:6])


def test_jump_leaves_estimates_bitwise():
    x = np.array([1.0, 2.0, 3.0, 4.0, 1.1, 1.1, 0.123456789, -9.87654321])
    y = x
    for _ in range(2):
        y, _ = jump_map_g2(GAME2, P2, y)
        assert np.array_equal(y[6:], x[6:])
    np.testing.assert_array_equal(y[4:6], [0.1, 0.1])
    assert np.array_equal(jump_map_g1(GAME2, P2, x)[0], jump_map_g2(GAME2, P2, x)[0])


def test_consensus_error_examples():
    assert consensus_error(np.array([1.0, 2.0, 0, 0, 0.5, 0.5, 2.0, 1.0]), 2) == 0.0
    assert consensus_error(np.array([0.0, 0.0, 0, 0, 0.5, 0.5, 3.0, 4.0]), 2) == pytest.approx(5.0)
    x = np.array([0.3, -1.0, 0, 0, 0.5, 0.5, 2.0, 1.5])
    shifted = x.copy()
    shifted[[0, 1, 6, 7]] += 2.5
    assert consensus_error(shifted, 2) == pytest.approx(consensus_error(x, 2))


def test_default_estimates_and_step():
    np.testing.assert_array_equal(default_qhat([1.0, 2.0, 3.0]), [1, 1, 2, 2, 3, 3])
    assert default_step_h2(P2, 1e-3, 0.05) == pytest.approx(1e-4)
    with pytest.raises(ConfigError):
        initial_state_h2(np.zeros(6), np.zeros(3))
    with pytest.raises(ConfigError):
        build_h2(GAME2, P2, 0.0)


def test_consensus_error_contracts_outside_tracking_ball():
    # theta shrinks strictly until it reaches a ball of radius ~ eps * |q dot| / lambda2
    from hmnss.network import spectrum_summary
    rng = np.random.default_rng(3)
    n = 5
    g = random_quadratic(rng, n, potential=True, kappa_floor=0.5)
    graph = ring_graph(n)
    lam2 = spectrum_summary(graph).lambda2
    p = HmNssParams.create(n, eta=0.5, T0=0.1, T=1.0, graph=graph)
    for eps in (1e-2, 1e-3):
        sysd = build_h2(g, p, eps, graph)
        x0 = initial_state_h2(initial_state(p, rng.uniform(-2, 2, n)))
        arc = run(sysd, x0, 3.0, step=default_step_h2(p, eps), stride=20)
        theta = np.array([consensus_error(x, n) for x in arc.x])
        speed = np.array([np.linalg.norm(sysd.flow_map(x, None)[:n]) for x in arc.x])
        for _, idx in arc.intervals():
            if len(idx) < 2:
                continue
            th = theta[idx]
            radius = 5 * eps * np.sqrt(n - 1) * speed[idx].max() / lam2
            rising = np.diff(th) >= 0
            assert np.all(th[:-1][rising] <= radius)


def test_epsilon_star_value_for_ring():
    from hmnss.network import spectrum_summary
    s = spectrum_summary(ring_graph(5))
    e = epsilon_star(s.sigma_L, 10.0, 5, 1.0, 1.0, s.lambda_max, 0.1, 0.5)
    assert 0 < e < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 10**6))
def test_estimate_mismatch_enters_lipschitz(n, seed):
    rng = np.random.default_rng(seed)
    g = random_quadratic(rng, n)
    p = HmNssParams.create(n, T0=0.1, T=1.0)
    L = laplacian(complete_graph(n))
    x1 = np.concatenate([rng.standard_normal(2 * n), rng.uniform(0.1, 1.0, n)])
    q_hat = consensus_target(x1[:n], n) + rng.standard_normal(n * n - n)
    x = np.concatenate([x1, q_hat])
    gap = np.linalg.norm(flow_map_h2(g, p, 0.5, L, x)[:3 * n] - flow_map_h1(g, p, x1))
    A = g.kind.A
    lip = 2 * p.T * np.linalg.norm(A, 2) + np.linalg.norm(L, 2)
    assert gap <= lip * consensus_error(x, n) * (1 + 1e-12) + 1e-12
