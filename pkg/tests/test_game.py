import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hmnss.errors import DomainError, NumericalError, SingularMatrixError
from hmnss.game import (GameClass, GameConstants, analytic_game, as_analytic, catalog_game,
                        estimate_constants, eval_costs, eval_jacobian, eval_pseudogradient,
                        fd_pseudogradient, fd_step, logcosh_potential_game, ne_distance,
                        potential_gap, quadratic_game, solve_quadratic_ne)

from conftest import random_quadratic


def test_duopoly_pseudogradient_at_origin(duopoly):
    np.testing.assert_array_equal(eval_pseudogradient(duopoly, [0.0, 0.0]), [-250.0, -150.0])


def test_pseudogradient_vanishes_at_equilibrium(duopoly, skew_game):
    for g in (duopoly, skew_game):
        assert np.linalg.norm(eval_pseudogradient(g, g.ne)) <= 1e-8 * max(1, np.linalg.norm(g.ne))


def test_skew_game_pseudogradient():
    g = catalog_game("example4")
    np.testing.assert_allclose(eval_pseudogradient(g, [3.0, -2.0]), [6.0, -1.5], atol=1e-14)


def test_non_finite_action_rejected(duopoly):
    with pytest.raises(DomainError):
        eval_pseudogradient(duopoly, [np.nan, 0.0])
    with pytest.raises(DomainError):
        eval_jacobian(duopoly, [np.inf, 0.0])


def test_quadratic_jacobian_is_exact(duopoly, skew_game):
    np.testing.assert_array_equal(eval_jacobian(duopoly, [3.0, 7.0]), [[10, -5], [-5, 10]])
    np.testing.assert_array_equal(eval_jacobian(skew_game, [0.0, 0.0]), [[6, 1.5], [-1.5, 6]])


def test_wrapped_quadratic_jacobian_matches_matrix(duopoly):
    wrapped = as_analytic(duopoly)
    J = eval_jacobian(wrapped, [1.0, -2.0])
    np.testing.assert_allclose(J, [[10, -5], [-5, 10]], atol=1e-6)


def test_jacobian_nonfinite_values_raise():
    g = analytic_game([lambda q: 0.0], [lambda q: np.inf if q[0] > 0 else 0.0])
    with pytest.raises(NumericalError):
        eval_jacobian(g, [0.0])


def test_constants_duopoly(duopoly):
    c = estimate_constants(duopoly)
    assert c.kappa == pytest.approx(5.0, abs=1e-12)
    assert c.ell == pytest.approx(15.0, abs=1e-12)
    assert not c.estimated


def test_constants_skew_game(skew_game):
    c = estimate_constants(skew_game)
    assert c.kappa == pytest.approx(6.0, abs=1e-12)
    assert c.ell == pytest.approx(np.hypot(6.0, 1.5), abs=1e-12)


def test_constants_identity():
    c = estimate_constants(quadratic_game(np.eye(2), np.zeros(2)))
    assert c.kappa == pytest.approx(1.0) and c.ell == pytest.approx(1.0)


def test_sampled_constants_are_flagged_and_bracket_truth(duopoly):
    c = estimate_constants(as_analytic(duopoly), (-5.0, 5.0), 500, seed=1)
    assert c.estimated
    assert c.kappa >= 5.0 - 1e-6
    assert c.ell <= 15.0 + 1e-6


@pytest.mark.parametrize("box,samples", [((1.0, 1.0), 10), ((-1.0, 1.0), 1), ((0.0, np.inf), 10)])
def test_degenerate_sampling_rejected(duopoly, box, samples):
    with pytest.raises(DomainError):
        estimate_constants(duopoly, box, samples)


def test_ne_identity_solve():
    g = quadratic_game(np.eye(2), [-1.0, -2.0])
    np.testing.assert_allclose(solve_quadratic_ne(g), [1.0, 2.0])


def test_ne_skew_game(skew_game):
    np.testing.assert_allclose(solve_quadratic_ne(skew_game), [2.0, -2.0], atol=1e-14)


def test_duopoly_ne_from_linear_solve(duopoly):
    q = solve_quadratic_ne(duopoly)
    np.testing.assert_allclose(q, [130 / 3, 110 / 3], rtol=1e-14)
    # the quoted second coordinate 101/3 leaves a large residual
    assert np.linalg.norm(eval_pseudogradient(duopoly, [130 / 3, 101 / 3])) > 30


def test_singular_matrix():
    g = quadratic_game([[1.0, 1.0], [1.0, 1.0]], [0.0, 0.0], classify=False)
    assert g.known_ne == ()
    with pytest.raises(SingularMatrixError):
        solve_quadratic_ne(g)


def test_constants_validation():
    with pytest.raises(DomainError):
        GameConstants(kappa=2.0, ell=1.0)
    with pytest.raises(DomainError):
        GameConstants(kappa=-1.0, ell=1.0)
    assert GameConstants(kappa=2.0, ell=5.0).sigma_phi == 2.5


def test_class_implications():
    with pytest.raises(DomainError):
        GameClass(monotone=True, strictly_monotone=False, strongly_monotone=1.0)
    with pytest.raises(DomainError):
        GameClass(monotone=False, strictly_monotone=True)


def test_bad_stored_ne_rejected(duopoly):
    from hmnss.game import GameSpec
    with pytest.raises(DomainError):
        GameSpec(n=2, kind=duopoly.kind, known_ne=([0.0, 0.0],))


def test_quadratic_costs_partials_match_pseudogradient(rng):
    for _ in range(5):
        g = random_quadratic(rng, 4)
        q = rng.standard_normal(4)
        np.testing.assert_allclose(fd_pseudogradient(g, q), eval_pseudogradient(g, q), rtol=1e-6,
                                   atol=1e-6)


def test_finite_difference_step_scales():
    assert fd_step(np.zeros(3)) == 1e-6
    assert fd_step(np.array([1e3, -2e3])) == pytest.approx(2e-3)


def test_potential_quantities(duopoly):
    assert potential_gap(duopoly, duopoly.ne) == pytest.approx(0.0, abs=1e-9)
    assert potential_gap(duopoly, [0.0, 0.0]) > 0
    assert ne_distance(duopoly, duopoly.ne + [3.0, 4.0]) == pytest.approx(5.0)


def test_logcosh_game_is_monotone_not_strongly():
    g = catalog_game("logcosh5")
    assert g.has_potential and g.constants.kappa == 0
    q = g.ne + 50.0
    # curvature flattens far from the equilibrium
    J = eval_jacobian(g, q)
    assert np.linalg.eigvalsh(0.5 * (J + J.T))[0] < 1e-6
    np.testing.assert_allclose(eval_pseudogradient(g, g.ne), 0, atol=1e-12)


def test_catalog_unknown_name():
    with pytest.raises(DomainError):
        catalog_game("nope")


def test_matrices_are_read_only(duopoly):
    with pytest.raises(ValueError):
        duopoly.kind.A[0, 0] = 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fd_agreement_logcosh(seed):
    g = catalog_game("logcosh5")
    q = np.random.default_rng(seed).uniform(-3, 3, 5)
    ref = eval_pseudogradient(g, q)
    np.testing.assert_allclose(fd_pseudogradient(g, q), ref, rtol=1e-6, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.booleans())
def test_strong_monotonicity_and_cocoercivity(seed, n, potential):
    rng = np.random.default_rng(seed)
    g = random_quadratic(rng, n, potential)
    kappa, ell = g.constants.kappa, g.constants.ell
    x = rng.uniform(-5, 5, (200, n))
    y = rng.uniform(-5, 5, (200, n))
    d = x - y
    dg = (x - y) @ g.kind.A.T
    inner = np.einsum("ij,ij->i", dg, d)
    assert np.all(inner >= kappa * np.einsum("ij,ij->i", d, d) * (1 - 1e-9))
    co = g.game_class.cocoercive
    assert np.all(inner >= co * np.einsum("ij,ij->i", dg, dg) * (1 - 1e-9))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_ne_residual(seed, n):
    g = random_quadratic(np.random.default_rng(seed), n)
    assert np.linalg.norm(g.kind.A @ g.ne + g.kind.b) <= 1e-8 * max(1, np.linalg.norm(g.ne))


def test_cost_vector(duopoly):
    q = np.array([1.0, 2.0])
    A, b = duopoly.kind.A, duopoly.kind.b
    expected = q * (A @ q + b) - 0.5 * np.diag(A) * q**2
    np.testing.assert_allclose(eval_costs(duopoly, q), expected)
