import numpy as np
import pytest

from hmnss.game import catalog_game, quadratic_game


@pytest.fixture
def duopoly():
    return catalog_game("duopoly_frihauf")


@pytest.fixture
def skew_game():
    return catalog_game("example4")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_quadratic(rng, n, potential=False, kappa_floor=0.1):
    """Strongly monotone quadratic game with a random equilibrium."""
    M = rng.standard_normal((n, n))
    S = M @ M.T / n + kappa_floor * np.eye(n)
    if potential:
        A = S
    else:
        K = rng.standard_normal((n, n))
        A = S + 0.5 * (K - K.T)
    q_star = rng.uniform(-2, 2, n)
    return quadratic_game(A, -A @ q_star)
