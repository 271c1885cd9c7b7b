"""Partial-information dynamics: momentum flows driven by consensus estimates.

Each player keeps estimates of the other players' actions, exchanged with its
graph neighbours through a high-gain consensus flow. The state is
``(q, p, tau, q_hat)`` where ``q_hat`` stacks, player by player, the ``n - 1``
estimates of the others' actions.
"""
from __future__ import annotations

import numpy as np

from .engine import TOL_EVENT, HybridSystemDef, JumpPolicy
from .errors import ConfigError, DomainError
from .full_info import TIMER_TOL, HmNssParams, jump_map_g1
from .game import GameSpec, QuadraticGame
from .network import Graph, SelectionMatrices, build_selection, complete_graph, laplacian, psi


def estimate_matrix(q, q_hat, n: int) -> np.ndarray:
    """Row i is player i's estimate vector, holding its own action at position i."""
    E = np.empty((n, n))
    E[~np.eye(n, dtype=bool)] = q_hat
    E[np.diag_indices(n)] = q
    return E


def consensus_target(q, n: int) -> np.ndarray:
    """Estimates in perfect agreement with the true actions."""
    return np.broadcast_to(np.asarray(q, dtype=float), (n, n))[~np.eye(n, dtype=bool)].copy()


def consensus_error(x, n: int) -> float:
    """Euclidean norm of q_hat minus its consensus value, for a flat (q, p, tau, q_hat) state."""
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x[3 * n:3 * n + n * n - n] - consensus_target(x[:n], n)))


def default_qhat(q0) -> np.ndarray:
    """Each player initially guesses that everyone plays its own action."""
    q0 = np.asarray(q0, dtype=float)
    n = q0.size
    return np.repeat(q0, n - 1)


def stacked_partials(game: GameSpec, E: np.ndarray) -> np.ndarray:
    """Each player's own partial evaluated at its estimate vector."""
    if isinstance(game.kind, QuadraticGame):
        return np.einsum("ij,ij->i", game.kind.A, E) + game.kind.b
    return np.array([game.kind.own_partial(i, E[i]) for i in range(game.n)])


def flow_map_h2(game: GameSpec, params: HmNssParams, eps: float, L: np.ndarray, x) -> np.ndarray:
    n = params.n
    x = np.asarray(x, dtype=float)
    q, p, tau = x[:n], x[n:2 * n], x[2 * n:3 * n]
    if np.any(tau <= 0):
        raise DomainError("timers must be positive during flows")
    E = estimate_matrix(q, x[3 * n:], n)
    LE = L @ E
    out = np.empty(x.size)
    out[:n] = 2.0 * (p - q) / tau - np.diag(LE)
    out[n:2 * n] = -2.0 * tau * stacked_partials(game, E)
    out[2 * n:3 * n] = params.eta
    out[3 * n:] = -LE[~np.eye(n, dtype=bool)] / eps
    return out


def flow_map_h2_dense(game: GameSpec, params: HmNssParams, eps: float, sel: SelectionMatrices,
                      L_big: np.ndarray, x) -> np.ndarray:
    """Same field written with the explicit selection and Kronecker matrices."""
    n = params.n
    q, p, tau, q_hat = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]
    e = sel.P.T @ q + sel.Q.T @ q_hat
    g_hat = np.array([game.kind.own_partial(i, e[i * n:(i + 1) * n]) for i in range(n)])
    return np.concatenate([
        2.0 * (p - q) / tau - sel.P @ L_big @ e,
        -2.0 * tau * g_hat,
        np.full(n, params.eta),
        -(1.0 / eps) * (sel.Q @ L_big @ e),
    ])


def jump_map_g2(game, params: HmNssParams, x, policy: JumpPolicy = JumpPolicy(), rng=None):
    """Base state jumps as in the full-information system; estimates are untouched."""
    return jump_map_g1(game, params, x, policy, rng)


def default_step_h2(params: HmNssParams, eps: float, h=None) -> float:
    h = params.default_step if h is None else h
    return min(h, eps / 10.0)


def build_h2(game: GameSpec, params: HmNssParams, eps: float,
             graph: Graph | None = None) -> HybridSystemDef:
    if eps <= 0:
        raise ConfigError("consensus parameter eps must be positive")
    n = params.n
    if n < 2:
        raise ConfigError("partial information needs at least two players")
    g = graph or params.graph or complete_graph(n)
    L = laplacian(g)
    T0, T = params.T0, params.T
    off = ~np.eye(n, dtype=bool)
    diag = np.diag_indices(n)
    quad = isinstance(game.kind, QuadraticGame)
    A = game.kind.A if quad else None
    b = game.kind.b if quad else None

    def flow(x, e):
        q, p, tau = x[:n], x[n:2 * n], x[2 * n:3 * n]
        E = np.empty((n, n))
        E[off] = x[3 * n:]
        E[diag] = q
        LE = L @ E
        out = np.empty(x.size)
        out[:n] = 2.0 * (p - q) / tau - LE[diag]
        gh = np.einsum("ij,ij->i", A, E) + b if quad else stacked_partials(game, E)
        out[n:2 * n] = -2.0 * tau * gh
        out[2 * n:3 * n] = params.eta
        out[3 * n:] = LE[off] * (-1.0 / eps)
        return out

    return HybridSystemDef(
        flow_map=flow,
        flow_set_test=lambda x: bool(np.all(x[2 * n:3 * n] >= T0 - TIMER_TOL)
                                     and np.all(x[2 * n:3 * n] <= T + TIMER_TOL)),
        jump_set_test=lambda x: bool(np.max(x[2 * n:3 * n]) >= T - TOL_EVENT),
        jump_resolver=lambda x, policy, rng: jump_map_g2(game, params, x, policy, rng),
        dim=3 * n + n * n - n,
        event_value=lambda x: float(np.max(x[2 * n:3 * n]) - T),
        n_players=n,
        name="h2",
    )


def initial_state_h2(x1, q_hat=None) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    n = x1.size // 3
    q_hat = default_qhat(x1[:n]) if q_hat is None else np.asarray(q_hat, dtype=float)
    if q_hat.size != n * n - n:
        raise ConfigError(f"q_hat must have {n * n - n} entries")
    return np.concatenate([x1, q_hat])


__all__ = [
    "build_h2", "build_selection", "consensus_error", "consensus_target", "default_qhat",
    "default_step_h2", "estimate_matrix", "flow_map_h2", "flow_map_h2_dense", "initial_state_h2",
    "jump_map_g2", "psi",
]
