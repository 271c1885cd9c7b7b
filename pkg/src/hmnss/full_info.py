"""Full-information hybrid momentum dynamics with coordinated timer resets.

State vectors are flat: ``x = (q, p, tau)`` with three blocks of length n.
Each player flows with

    q' = 2 (p - q) / tau,   p' = -2 tau G(q),   tau' = eta,

and resets when its timer reaches ``T``. A reset pulses the player's graph
neighbours, whose timers snap to ``T`` or ``T0`` through the coordination map,
which synchronizes the network after a finite transient.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import TOL_EVENT, HybridSystemDef, JumpPolicy
from .errors import ConfigError, DomainError, PreconditionError
from .game import GameSpec, QuadraticGame
from .network import Graph, complete_graph

TAU_FLOOR = 1e-6
TIMER_TOL = 1e-9


@dataclass(frozen=True)
class HmNssParams:
    n: int
    eta: float
    T0: float
    T: float
    alpha: tuple
    r: tuple
    coordination: bool = True
    graph: Optional[Graph] = None
    tie_to: str = "T"

    def __post_init__(self):
        if not (0 < self.eta <= 0.5):
            raise ConfigError(f"eta must lie in (0, 1/2], got {self.eta}")
        if not (self.T > self.T0 > 0):
            raise ConfigError(f"need T > T0 > 0, got T={self.T}, T0={self.T0}")
        if len(self.alpha) != self.n or any(a not in (0, 1) for a in self.alpha):
            raise ConfigError("alpha must hold n entries from {0, 1}")
        upper = (self.T - self.T0) / self.n
        if len(self.r) != self.n or any(not (0 < rj < upper) for rj in self.r):
            raise ConfigError(f"thresholds r_j must lie strictly inside (0, {upper})")
        if self.graph is not None and self.graph.n != self.n:
            raise ConfigError("graph size differs from the number of players")
        if self.tie_to not in ("T", "T0"):
            raise ConfigError("tie_to must be 'T' or 'T0'")

    @classmethod
    def create(cls, n: int, eta: float = 0.5, T0: float = 0.1, T: float = 1.0, alpha=0,
               r=None, coordination: bool = True, graph: Optional[Graph] = None,
               tie_to: str = "T") -> "HmNssParams":
        alpha = tuple(int(a) for a in np.broadcast_to(np.asarray(alpha), (n,)))
        if r is None:
            r = (T - T0) / (2 * n)
        r = tuple(float(v) for v in np.broadcast_to(np.asarray(r, dtype=float), (n,)))
        return cls(n=n, eta=float(eta), T0=float(T0), T=float(T), alpha=alpha, r=r,
                   coordination=coordination, graph=graph, tie_to=tie_to)

    @property
    def neighbors(self) -> tuple:
        g = self.graph if self.graph is not None else complete_graph(self.n)
        return g.neighbors

    @property
    def flow_length(self) -> float:
        """Continuous time between synchronized resets."""
        return (self.T - self.T0) / self.eta

    @property
    def sync_time(self) -> float:
        """Hybrid-time bound t + j after which timers are synchronized."""
        return self.flow_length + self.n

    @property
    def default_step(self) -> float:
        return 1e-3 * self.flow_length

    @property
    def alpha_min(self) -> int:
        return min(self.alpha)


@dataclass(frozen=True)
class Layout:
    """Index map of the flat state vector."""

    n: int
    n_qhat: int = 0
    n_mu: int = 0

    @property
    def q(self):
        return slice(0, self.n)

    @property
    def p(self):
        return slice(self.n, 2 * self.n)

    @property
    def tau(self):
        return slice(2 * self.n, 3 * self.n)

    @property
    def base(self):
        return slice(0, 3 * self.n)

    @property
    def qhat(self):
        return slice(3 * self.n, 3 * self.n + self.n_qhat)

    @property
    def mu(self):
        s = 3 * self.n + self.n_qhat
        return slice(s, s + self.n_mu)

    @property
    def dim(self) -> int:
        return 3 * self.n + self.n_qhat + self.n_mu


@dataclass
class H1State:
    q: np.ndarray
    p: np.ndarray
    tau: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p, self.tau]).astype(float)

    @classmethod
    def from_vector(cls, x, n: int) -> "H1State":
        x = np.asarray(x, dtype=float)
        return cls(x[:n].copy(), x[n:2 * n].copy(), x[2 * n:3 * n].copy())


def initial_state(params: HmNssParams, q0, p0=None, tau0=None) -> np.ndarray:
    """Default start: momentum equal to the action and all timers at ``T0``."""
    q0 = np.asarray(q0, dtype=float).reshape(params.n)
    p0 = q0.copy() if p0 is None else np.asarray(p0, dtype=float).reshape(params.n)
    tau0 = np.full(params.n, params.T0) if tau0 is None else np.asarray(tau0, dtype=float)
    if np.any(tau0 < params.T0 - TIMER_TOL) or np.any(tau0 > params.T + TIMER_TOL):
        raise ConfigError("initial timers must lie in [T0, T]")
    return np.concatenate([q0, p0, tau0])


def _perturbed_gradient(grad, q, e, target):
    if e is None:
        return grad(q)
    if target == "pseudogradient_both":
        return grad(q + e) + e
    return grad(q) + e


def flow_map_h1(game: GameSpec, params: HmNssParams, x, e=None,
                target: str = "pseudogradient") -> np.ndarray:
    n = params.n
    x = np.asarray(x, dtype=float)
    q, p, tau = x[:n], x[n:2 * n], x[2 * n:3 * n]
    if np.any(tau <= 0):
        raise DomainError("timers must be positive during flows")
    g = _perturbed_gradient(game.kind.pseudogradient, q, e, target)
    return np.concatenate([2.0 * (p - q) / tau, -2.0 * tau * g, np.full(n, params.eta)])


def reset_map(params: HmNssParams, xi, i: int) -> tuple:
    """Player ``i``'s reset: keep q_i, restart momentum per alpha_i, timer to T0."""
    q_i, p_i, _ = xi
    a = params.alpha[i]
    return (q_i, a * p_i + (1 - a) * q_i, params.T0)


def coordination_map(params: HmNssParams, tau_j: float, j: int) -> tuple:
    """Admissible post-pulse timers of neighbour ``j``; two values only at the threshold."""
    if tau_j < params.T0 - TIMER_TOL or tau_j > params.T + TIMER_TOL:
        raise DomainError(f"timer {tau_j} outside [{params.T0}, {params.T}]")
    thr = params.T0 + params.r[j]
    if abs(tau_j - thr) <= TOL_EVENT:
        return (params.T0, params.T)
    if tau_j > thr:
        return (params.T,)
    return (params.T0,)


def event_value(params: HmNssParams, x) -> float:
    n = params.n
    return float(np.max(np.asarray(x)[2 * n:3 * n]) - params.T)


def _at_reset(params, tau):
    return np.flatnonzero(tau >= params.T - TOL_EVENT)


def jump_map_g1(game: Optional[GameSpec], params: HmNssParams, x, policy: JumpPolicy = JumpPolicy(),
                rng: Optional[np.random.Generator] = None) -> tuple:
    """One sequential jump: a single ready player resets and pulses its neighbours.

    Returns the new flat state and a ``(player, branch)`` label. Extra trailing
    state blocks (estimates, oscillators) are carried over unchanged.
    """
    n = params.n
    y = np.array(x, dtype=float)
    tau = y[2 * n:3 * n]
    ready = _at_reset(params, tau)
    if ready.size == 0:
        raise PreconditionError(f"no timer at T (max timer {tau.max()}, T={params.T})")
    if policy.kind == "random" and ready.size > 1:
        i = int(rng.choice(ready))
    else:
        i = int(ready[0])
    q_i, p_i, tau_i = reset_map(params, (y[i], y[n + i], tau[i]), i)
    y[n + i] = p_i
    parts = [f"reset{i + 1}"]
    if params.coordination:
        for j in params.neighbors[i]:
            options = coordination_map(params, min(max(tau[j], params.T0), params.T), j)
            if len(options) == 1:
                new = options[0]
            elif policy.kind == "random":
                new = options[int(rng.integers(2))]
            else:
                new = params.T if params.tie_to == "T" else params.T0
            if new != tau[j]:
                parts.append(f"{j + 1}:{'T' if new == params.T else 'T0'}")
            tau[j] = new
    tau[i] = tau_i
    return y, (i, ",".join(parts))


def enumerate_cascades(params: HmNssParams, x, max_n: int = 4) -> list:
    """All post-cascade states over every ordering and tie choice (test-only, small n)."""
    if params.n > max_n:
        raise ConfigError(f"exhaustive enumeration limited to n <= {max_n}")
    n = params.n
    out: list = []

    def expand(y):
        tau = y[2 * n:3 * n]
        ready = _at_reset(params, tau)
        if ready.size == 0:
            if not any(np.array_equal(y, z) for z in out):
                out.append(y)
            return
        for i in ready:
            z = np.array(y)
            q_i, p_i, tau_i = reset_map(params, (z[i], z[n + i], z[2 * n + i]), int(i))
            z[n + i] = p_i
            nbrs = params.neighbors[i] if params.coordination else ()
            choices = [coordination_map(params, min(max(z[2 * n + j], params.T0), params.T), j)
                       for j in nbrs]
            for combo in np.array(np.meshgrid(*choices, indexing="ij")).reshape(len(nbrs), -1).T \
                    if nbrs else [()]:
                w = np.array(z)
                for j, v in zip(nbrs, combo):
                    w[2 * n + j] = v
                w[2 * n + i] = tau_i
                expand(w)

    expand(np.array(x, dtype=float))
    return out


def sync_distance(params: HmNssParams, tau) -> float:
    """Distance from a timer vector to {T0, T}^n united with the synchronized diagonal."""
    tau = np.asarray(tau, dtype=float)
    corner = np.sqrt(np.sum(np.minimum(np.abs(tau - params.T0), np.abs(tau - params.T)) ** 2))
    c = min(max(float(np.mean(tau)), params.T0), params.T)
    diag = float(np.linalg.norm(tau - c))
    return float(min(corner, diag))


def build_h1(game: GameSpec, params: HmNssParams,
             perturbation_target: str = "pseudogradient") -> HybridSystemDef:
    if game.n != params.n:
        raise ConfigError("game and parameters disagree on n")
    n, eta, T0, T = params.n, params.eta, params.T0, params.T
    grad = game.kind.pseudogradient
    if isinstance(game.kind, QuadraticGame):
        A, b = game.kind.A, game.kind.b
        grad = lambda q: A @ q + b  # noqa: E731

    def flow(x, e):
        q, p, tau = x[:n], x[n:2 * n], x[2 * n:]
        g = _perturbed_gradient(grad, q, e, perturbation_target)
        out = np.empty(3 * n)
        out[:n] = 2.0 * (p - q) / tau
        out[n:2 * n] = -2.0 * tau * g
        out[2 * n:] = eta
        return out

    def in_flow(x):
        tau = x[2 * n:3 * n]
        return bool(np.all(tau >= T0 - TIMER_TOL) and np.all(tau <= T + TIMER_TOL))

    def in_jump(x):
        return bool(np.max(x[2 * n:3 * n]) >= T - TOL_EVENT)

    return HybridSystemDef(
        flow_map=flow,
        flow_set_test=in_flow,
        jump_set_test=in_jump,
        jump_resolver=lambda x, policy, rng: jump_map_g1(game, params, x, policy, rng),
        dim=3 * n,
        event_value=lambda x: float(np.max(x[2 * n:3 * n]) - T),
        n_players=n,
        name="h1" if params.coordination else "h1_uncoordinated",
    )


def _no_jump(x, policy, rng):
    raise PreconditionError("system has an empty jump set")


def baseline_ode(game: GameSpec, eta: float, perturbation_target: str = "pseudogradient",
                 tau_floor: float = TAU_FLOOR) -> HybridSystemDef:
    """Un-restarted momentum ODE with one shared timer; state ``(q, p, tau)`` of size 2n+1."""
    n = game.n
    grad = game.kind.pseudogradient

    def flow(x, e):
        q, p, tau = x[:n], x[n:2 * n], max(x[2 * n], tau_floor)
        g = _perturbed_gradient(grad, q, e, perturbation_target)
        out = np.empty(2 * n + 1)
        out[:n] = (2.0 / tau) * (p - q)
        out[n:2 * n] = -2.0 * tau * g
        out[2 * n] = eta
        return out

    return HybridSystemDef(flow_map=flow, flow_set_test=lambda x: True,
                           jump_set_test=lambda x: False, jump_resolver=_no_jump,
                           dim=2 * n + 1, n_players=n, name="baseline_ode")


def baseline_initial_state(q0, T0: float, p0=None, tau_floor: float = TAU_FLOOR) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    p0 = q0.copy() if p0 is None else np.asarray(p0, dtype=float)
    return np.concatenate([q0, p0, [max(T0, tau_floor)]])


def psg_flow(game: GameSpec, perturbation_target: str = "pseudogradient") -> HybridSystemDef:
    """Plain pseudogradient flow q' = -G(q), the first-order reference dynamics."""
    n = game.n
    grad = game.kind.pseudogradient

    def flow(x, e):
        return -_perturbed_gradient(grad, x, e, perturbation_target)

    return HybridSystemDef(flow_map=flow, flow_set_test=lambda x: True,
                           jump_set_test=lambda x: False, jump_resolver=_no_jump,
                           dim=n, n_players=n, name="psg_flow")


__all__ = [
    "H1State", "HmNssParams", "Layout", "baseline_initial_state",
    "baseline_ode", "build_h1", "coordination_map", "enumerate_cascades", "event_value",
    "flow_map_h1", "initial_state", "jump_map_g1", "psg_flow", "reset_map", "sync_distance",
]
