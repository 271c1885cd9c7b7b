"""Payoff-based momentum dynamics driven by sinusoidal dithers.

Players measure only their own cost at a dithered action ``q + eps_a * mu_tilde``
and demodulate it with their dither. Each dither comes from a unit-circle
oscillator rotating at ``2 pi varsigma_i / eps_p`` rad/s. The flat state is
``(q, p, tau, mu)`` or, with consensus estimation, ``(q, p, tau, q_hat, mu)``;
``mu`` interleaves ``(mu_tilde_i, mu_hat_i)`` pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .engine import TOL_EVENT, HybridSystemDef, JumpPolicy
from .errors import ConfigError, DomainError
from .full_info import TIMER_TOL, HmNssParams, flow_map_h1, jump_map_g1
from .game import GameSpec, QuadraticGame
from .network import Graph, complete_graph, laplacian

try:  # optional compiled fast path for long quadratic runs
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _as_fraction(v) -> Fraction:
    f = Fraction(v) if not isinstance(v, float) else Fraction(v).limit_denominator(10**6)
    if f <= 0:
        raise DomainError(f"dither frequency must be positive, got {v}")
    return f


def validate_frequencies(freqs: Sequence) -> bool:
    """Exact check that no frequency equals, doubles or triples another one."""
    fs = [_as_fraction(v) for v in freqs]
    for i, a in enumerate(fs):
        for j, c in enumerate(fs):
            if i != j and (a == c or a == 2 * c or a == 3 * c):
                return False
    return True


def default_frequencies(n: int) -> tuple:
    """First n members of (2k+1)/2, k = 1, 2, ..., skipping any that break validity."""
    out: list = []
    k = 1
    while len(out) < n:
        cand = Fraction(2 * k + 1, 2)
        if validate_frequencies(out + [cand]):
            out.append(cand)
        k += 1
    return tuple(out)


def common_period(freqs: Sequence) -> Fraction:
    """Smallest fast-time period shared by all dithers (lcm of the 1/varsigma_i)."""
    fs = [_as_fraction(v) for v in freqs]
    periods = [1 / f for f in fs]
    num = reduce(math.lcm, (p.numerator for p in periods))
    den = reduce(math.gcd, (p.denominator for p in periods))
    return Fraction(num, den)


@dataclass(frozen=True)
class OscillatorBank:
    freqs: tuple
    eps_p: float = 1e-2
    eps_a: float = 5e-2
    phases: Optional[tuple] = None

    def __post_init__(self):
        fs = tuple(_as_fraction(v) for v in self.freqs)
        if not validate_frequencies(fs):
            raise ConfigError("dither frequencies violate the no-1x/2x/3x rule")
        if self.eps_p <= 0 or self.eps_a <= 0:
            raise ConfigError("eps_p and eps_a must be positive")
        object.__setattr__(self, "freqs", fs)

    @classmethod
    def default(cls, n: int, eps_p: float = 1e-2, eps_a: float = 5e-2) -> "OscillatorBank":
        return cls(default_frequencies(n), eps_p, eps_a)

    @property
    def n(self) -> int:
        return len(self.freqs)

    @property
    def omega(self) -> np.ndarray:
        return np.array([2 * math.pi * float(f) for f in self.freqs]) / self.eps_p

    def initial_mu(self) -> np.ndarray:
        """Unit vectors; default (0, 1) for every player, so mu_tilde starts at 0."""
        mu = np.zeros(2 * self.n)
        if self.phases is None:
            mu[1::2] = 1.0
        else:
            ph = np.asarray(self.phases, dtype=float)
            mu[0::2] = np.sin(ph)
            mu[1::2] = np.cos(ph)
        return mu

    def mu_tilde_exact(self, t) -> np.ndarray:
        """Closed-form first oscillator component at time(s) ``t``."""
        ph = np.zeros(self.n) if self.phases is None else np.asarray(self.phases, dtype=float)
        return np.sin(np.multiply.outer(np.asarray(t, dtype=float), self.omega) + ph)

    def default_step(self, h: float) -> float:
        return min(h, self.eps_p / (50.0 * max(float(f) for f in self.freqs)))


def oscillator_flow(bank: OscillatorBank, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    w = bank.omega
    out = np.empty_like(mu)
    out[0::2] = w * mu[1::2]
    out[1::2] = -w * mu[0::2]
    return out


def renormalize(mu: np.ndarray) -> np.ndarray:
    r = np.sqrt(mu[0::2] ** 2 + mu[1::2] ** 2)
    mu[0::2] /= r
    mu[1::2] /= r
    return mu


def _cost_rows(game: GameSpec, E: np.ndarray) -> np.ndarray:
    """Each player's cost evaluated at its own row of ``E``."""
    if isinstance(game.kind, QuadraticGame):
        A, b = game.kind.A, game.kind.b
        d = np.diag(E)
        return d * (np.einsum("ij,ij->i", A, E) + b) - 0.5 * np.diag(A) * d * d
    return np.array([game.kind.costs_fns[i](E[i]) for i in range(game.n)])


def flow_map_h3(game: GameSpec, params: HmNssParams, bank: OscillatorBank, x) -> np.ndarray:
    """Dithered payoff-based flow; queries cost values only."""
    n = params.n
    x = np.asarray(x, dtype=float)
    q, p, tau, mu = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]
    if np.any(tau <= 0):
        raise DomainError("timers must be positive during flows")
    mt = mu[0::2]
    phi = game.kind.costs(q + bank.eps_a * mt)
    return np.concatenate([2.0 * (p - q) / tau, (-4.0 / bank.eps_a) * tau * phi * mt,
                           np.full(n, params.eta), oscillator_flow(bank, mu)])


def flow_map_h4(game: GameSpec, params: HmNssParams, bank: OscillatorBank, eps_c: float,
                L: np.ndarray, x) -> np.ndarray:
    n = params.n
    x = np.asarray(x, dtype=float)
    m = n * n - n
    q, p, tau = x[:n], x[n:2 * n], x[2 * n:3 * n]
    q_hat, mu = x[3 * n:3 * n + m], x[3 * n + m:]
    mt = mu[0::2]
    off = ~np.eye(n, dtype=bool)
    E = np.empty((n, n))
    E[off] = q_hat
    E[np.diag_indices(n)] = q
    LE = L @ E
    Ed = E.copy()
    Ed[np.diag_indices(n)] = q + bank.eps_a * mt
    phi = _cost_rows(game, Ed)
    return np.concatenate([2.0 * (p - q) / tau - np.diag(LE),
                           (-4.0 / bank.eps_a) * tau * phi * mt,
                           np.full(n, params.eta),
                           LE[off] * (-1.0 / eps_c),
                           oscillator_flow(bank, mu)])


def average_flow_oracle(game: GameSpec, params: HmNssParams, x, eps_a: float = 0.0) -> np.ndarray:
    """Averaged model-free field: exactly the full-information flow on ``(q, p, tau)``."""
    return flow_map_h1(game, params, np.asarray(x, dtype=float)[:3 * params.n])


def dither_average(game: GameSpec, bank: OscillatorBank, q, samples_per_cycle: int = 64) -> np.ndarray:
    """Time average of (2/eps_a) phi_i(q + eps_a mu_tilde) mu_tilde_i over one common period."""
    q = np.asarray(q, dtype=float)
    period = float(common_period(bank.freqs)) * bank.eps_p
    fastest = max(float(f) for f in bank.freqs)
    m = int(math.ceil(samples_per_cycle * fastest * period / bank.eps_p))
    ts = period * np.arange(m) / m
    mts = bank.mu_tilde_exact(ts)
    acc = np.zeros(game.n)
    for mt in mts:
        acc += game.kind.costs(q + bank.eps_a * mt) * mt
    return (2.0 / bank.eps_a) * acc / m


def jump_map_g3(game, params, x, policy: JumpPolicy = JumpPolicy(), rng=None):
    """Base jump; oscillators (and estimates, if present) carried over unchanged."""
    return jump_map_g1(game, params, x, policy, rng)


jump_map_g4 = jump_map_g3


def initial_state_h3(x1, bank: OscillatorBank) -> np.ndarray:
    return np.concatenate([np.asarray(x1, dtype=float), bank.initial_mu()])


def initial_state_h4(x1, bank: OscillatorBank, q_hat=None) -> np.ndarray:
    x1 = np.asarray(x1, dtype=float)
    n = x1.size // 3
    q_hat = np.repeat(x1[:n], n - 1) if q_hat is None else np.asarray(q_hat, dtype=float)
    return np.concatenate([x1, q_hat, bank.initial_mu()])


def _timer_tests(n, T0, T, start=0):
    tau = slice(2 * n, 3 * n)
    return (lambda x: bool(np.all(x[tau] >= T0 - TIMER_TOL) and np.all(x[tau] <= T + TIMER_TOL)),
            lambda x: bool(np.max(x[tau]) >= T - TOL_EVENT),
            lambda x: float(np.max(x[tau]) - T))


def build_h3(game: GameSpec, params: HmNssParams, bank: OscillatorBank,
             compiled: bool = True) -> HybridSystemDef:
    n = params.n
    if bank.n != n:
        raise ConfigError("oscillator bank size differs from the number of players")
    costs = game.kind.costs
    w = bank.omega
    eps_a, eta = bank.eps_a, params.eta

    def flow(x, e):
        q, p, tau, mu = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]
        mt = mu[0::2]
        out = np.empty(x.size)
        out[:n] = 2.0 * (p - q) / tau
        out[n:2 * n] = (-4.0 / eps_a) * tau * costs(q + eps_a * mt) * mt
        out[2 * n:3 * n] = eta
        out[3 * n::2] = w * mu[1::2]
        out[3 * n + 1::2] = -w * mt
        return out

    def post(x):
        renormalize(x[3 * n:])
        return x

    in_flow, in_jump, ev = _timer_tests(n, params.T0, params.T)
    kernel = None
    if compiled and numba is not None and isinstance(game.kind, QuadraticGame):
        kernel = _make_h3_kernel(game.kind.A, game.kind.b, n, eta, params.T, eps_a, w)
    return HybridSystemDef(flow_map=flow, flow_set_test=in_flow, jump_set_test=in_jump,
                           jump_resolver=lambda x, policy, rng: jump_map_g3(game, params, x, policy, rng),
                           dim=5 * n, event_value=ev, n_players=n, post_step=post,
                           kernel=kernel, name="h3")


def build_h4(game: GameSpec, params: HmNssParams, bank: OscillatorBank, eps_c: float,
             graph: Optional[Graph] = None) -> HybridSystemDef:
    n = params.n
    if eps_c <= 0:
        raise ConfigError("consensus parameter eps_c must be positive")
    if bank.n != n:
        raise ConfigError("oscillator bank size differs from the number of players")
    L = laplacian(graph or params.graph or complete_graph(n))
    m = n * n - n

    def flow(x, e):
        return flow_map_h4(game, params, bank, eps_c, L, x)

    def post(x):
        renormalize(x[3 * n + m:])
        return x

    in_flow, in_jump, ev = _timer_tests(n, params.T0, params.T)
    return HybridSystemDef(flow_map=flow, flow_set_test=in_flow, jump_set_test=in_jump,
                           jump_resolver=lambda x, policy, rng: jump_map_g4(game, params, x, policy, rng),
                           dim=3 * n + m + 2 * n, event_value=ev, n_players=n, post_step=post,
                           name="h4")


def h4_order_warnings(eps_p: float, eps_a: float, eps_c: float) -> list:
    """The small parameters should shrink in the order eps_p <= eps_a <= eps_c."""
    out = []
    if eps_p > eps_a:
        out.append(f"eps_p={eps_p} exceeds eps_a={eps_a}")
    if eps_a > eps_c:
        out.append(f"eps_a={eps_a} exceeds eps_c={eps_c}")
    return out


def _make_h3_kernel(A, b, n, eta, T, eps_a, omega):
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    dA = np.ascontiguousarray(np.diag(A))
    omega = np.ascontiguousarray(omega, dtype=float)
    thr = T - TOL_EVENT

    def kernel(x, t, h, nsteps):
        y, done, hit = _h3_quadratic_steps(np.array(x, dtype=float), h, nsteps, n, A, b, dA,
                                           eta, thr, eps_a, omega)
        return y, int(done), bool(hit)

    return kernel


if numba is not None:
    @numba.njit(cache=True)
    def _h3_rhs(x, out, n, A, b, dA, eta, eps_a, omega):
        for i in range(n):
            qi = x[i] + eps_a * x[3 * n + 2 * i]
            out[i] = qi  # scratch: dithered action
        for i in range(n):
            s = b[i]
            for k in range(n):
                s += A[i, k] * out[k]
            qd = out[i]
            phi = qd * s - 0.5 * dA[i] * qd * qd
            # stash cost until every dithered action has been read
            out[3 * n + 2 * i + 1] = phi
        for i in range(n):
            mt = x[3 * n + 2 * i]
            mh = x[3 * n + 2 * i + 1]
            tau = x[2 * n + i]
            phi = out[3 * n + 2 * i + 1]
            out[i] = 2.0 * (x[n + i] - x[i]) / tau
            out[n + i] = (-4.0 / eps_a) * tau * phi * mt
            out[2 * n + i] = eta
            out[3 * n + 2 * i] = omega[i] * mh
            out[3 * n + 2 * i + 1] = -omega[i] * mt

    @numba.njit(cache=True)
    def _h3_quadratic_steps(x, h, nsteps, n, A, b, dA, eta, thr, eps_a, omega):
        m = x.size
        k1 = np.empty(m)
        k2 = np.empty(m)
        k3 = np.empty(m)
        k4 = np.empty(m)
        tmp = np.empty(m)
        y = np.empty(m)
        done = 0
        for _ in range(nsteps):
            _h3_rhs(x, k1, n, A, b, dA, eta, eps_a, omega)
            for i in range(m):
                tmp[i] = x[i] + 0.5 * h * k1[i]
            _h3_rhs(tmp, k2, n, A, b, dA, eta, eps_a, omega)
            for i in range(m):
                tmp[i] = x[i] + 0.5 * h * k2[i]
            _h3_rhs(tmp, k3, n, A, b, dA, eta, eps_a, omega)
            for i in range(m):
                tmp[i] = x[i] + h * k3[i]
            _h3_rhs(tmp, k4, n, A, b, dA, eta, eps_a, omega)
            for i in range(m):
                y[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                a = y[3 * n + 2 * i]
                c = y[3 * n + 2 * i + 1]
                r = np.sqrt(a * a + c * c)
                y[3 * n + 2 * i] = a / r
                y[3 * n + 2 * i + 1] = c / r
            tmax = y[2 * n]
            for i in range(1, n):
                if y[2 * n + i] > tmax:
                    tmax = y[2 * n + i]
            if tmax >= thr:
                return x, done, True
            big = 0.0
            for i in range(m):
                v = abs(y[i])
                if not v <= 1e12:
                    big = np.inf
            for i in range(m):
                x[i] = y[i]
            done += 1
            if big > 0:
                return x, done, False
        return x, done, False
