"""Games, pseudogradients, Jacobians and equilibrium residuals.

Players have scalar actions. A game is either quadratic, with pseudogradient
``A q + b``, or analytic, given by per-player cost callables together with the
partial derivative of each cost in the player's own action.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError, SingularMatrixError

TOL_NE = 1e-8


@dataclass(frozen=True)
class GameConstants:
    kappa: float
    ell: float
    cocoercivity: float = 0.0
    reverse_lipschitz: float = 0.0
    estimated: bool = False

    def __post_init__(self):
        if self.kappa < 0 or self.ell <= 0:
            raise DomainError(f"need kappa >= 0 and ell > 0, got {self.kappa}, {self.ell}")
        if self.kappa > 0 and self.ell < self.kappa * (1 - 1e-12):
            raise DomainError(f"ell={self.ell} must dominate kappa={self.kappa}")

    @property
    def sigma_phi(self) -> float:
        if self.kappa <= 0:
            return float("inf")
        return self.ell / self.kappa


@dataclass(frozen=True)
class GameClass:
    """Declared classification of a game, consumed by certificate checks."""

    monotone: bool = True
    strictly_monotone: bool = False
    strongly_monotone: Optional[float] = None
    potential: bool = False
    quadratic: bool = False
    cocoercive: Optional[float] = None

    def __post_init__(self):
        if self.strongly_monotone is not None:
            if self.strongly_monotone <= 0:
                raise DomainError("strong monotonicity modulus must be positive")
            if not (self.strictly_monotone and self.monotone):
                raise DomainError("strongly monotone implies strictly monotone and monotone")
        if self.strictly_monotone and not self.monotone:
            raise DomainError("strictly monotone implies monotone")


@dataclass(frozen=True)
class QuadraticGame:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.size:
            raise DomainError(f"incompatible shapes A{A.shape}, b{b.shape}")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.size

    def pseudogradient(self, q):
        return self.A @ q + self.b

    def costs(self, q):
        # phi_i(q) = q_i * (row_i(A) q + b_i) - A_ii q_i^2 / 2, whose own-action
        # partial is row_i(A) q + b_i
        return q * (self.A @ q + self.b) - 0.5 * np.diag(self.A) * q * q

    def own_partial(self, i: int, e):
        return self.A[i] @ e + self.b[i]

    def potential(self, q):
        q = np.asarray(q, dtype=float)
        return float(0.5 * q @ self.A @ q + self.b @ q)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.A, self.A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.A).max())))


@dataclass(frozen=True)
class AnalyticGame:
    """Game given by cost callables ``costs[i](q)`` and own-action partials ``partials[i](q)``."""

    costs_fns: tuple
    partials: tuple
    potential_fn: Optional[Callable] = None
    gradient_fn: Optional[Callable] = None

    @property
    def n(self) -> int:
        return len(self.costs_fns)

    def pseudogradient(self, q):
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(q), dtype=float)
        return np.array([f(q) for f in self.partials], dtype=float)

    def costs(self, q):
        return np.array([f(q) for f in self.costs_fns], dtype=float)

    def own_partial(self, i: int, e):
        return float(self.partials[i](e))

    def potential(self, q):
        if self.potential_fn is None:
            raise DomainError("game has no potential evaluator")
        return float(self.potential_fn(q))


@dataclass(frozen=True)
class GameSpec:
    n: int
    kind: object
    known_ne: tuple = ()
    constants: Optional[GameConstants] = None
    game_class: GameClass = field(default_factory=GameClass)
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.kind.n != self.n:
            raise DomainError(f"game declares n={self.n} but its data has n={self.kind.n}")
        ne = tuple(np.asarray(x, dtype=float).reshape(-1) for x in self.known_ne)
        for x in ne:
            if x.size != self.n:
                raise DomainError("NE point has the wrong dimension")
            if np.linalg.norm(self.kind.pseudogradient(x)) > TOL_NE * max(1.0, np.linalg.norm(x)):
                raise DomainError(f"stored NE {x} has residual above {TOL_NE}")
        object.__setattr__(self, "known_ne", ne)

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.kind, QuadraticGame)

    @property
    def has_potential(self) -> bool:
        if isinstance(self.kind, QuadraticGame):
            return self.kind.is_symmetric
        return self.kind.potential_fn is not None

    @property
    def ne(self) -> np.ndarray:
        if not self.known_ne:
            raise DomainError("game has no stored Nash equilibrium")
        return self.known_ne[0]


def _check_finite(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise DomainError("action profile contains non-finite entries")
    return q


def eval_pseudogradient(game: GameSpec, q) -> np.ndarray:
    """Stacked own-action partial derivatives of all players' costs."""
    return game.kind.pseudogradient(_check_finite(q))


def eval_costs(game: GameSpec, q) -> np.ndarray:
    return game.kind.costs(_check_finite(q))


def fd_step(q) -> float:
    return max(1e-6, 1e-6 * float(np.max(np.abs(q), initial=0.0)))


def eval_jacobian(game: GameSpec, q) -> np.ndarray:
    q = _check_finite(q)
    if isinstance(game.kind, QuadraticGame):
        return np.array(game.kind.A)
    h = fd_step(q)
    J = np.empty((game.n, game.n))
    for k in range(game.n):
        dq = np.zeros(game.n)
        dq[k] = h
        J[:, k] = (game.kind.pseudogradient(q + dq) - game.kind.pseudogradient(q - dq)) / (2 * h)
    if not np.all(np.isfinite(J)):
        raise NumericalError("Jacobian has non-finite entries")
    return J


def fd_pseudogradient(game: GameSpec, q) -> np.ndarray:
    """Central finite differences of each cost in its own action (gradient-free reference)."""
    q = _check_finite(q)
    h = fd_step(q)
    out = np.empty(game.n)
    for i in range(game.n):
        dq = np.zeros(game.n)
        dq[i] = h
        out[i] = (game.kind.costs(q + dq)[i] - game.kind.costs(q - dq)[i]) / (2 * h)
    return out


def quadratic_constants(A) -> tuple[float, float]:
    A = np.asarray(A, dtype=float)
    kappa = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
    ell = float(np.linalg.norm(A, 2))
    return kappa, ell


def _box_bounds(box, n):
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(hi <= lo):
        raise DomainError("sample box must have finite bounds with lo < hi in every coordinate")
    return lo, hi


def estimate_constants(game: GameSpec, sample_box=(-1.0, 1.0), n_samples: int = 1000,
                       seed: int = 0) -> GameConstants:
    """Strong-monotonicity and Lipschitz constants.

    Exact for quadratic games. Otherwise a sampled lower estimate of kappa and
    upper estimate of ell over random pairs in ``sample_box``, flagged as estimates.
    """
    if n_samples < 2:
        raise DomainError("need at least two samples")
    lo, hi = _box_bounds(sample_box, game.n)
    if isinstance(game.kind, QuadraticGame):
        kappa, ell = quadratic_constants(game.kind.A)
        return GameConstants(kappa=max(kappa, 0.0), ell=ell,
                             cocoercivity=kappa / ell**2 if kappa > 0 else 0.0)
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((n_samples, game.n))
    y = lo + (hi - lo) * rng.random((n_samples, game.n))
    kappa, ell = np.inf, 0.0
    for a, c in zip(x, y):
        d = a - c
        nd = d @ d
        if nd == 0:
            continue
        dg = game.kind.pseudogradient(a) - game.kind.pseudogradient(c)
        kappa = min(kappa, (dg @ d) / nd)
        ell = max(ell, float(np.sqrt(dg @ dg / nd)))
    kappa = max(float(kappa), 0.0)
    ell = max(ell, kappa, np.finfo(float).tiny)
    return GameConstants(kappa=kappa, ell=ell,
                         cocoercivity=kappa / ell**2 if kappa > 0 else 0.0, estimated=True)


def solve_quadratic_ne(game: GameSpec) -> np.ndarray:
    if not isinstance(game.kind, QuadraticGame):
        raise DomainError("closed-form NE only available for quadratic games")
    A, b = game.kind.A, game.kind.b
    if np.linalg.matrix_rank(A) < game.n:
        raise SingularMatrixError("A is singular")
    q = np.linalg.solve(A, -b)
    if np.linalg.norm(A @ q + b) > 1e-10 * max(np.linalg.norm(b), 1.0):
        raise SingularMatrixError("A is too ill-conditioned for an accurate NE")
    return q


def quadratic_game(A, b, name: str = "", classify: bool = True) -> GameSpec:
    """Build a quadratic game with exact constants, NE and classification."""
    kind = QuadraticGame(A, b)
    kappa, ell = quadratic_constants(kind.A)
    known = ()
    if np.linalg.matrix_rank(kind.A) == kind.n:
        known = (np.linalg.solve(kind.A, -kind.b),)
    constants = None
    cls = GameClass(quadratic=True, potential=kind.is_symmetric)
    if ell > 0:
        constants = GameConstants(kappa=max(kappa, 0.0), ell=ell,
                                  cocoercivity=kappa / ell**2 if kappa > 0 else 0.0)
    if classify and kappa > 0:
        cls = GameClass(monotone=True, strictly_monotone=True, strongly_monotone=kappa,
                        potential=kind.is_symmetric, quadratic=True, cocoercive=kappa / ell**2)
    elif classify and kappa >= -1e-12:
        cls = GameClass(monotone=True, potential=kind.is_symmetric, quadratic=True)
    return GameSpec(n=kind.n, kind=kind, known_ne=known, constants=constants,
                    game_class=cls, name=name)


def analytic_game(costs: Sequence[Callable], partials: Sequence[Callable], *, known_ne=(),
                  constants: Optional[GameConstants] = None, game_class: GameClass = GameClass(),
                  potential: Optional[Callable] = None, gradient: Optional[Callable] = None,
                  name: str = "") -> GameSpec:
    kind = AnalyticGame(tuple(costs), tuple(partials), potential, gradient)
    return GameSpec(n=kind.n, kind=kind, known_ne=tuple(known_ne), constants=constants,
                    game_class=game_class, name=name)


def as_analytic(game: GameSpec) -> GameSpec:
    """Wrap a quadratic game's costs as an analytic game (Jacobian by finite differences)."""
    if not isinstance(game.kind, QuadraticGame):
        return game
    qg = game.kind
    costs = [lambda q, i=i: qg.costs(q)[i] for i in range(game.n)]
    partials = [lambda q, i=i: qg.own_partial(i, q) for i in range(game.n)]
    pot = qg.potential if qg.is_symmetric else None
    return analytic_game(costs, partials, known_ne=game.known_ne, constants=game.constants,
                         game_class=replace(game.game_class, quadratic=False),
                         potential=pot, name=game.name)


def potential_gap(game: GameSpec, q) -> float:
    """P(q) - min P, using the stored NE as minimizer."""
    q = _check_finite(q)
    return game.kind.potential(q) - game.kind.potential(game.ne)


def ne_distance(game: GameSpec, q) -> float:
    q = np.asarray(q, dtype=float)
    return min(float(np.linalg.norm(q - x)) for x in game.known_ne)


def logcosh_potential_game(W, c, name: str = "logcosh_potential") -> GameSpec:
    """Identical-interest game with potential sum_k log cosh((W q - c)_k).

    Monotone with Lipschitz pseudogradient, but not strongly monotone: the
    curvature decays away from the unique equilibrium ``W^{-1} c``.
    """
    W = np.array(W, dtype=float)
    c = np.array(c, dtype=float)
    W.setflags(write=False)
    c.setflags(write=False)
    n = c.size

    def pot(q):
        z = W @ q - c
        # log cosh z computed without overflow
        return float(np.sum(np.logaddexp(z, -z) - np.log(2.0)))

    def grad(q):
        return W.T @ np.tanh(W @ q - c)

    costs = [pot] * n
    partials = [lambda q, i=i: float(W[:, i] @ np.tanh(W @ q - c)) for i in range(n)]
    ell = float(np.linalg.norm(W, 2) ** 2)
    return analytic_game(costs, partials, known_ne=(np.linalg.solve(W, c),),
                         constants=GameConstants(kappa=0.0, ell=ell, cocoercivity=1.0 / ell),
                         game_class=GameClass(monotone=True, strictly_monotone=True,
                                              potential=True, cocoercive=1.0 / ell),
                         potential=pot, gradient=grad, name=name)


EXAMPLE4_MATRIX = np.array([[6.0, 1.5], [-1.5, 6.0]])
EXAMPLE4_NE = np.array([2.0, -2.0])


def _duopoly() -> GameSpec:
    return quadratic_game([[10.0, -5.0], [-5.0, 10.0]], [-250.0, -150.0], name="duopoly_frihauf")


def _example4() -> GameSpec:
    return quadratic_game(EXAMPLE4_MATRIX, -EXAMPLE4_MATRIX @ EXAMPLE4_NE, name="example4")


def _logcosh5() -> GameSpec:
    rng = np.random.default_rng(5)
    return logcosh_potential_game(np.eye(5) + 0.3 * rng.standard_normal((5, 5)),
                                  rng.standard_normal(5), name="logcosh5")


CATALOG = {
    "duopoly_frihauf": _duopoly,
    "example4": _example4,
    "logcosh5": _logcosh5,
}


def catalog_game(name: str) -> GameSpec:
    try:
        return CATALOG[name]()
    except KeyError:
        raise DomainError(f"unknown catalog game {name!r}; known: {sorted(CATALOG)}") from None
