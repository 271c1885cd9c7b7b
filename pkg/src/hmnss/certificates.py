"""Closed-form tuning certificates for the restart period and time-scale gains.

Covers the reset conditions RC1-RC3, the jump contraction rate gamma, the
contractivity matrix test (GC), the feasibility test on the game condition
number, the quasi-optimal restart period, settling time and the consensus
gain bound.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import DomainError
from .game import GameSpec, QuadraticGame, eval_jacobian

PD_TOL = 1e-10


@dataclass(frozen=True)
class ConditionNumbers:
    sigma_phi: float
    sigma_r: float
    sigma_L: float = 1.0


def condition_numbers(kappa: float, ell: float, T: float, T0: float,
                      sigma_L: float = 1.0) -> ConditionNumbers:
    return ConditionNumbers(sigma_phi=ell / kappa if kappa > 0 else math.inf,
                            sigma_r=T / T0, sigma_L=sigma_L)


def check_rc1(T: float, T0: float, rho_J: float, alpha) -> bool:
    """Restart period long enough: T^2 - T0^2 > (rho_J / 2)(1 - min alpha)."""
    a_min = min(np.atleast_1d(alpha))
    return bool(T * T - T0 * T0 > 0.5 * rho_J * (1 - a_min))


def gamma(T: float, T0: float, rho_J: float) -> float:
    """Per-cascade contraction margin 1 - (T0/T)^2 - rho_J / (2 T^2)."""
    return 1.0 - (T0 / T) ** 2 - rho_J / (2.0 * T * T)


def check_rc2(T: float, eta: float, ell: float) -> bool:
    return bool(0 < T * T < (1 - eta) / (2 * ell))


@dataclass(frozen=True)
class RC3Result:
    holds: bool
    bound: float
    unbounded: bool = False

    def __bool__(self):
        return self.holds


def rc3_bound(eta: float, sigma_phi: float, ell: float, kappa: float, delta: float) -> tuple:
    rho = sigma_phi * ell
    if not (0 <= delta < (1 - eta) / rho):
        raise DomainError(f"delta={delta} outside [0, {(1 - eta) / rho})")
    num = 1 - eta - delta * rho
    den = rho - kappa + delta * num
    if den <= 0:
        # consistent inputs have rho >= kappa, so this is the degenerate
        # sigma_phi = 1, delta = 0 case: every T is admissible
        return math.inf, True
    return num / den, False


def check_rc3(T: float, eta: float, sigma_phi: float, ell: float, kappa: float,
              delta: float) -> RC3Result:
    bound, unbounded = rc3_bound(eta, sigma_phi, ell, kappa, delta)
    return RC3Result(holds=bool(0 < T * T < bound), bound=bound, unbounded=unbounded)


@dataclass(frozen=True)
class ChiDomain:
    linear: bool  # delta T^2 < 1
    squared: bool  # delta^2 T^2 < 1
    momentum: bool  # rho_F (1 - eta) - delta rho_F^2 > 0

    @property
    def agree(self) -> bool:
        return self.linear == self.squared


def chi_domain(rho_F: float, delta: float, T: float, eta: float) -> ChiDomain:
    return ChiDomain(linear=delta * T * T < 1, squared=delta * delta * T * T < 1,
                     momentum=rho_F * (1 - eta) - delta * rho_F * rho_F > 0)


def chi(rho_F: float, delta: float, T: float, eta: float) -> float:
    """Contraction level T^2 / (1 - delta T^2) / (rho_F (1 - eta) - delta rho_F^2).

    Requires ``delta T^2 < 1`` and a positive momentum term. The stricter
    ``delta^2 T^2 < 1`` is only reported through :func:`chi_domain`.
    """
    dom = chi_domain(rho_F, delta, T, eta)
    if rho_F <= 0 or delta < 0:
        raise DomainError("need rho_F > 0 and delta >= 0")
    if not (dom.linear and dom.momentum):
        raise DomainError(f"chi undefined at rho_F={rho_F}, delta={delta}, T={T}, eta={eta}: {dom}")
    return T * T / (1 - delta * T * T) / (rho_F * (1 - eta) - delta * rho_F * rho_F)


def m_delta(game: GameSpec, q, rho_F: float, delta: float, T: float, eta: float) -> np.ndarray:
    """I - chi (rho_F I - J)(rho_F I - J)^T with J the pseudogradient Jacobian at q."""
    c = chi(rho_F, delta, T, eta)
    S = rho_F * np.eye(game.n) - eval_jacobian(game, q)
    return np.eye(game.n) - c * (S @ S.T)


def example4_m0(rho_F: float, T: float, eta: float) -> float:
    """Closed-form diagonal entry of the delta = 0 matrix for the Example-4 game."""
    return 1 - T * T * (4 * (rho_F - 12) * rho_F + 153) / (4 * (1 - eta) * rho_F)


@dataclass(frozen=True)
class GCResult:
    holds: bool
    min_eig: float
    exact: bool
    n_points: int = 1

    def __bool__(self):
        return self.holds


def sobol_grid(box, n: int, n_points: int = 10_000, seed: int = 0) -> np.ndarray:
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    if np.any(hi <= lo):
        raise DomainError("degenerate sample box")
    m = max(1, math.ceil(math.log2(n_points)))
    pts = qmc.Sobol(d=n, scramble=True, seed=seed).random_base2(m)[:n_points]
    return qmc.scale(pts, lo, hi)


def is_globally_contractive(game: GameSpec, rho_F: float, delta: float, T: float, eta: float,
                            sample_box=(-1.0, 1.0), grid=None, n_points: int = 10_000,
                            seed: int = 0) -> GCResult:
    """Positive definiteness of the contractivity matrix.

    A single exact check for quadratic games; otherwise the minimum eigenvalue
    over a Sobol grid (plus any extra ``grid`` points), which is a sampled
    certificate only.
    """
    if isinstance(game.kind, QuadraticGame):
        ev = float(np.linalg.eigvalsh(m_delta(game, np.zeros(game.n), rho_F, delta, T, eta))[0])
        return GCResult(holds=ev > PD_TOL, min_eig=ev, exact=True)
    pts = sobol_grid(sample_box, game.n, n_points, seed)
    if grid is not None:
        pts = np.vstack([pts, np.asarray(grid, dtype=float).reshape(-1, game.n)])
    worst = math.inf
    for q in pts:
        if game.known_ne and min(np.linalg.norm(q - x) for x in game.known_ne) == 0:
            continue
        worst = min(worst, float(np.linalg.eigvalsh(m_delta(game, q, rho_F, delta, T, eta))[0]))
    return GCResult(holds=worst > PD_TOL, min_eig=worst, exact=False, n_points=len(pts))


def gc_threshold(game: GameSpec, rho_F: float, delta: float, eta: float, T_hi: float = 1e3,
                 tol: float = 1e-8) -> float:
    """Largest restart period keeping a quadratic game GC, located by bisection."""
    def ok(T):
        try:
            return is_globally_contractive(game, rho_F, delta, T, eta).holds
        except DomainError:
            return False
    lo, hi = 0.0, T_hi
    if ok(hi):
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid > 0 and ok(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def t_opt(kappa: float, sigma_phi: float, T0: float) -> float:
    """Quasi-optimal restart period e sigma_phi sqrt(1/(2 kappa) + T0^2/sigma_phi^2)."""
    if kappa <= 0 or sigma_phi < 1 or T0 < 0:
        raise DomainError("need kappa > 0, sigma_phi >= 1 and T0 >= 0")
    return math.e * sigma_phi * math.sqrt(1 / (2 * kappa) + T0 * T0 / (sigma_phi * sigma_phi))


def settling_time(kappa: float, sigma_phi: float, sigma_r: float, eta: float, T0: float,
                  nu: float, M0: float) -> float:
    if nu <= 0 or M0 <= 0:
        raise DomainError("need nu > 0 and M0 > 0")
    ratio = sigma_phi * sigma_r * M0 / nu
    if ratio <= 1:
        return 0.0
    return (t_opt(kappa, sigma_phi, T0) - T0) / eta * math.log(ratio)


def epsilon_star(sigma_L: float, sigma_r: float, n: int, T: float, ell: float,
                 lambda_max: float, delta: float, zeta: float) -> float:
    """Upper bound on the consensus time-scale parameter."""
    if delta <= 0 or zeta <= 0:
        raise DomainError("epsilon_star needs delta > 0 and zeta > 0")
    inner = max(1 / T**2 + 4 * ell / (T * lambda_max), 2 + 2 * ell / (T * lambda_max))
    return 1 / (2 * sigma_L * math.sqrt(n)) / (1 + sigma_r**2 * inner / (delta * min(1.0, zeta**2)))


def lemma5_feasible(sigma_phi: float, eta: float) -> bool:
    """Whether RC1 and RC3 can hold together for small enough delta and T0."""
    if sigma_phi < 1:
        raise DomainError("sigma_phi must be at least 1")
    return sigma_phi**4 - sigma_phi**2 < 2 * (1 - eta)


def find_rc1_rc3_tuning(kappa: float, sigma_phi: float, eta: float) -> Optional[tuple]:
    """Grid search for (T, T0, delta) satisfying RC1 (rho_J = sigma_phi^2/kappa, alpha = 0) and RC3."""
    ell = sigma_phi * kappa
    rho_J = sigma_phi**2 / kappa
    for k_d in range(1, 16):
        delta = 10.0 ** (-k_d)
        if delta >= (1 - eta) / (sigma_phi * ell):
            continue
        upper, _ = rc3_bound(eta, sigma_phi, ell, kappa, delta)
        for k_t in range(1, 10):
            T0 = 10.0 ** (-k_t) / math.sqrt(kappa)
            lower = T0 * T0 + rho_J / 2
            if lower >= upper:
                continue
            T2 = 0.5 * (lower + upper) if math.isfinite(upper) else 2 * lower
            T = math.sqrt(T2)
            if (T > T0 and check_rc1(T, T0, rho_J, [0])
                    and check_rc3(T, eta, sigma_phi, ell, kappa, delta).holds):
                return T, T0, delta
    return None


@dataclass
class CertificateReport:
    rc1: dict = field(default_factory=dict)
    rc2: dict = field(default_factory=dict)
    rc3: dict = field(default_factory=dict)
    gc: dict = field(default_factory=dict)
    gamma: Optional[float] = None
    t_opt: Optional[float] = None
    epsilon_star: Optional[float] = None
    lemma5_feasible: Optional[bool] = None
    chi_domain: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def certify(game: GameSpec, T: float, T0: float, eta: float, alpha, *, delta: float = 0.0,
            rho_J: Optional[float] = None, rho_F: Optional[float] = None,
            sigma_L: Optional[float] = None, lambda_max: Optional[float] = None,
            zeta: Optional[float] = None, sample_box=(-1.0, 1.0),
            n_points: int = 10_000) -> CertificateReport:
    """Evaluate every certificate that the game's constants allow."""
    rep = CertificateReport()
    c = game.constants
    if c is None:
        rep.notes.append("game constants unknown; only RC1 with explicit rho_J evaluated")
    kappa = c.kappa if c else 0.0
    ell = c.ell if c else None
    potential = game.has_potential
    if rho_J is None:
        if kappa > 0:
            rho_J = 1 / kappa if potential else c.sigma_phi**2 / kappa
        else:
            rho_J = 0.0
    rep.rc1 = {"holds": check_rc1(T, T0, rho_J, alpha), "rho_J": rho_J}
    rep.gamma = gamma(T, T0, rho_J)
    if ell is not None:
        rep.rc2 = {"holds": check_rc2(T, eta, ell), "bound": (1 - eta) / (2 * ell)}
    if kappa > 0 and ell is not None:
        sp = c.sigma_phi
        rep.lemma5_feasible = lemma5_feasible(max(sp, 1.0), eta)
        rep.t_opt = t_opt(kappa, max(sp, 1.0), T0)
        try:
            r3 = check_rc3(T, eta, sp, ell, kappa, delta)
            rep.rc3 = {"holds": r3.holds, "bound": r3.bound, "unbounded": r3.unbounded,
                       "delta": delta}
        except DomainError as exc:
            rep.rc3 = {"holds": False, "error": str(exc), "delta": delta}
        if rep.t_opt is not None and not rep.rc3.get("holds", False):
            rep.notes.append("T_opt and the chosen T should be checked against RC3 separately")
    if rho_F is None and ell is not None:
        rho_F = c.sigma_phi * ell if kappa > 0 and not potential else ell
    if rho_F is not None:
        dom = chi_domain(rho_F, delta, T, eta)
        rep.chi_domain = asdict(dom) | {"agree": dom.agree}
        if not dom.agree:
            rep.notes.append("the two chi domain conditions on delta T^2 disagree")
        try:
            g = is_globally_contractive(game, rho_F, delta, T, eta, sample_box, n_points=n_points)
            rep.gc = {"rho_F": rho_F, "delta": delta, "min_eig": g.min_eig, "holds": g.holds,
                      "exact": g.exact}
        except DomainError as exc:
            rep.gc = {"rho_F": rho_F, "delta": delta, "holds": False, "error": str(exc)}
    if sigma_L is not None and zeta is not None and lambda_max is not None and ell is not None:
        try:
            rep.epsilon_star = epsilon_star(sigma_L, T / T0, game.n, T, ell, lambda_max, delta, zeta)
        except DomainError as exc:
            rep.notes.append(f"epsilon_star skipped: {exc}")
    elif sigma_L is not None:
        rep.notes.append("epsilon_star skipped: reverse-Lipschitz constant zeta not supplied")
    return rep
