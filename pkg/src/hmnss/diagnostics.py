"""Lyapunov evaluators and trajectory-level checks of decrease and rate bounds."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .certificates import gamma
from .engine import HybridArc
from .errors import ConfigError
from .full_info import HmNssParams, sync_distance
from .game import GameSpec

DIST_FLOOR = 1e-14


def tol_lyap(V) -> np.ndarray:
    return 1e-6 * (1.0 + np.asarray(V))


@dataclass
class LyapunovSample:
    V1: float
    V2: float
    V3: float
    Vt3: float
    V_theta: float
    V_total: float


def _ne_dist(game: GameSpec, v) -> float:
    return min(float(np.linalg.norm(v - x)) for x in game.known_ne)


def eval_lyapunov(game: GameSpec, x, n: int, variant: str = "potential", c_o: Optional[float] = None,
                  d: Optional[float] = None) -> LyapunovSample:
    """Lyapunov components at a flat state ``(q, p, tau[, q_hat])``.

    ``variant`` is ``"potential"`` (V1 + V2 + V3), ``"nonpotential"`` (V1 + V2 + Vt3)
    or ``"graph"``, which blends the non-potential function with the consensus
    energy as ``(1 - d) Vtilde + d |theta|^2 / 2``.
    """
    x = np.asarray(x, dtype=float)
    q, p, tau = x[:n], x[n:2 * n], x[2 * n:3 * n]
    V1 = 0.25 * float(np.sum((p - q) ** 2))
    V2 = 0.25 * _ne_dist(game, p) ** 2
    tt = float(tau @ tau)
    V3 = Vt3 = V_theta = 0.0
    if variant == "potential":
        if not game.has_potential:
            raise ConfigError("potential Lyapunov function needs a potential game")
        V3 = tt / n * max(game.kind.potential(q) - game.kind.potential(game.ne), 0.0)
        total = V1 + V2 + V3
    elif variant in ("nonpotential", "graph"):
        if c_o is None:
            if game.constants is None or game.constants.cocoercivity <= 0:
                raise ConfigError("non-potential Lyapunov function needs a cocoercivity constant")
            c_o = game.constants.cocoercivity
        g = game.kind.pseudogradient(q)
        Vt3 = c_o * tt * float(g @ g) / (2 * n)
        total = V1 + V2 + Vt3
        if variant == "graph":
            if d is None or not 0 < d < 1:
                raise ConfigError("graph Lyapunov function needs a blend weight d in (0, 1)")
            from .partial_info import consensus_error
            V_theta = 0.5 * consensus_error(x, n) ** 2
            total = (1 - d) * total + d * V_theta
    else:
        raise ConfigError(f"unknown Lyapunov variant {variant!r}")
    return LyapunovSample(V1, V2, V3, Vt3, V_theta, total)


def lyapunov_series(arc: HybridArc, game: GameSpec, n: int, variant: str = "potential",
                    c_o: Optional[float] = None, d: Optional[float] = None) -> np.ndarray:
    return np.array([eval_lyapunov(game, x, n, variant, c_o, d).V_total for x in arc.x])


def ne_distance_series(arc: HybridArc, game: GameSpec, n: int) -> np.ndarray:
    q = arc.x[:, :n]
    return np.min([np.linalg.norm(q - x, axis=1) for x in game.known_ne], axis=0)


def synchronized_mask(arc: HybridArc, params: HmNssParams) -> np.ndarray:
    return (arc.t + arc.j) >= params.sync_time


def sync_report(arc: HybridArc, params: HmNssParams) -> dict:
    """Worst distance of the timers to the synchronized set after the transient."""
    n = params.n
    mask = synchronized_mask(arc, params)
    worst = max((sync_distance(params, x[2 * n:3 * n]) for x in arc.x[mask]), default=0.0)
    return {"checked": int(mask.sum()), "max_sync_distance": float(worst)}


@dataclass
class DecreaseReport:
    violations: int = 0
    max_positive: float = 0.0
    locations: list = field(default_factory=list)
    checked: int = 0
    factors: list = field(default_factory=list)
    contraction_violations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def check_flow_decrease(arc: HybridArc, V: np.ndarray, params: HmNssParams) -> DecreaseReport:
    """Flag centered-difference derivatives of V above the relative tolerance.

    Only samples of the synchronized regime are checked, and differences never
    straddle a jump.
    """
    rep = DecreaseReport()
    sync = synchronized_mask(arc, params)
    for _, idx in arc.intervals():
        if idx.size < 3:
            continue
        t, v = arc.t[idx], V[idx]
        dv = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
        inner = idx[1:-1]
        ok = sync[inner]
        bad = ok & (dv > tol_lyap(v[1:-1]))
        rep.checked += int(ok.sum())
        if bad.any():
            rep.violations += int(bad.sum())
            rep.max_positive = max(rep.max_positive, float(dv[bad].max()))
            rep.locations.extend((float(arc.t[k]), int(arc.j[k])) for k in inner[bad][:20])
    return rep


def cascades(arc: HybridArc):
    """Yield ``(pre_index, post_index)`` for each maximal run of jumps at one time."""
    k = 0
    m = arc.t.size
    while k < m - 1:
        if arc.j[k + 1] == arc.j[k] + 1:
            start = k
            while k < m - 1 and arc.j[k + 1] == arc.j[k] + 1 and arc.t[k + 1] == arc.t[start]:
                k += 1
            yield start, k
        else:
            k += 1


def check_jump_decrease(arc: HybridArc, V: np.ndarray, params: HmNssParams,
                        rho_J: Optional[float] = None) -> DecreaseReport:
    """Per-cascade change of V, plus the contraction factor when alpha = 0 and rho_J is given.

    A cascade violates contraction when V(post) > (1 - gamma) V(pre) + tol_lyap(V(pre)).
    """
    rep = DecreaseReport()
    contract = rho_J is not None and params.alpha_min == 0 and max(params.alpha) == 0
    bound = 1 - gamma(params.T, params.T0, rho_J) if contract else None
    for pre, post in cascades(arc):
        if arc.t[pre] + arc.j[pre] < params.sync_time:
            continue
        rep.checked += 1
        delta = V[post] - V[pre]
        if delta > tol_lyap(V[pre]):
            rep.violations += 1
            rep.max_positive = max(rep.max_positive, float(delta))
            rep.locations.append((float(arc.t[pre]), int(arc.j[pre])))
        if contract and V[pre] > 0:
            rep.factors.append(float(V[post] / V[pre]))
            # same relative tolerance as elsewhere, so round-off sized V cannot trip it
            if V[post] > bound * V[pre] + tol_lyap(V[pre]):
                rep.contraction_violations += 1
    return rep


@dataclass
class RateReport:
    theorem: str
    holds: bool
    worst_margin: float
    checked: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _jump_exponent(j, n):
    return np.maximum(0, np.floor((j - n) / n))


def _interval_constants(arc, values_at, params, mask):
    """Value of a series at the first synchronized sample of each flow interval."""
    out = []
    for jj, idx in arc.intervals():
        idx = idx[mask[idx]]
        if idx.size == 0:
            continue
        out.append((jj, idx, float(values_at[idx[0]])))
    return out


def check_rate_bounds(arc: HybridArc, game: GameSpec, params: HmNssParams, theorem: str,
                      nu: Optional[float] = None) -> RateReport:
    """Verify a convergence-rate inequality at every synchronized sample.

    ``theorem`` selects the inequality:

    * ``"T1i3"`` / ``"T3i5"``: |q - q*| <= s * (1 - gamma)^(a(j)/2) * M0, with
      ``s = sigma_r sqrt(sigma_phi)`` and rho_J = 1/kappa for potential games,
      ``s = sigma_r sigma_phi`` and rho_J = sigma_phi^2/kappa otherwise. M0 is
      the largest distance to the target set over pre-synchronization samples.
    * ``"T1i1"``: P(q) - P* <= c_j / tau^2 with c_j = 2 V at the start of each
      synchronized interval; also reports whether P~ tau^2 is non-increasing
      within intervals and how c_j evolves.
    * ``"T2"``: |G(q)|^2 <= c_j / tau^2 with c_j = 2 Vtilde / c_o, and the
      analogous monotonicity report for |G|^2 tau^2.
    * ``"L6"``: time for |q - q*| to settle below ``nu`` versus the closed form.
    """
    n = params.n
    c = game.constants
    mask = synchronized_mask(arc, params)
    q = arc.x[:, :n]
    p = arc.x[:, n:2 * n]
    tau = arc.x[:, 2 * n:3 * n]
    dist = ne_distance_series(arc, game, n)
    if theorem in ("T1i3", "T3i5"):
        if c is None or c.kappa <= 0:
            raise ConfigError("rate bound needs a strongly monotone game")
        if max(params.alpha) != 0:
            raise ConfigError("exponential rate bound assumes alpha = 0")
        potential = theorem == "T1i3"
        if potential and not game.has_potential:
            raise ConfigError("T1i3 needs a potential game")
        sp = c.sigma_phi
        rho_J = 1 / c.kappa if potential else sp * sp / c.kappa
        g = gamma(params.T, params.T0, rho_J)
        s = (params.T / params.T0) * (math.sqrt(sp) if potential else sp)
        pdist = np.min([np.linalg.norm(p - x, axis=1) for x in game.known_ne], axis=0)
        tdist = np.array([sync_distance(params, v) for v in tau])
        norm_A = np.sqrt(dist**2 + pdist**2 + tdist**2)
        pre = ~mask
        M0 = float(norm_A[pre].max()) if pre.any() else float(norm_A[0])
        bound = s * (1 - g) ** (_jump_exponent(arc.j, n) / 2) * M0
        margin = (bound - dist)[mask]
        worst = float(margin.min()) if margin.size else math.inf
        return RateReport(theorem, bool(worst >= 0), worst, int(mask.sum()),
                          {"M0": M0, "gamma": g, "rho_J": rho_J, "prefactor": s})
    if theorem in ("T1i1", "T2"):
        if max(params.alpha) != 1 or min(params.alpha) != 1:
            raise ConfigError("semi-acceleration bounds assume alpha = 1")
        if theorem == "T1i1":
            if not game.has_potential:
                raise ConfigError("T1i1 needs a potential game")
            V = lyapunov_series(arc, game, n, "potential")
            level = np.array([game.kind.potential(v) for v in q]) - game.kind.potential(game.ne)
            scale = 1.0
        else:
            if c is None or c.cocoercivity <= 0:
                raise ConfigError("T2 needs a cocoercivity constant")
            V = lyapunov_series(arc, game, n, "nonpotential")
            level = np.array([float(np.sum(game.kind.pseudogradient(v) ** 2)) for v in q])
            scale = 1.0 / c.cocoercivity
        ts = tau[:, 0]
        weighted = level * ts * ts
        consts = _interval_constants(arc, 2 * scale * V, params, mask)
        worst = math.inf
        mono_viol = 0
        checked = 0
        for _, idx, cj in consts:
            worst = min(worst, float(np.min(cj - weighted[idx])))
            w = weighted[idx]
            mono_viol += int(np.sum(np.diff(w) > 1e-6 * np.abs(w[:-1])))
            checked += idx.size
        cj = np.array([v for _, _, v in consts])
        decreasing = bool(np.all(np.diff(cj) <= 1e-12 * np.abs(cj[:-1]))) if cj.size > 1 else True
        ratio = float(cj[-1] / cj[0]) if cj.size and cj[0] > 0 else 0.0
        return RateReport(theorem, bool(worst >= -1e-12), worst, checked,
                          {"weighted_monotone_violations": mono_viol,
                           "c_j": cj.tolist(), "c_j_decreasing": decreasing,
                           "c_ratio_final": ratio})
    if theorem == "L6":
        if nu is None:
            raise ConfigError("L6 check needs nu")
        from .certificates import settling_time
        if c is None or c.kappa <= 0:
            raise ConfigError("settling time needs a strongly monotone game")
        start = int(np.argmax(mask)) if mask.any() else 0
        M0 = float(dist[start])
        predicted = settling_time(c.kappa, max(c.sigma_phi, 1.0), params.T / params.T0,
                                  params.eta, params.T0, nu, M0) if M0 > 0 else 0.0
        above = np.flatnonzero(dist > nu)
        observed = float(arc.t[above[-1]] - arc.t[start]) if above.size else 0.0
        return RateReport("L6", bool(observed <= predicted + 1e-9), predicted - observed, 1,
                          {"predicted": predicted, "observed": observed})
    raise ConfigError(f"unknown theorem tag {theorem!r}")


@dataclass
class RateFit:
    lambda_hat: float
    r2: float
    clipped: bool = False


def fit_rate(t, dist) -> RateFit:
    """Least-squares decay rate of ln(dist) against t (positive for decay)."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(dist, dtype=float)
    clipped = bool(np.any(d <= DIST_FLOOR))
    y = np.log(np.maximum(d, DIST_FLOOR))
    if np.ptp(y) == 0:
        return RateFit(lambda_hat=0.0, r2=1.0, clipped=clipped)
    slope, icpt = np.polyfit(t, y, 1)
    res = y - (slope * t + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(res**2))
    r2 = 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot
    return RateFit(lambda_hat=float(-slope) + 0.0, r2=r2, clipped=clipped)


def fit_exponential_rate(arc: HybridArc, game: GameSpec, n: int, window=None) -> RateFit:
    dist = ne_distance_series(arc, game, n)
    sel = np.ones(arc.t.size, dtype=bool)
    if window is not None:
        sel = (arc.t >= window[0]) & (arc.t <= window[1])
    return fit_rate(arc.t[sel], dist[sel])
