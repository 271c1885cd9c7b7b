"""Configuration-driven experiments: parsing, random games, runs, sweeps and output files."""
from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import certificates as cert
from .diagnostics import (check_flow_decrease, check_jump_decrease, fit_rate, lyapunov_series,
                          ne_distance_series)
from .engine import HybridArc, JumpPolicy, Perturbation, run
from .errors import ConfigError, HmnssError
from .full_info import (HmNssParams, baseline_initial_state, baseline_ode, build_h1, initial_state,
                        psg_flow, sync_distance)
from .game import (GameSpec, QuadraticGame, catalog_game, quadratic_constants, quadratic_game)
from .model_free import OscillatorBank, build_h3, build_h4, h4_order_warnings
from .network import (Graph, complete_graph, erdos_renyi_graph, path_graph, ring_graph,
                      spectrum_summary)
from .partial_info import build_h2, default_qhat

PRESET_DIR = Path(__file__).with_name("presets")
VARIANTS = ("baseline_ode", "psg_flow", "h1", "h2", "h3", "h4")
THREADS_ENV = "HMNSS_THREADS"

# Reference equilibria quoted alongside catalog games; runs report their residual
# so that disagreements with the computed equilibrium stay visible.
REFERENCE_NE = {"duopoly_frihauf": (130 / 3, 101 / 3)}

SCHEMA: dict = {
    "name": str,
    "variant": str,
    "output_dir": str,
    "game": {
        "catalog": str, "A": list, "b": list,
        "random": {"n": int, "kappa": float, "ell": float, "potential": bool, "seed": int,
                   "spread": float, "ne_box": list},
    },
    "graph": {"preset": str, "p": float, "seed": int, "edges": list},
    "params": {"eta": float, "T0": float, "T": (float, str), "T_scale": float, "alpha": (int, list),
               "r": (float, list), "coordination": bool, "tie_to": str,
               "jump_policy": str, "jump_seed": int},
    "partial_info": {"eps": float, "d": float, "zeta": float},
    "model_free": {"eps_a": float, "eps_p": float, "eps_c": float, "freqs": list,
                   "phases": list},
    "perturbation": {"mode": str, "amplitude": float, "frequency": float, "phase": float,
                     "seed": int, "target": str, "noise_dt": float},
    "initial": {"q": list, "p": list, "tau": list, "q_hat": list, "box": list, "seed": int,
                "tau_random": bool},
    "horizon": {"t_max": float, "j_max": int},
    "integrator": {"step": float, "stride": int},
    "certify": {"delta": float, "rho_J": float, "rho_F": float, "sample_box": list,
                "n_points": int},
    "sweep": {"axes": dict},
}


def _check_schema(data: dict, schema: dict, path: str = "") -> None:
    for key, value in data.items():
        where = f"{path}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key '{where}'")
        rule = schema[key]
        if isinstance(rule, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a table")
            _check_schema(value, rule, where + ".")
            continue
        types = rule if isinstance(rule, tuple) else (rule,)
        ok = any(isinstance(value, t) and not (t in (int, float) and isinstance(value, bool))
                 or (t is float and isinstance(value, int) and not isinstance(value, bool))
                 for t in types)
        if not ok:
            raise ConfigError(f"'{where}' has type {type(value).__name__}, expected "
                              f"{' or '.join(t.__name__ for t in types)}")


def load_config(path) -> dict:
    """Read and validate a TOML experiment file; preset names resolve to shipped files."""
    p = Path(path)
    if not p.exists() and (PRESET_DIR / f"{path}.toml").exists():
        p = PRESET_DIR / f"{path}.toml"
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    data.setdefault("name", p.stem)
    validate_config(data)
    return data


def validate_config(data: dict) -> None:
    _check_schema(data, SCHEMA)
    if data.get("variant", "h1") not in VARIANTS:
        raise ConfigError(f"'variant' must be one of {VARIANTS}")
    game = data.get("game", {})
    sources = [k for k in ("catalog", "A", "random") if k in game]
    if len(sources) != 1:
        raise ConfigError("'game' needs exactly one of catalog, A/b or random")
    if "A" in game and "b" not in game:
        raise ConfigError("'game.b' is required with 'game.A'")
    if "random" in game:
        for k in ("n", "kappa", "ell", "potential", "seed"):
            if k not in game["random"]:
                raise ConfigError(f"'game.random.{k}' is required")
    graph = data.get("graph", {})
    if graph.get("preset") == "erdos_renyi" and "seed" not in graph:
        raise ConfigError("'graph.seed' is required for erdos_renyi graphs")
    init = data.get("initial", {})
    if ("box" in init or init.get("tau_random")) and "seed" not in init:
        raise ConfigError("'initial.seed' is required when initial conditions are random")
    params = data.get("params", {})
    if params.get("jump_policy") == "random" and "jump_seed" not in params:
        raise ConfigError("'params.jump_seed' is required for the random jump policy")
    pert = data.get("perturbation", {})
    if pert.get("mode") == "additive_seeded_noise" and "seed" not in pert:
        raise ConfigError("'perturbation.seed' is required for seeded noise")
    axes = data.get("sweep", {}).get("axes", {})
    for k, v in axes.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep axis '{k}' must be a nonempty list")
        _resolve_path(data, k)


def _resolve_path(data: dict, dotted: str):
    parts = dotted.split(".")
    node = SCHEMA
    for part in parts:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"sweep axis '{dotted}' is not a config field")
        node = node[part]
    return parts


def config_hash(data: dict) -> str:
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


def generate_random_game(n: int, kappa: float, ell: float, potential: bool, seed: int,
                         spread: float = 0.5, ne_box=(-1.0, 1.0)) -> GameSpec:
    """Quadratic game whose strong-monotonicity and Lipschitz constants hit the targets.

    Potential games get a symmetric matrix with extreme eigenvalues kappa and ell.
    Otherwise the symmetric part has spectrum in [kappa, kappa + spread (ell - kappa)]
    and a random skew part is scaled until the largest singular value equals ell.
    The equilibrium is drawn uniformly from ``ne_box``.
    """
    if not (0 < kappa <= ell) or n < 1:
        raise ConfigError(f"infeasible targets kappa={kappa}, ell={ell}, n={n}")
    if not 0 <= spread <= 1:
        raise ConfigError("spread must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    Qo, R = np.linalg.qr(rng.standard_normal((n, n)))
    Qo = Qo * np.sign(np.diag(R))
    if potential or n == 1:
        if potential and n == 1 and kappa != ell:
            raise ConfigError("a one-player game has kappa = ell")
        if n == 1 and not potential and kappa != ell:
            raise ConfigError("a one-player game cannot have a skew part")
        eig = np.concatenate([[kappa, ell], rng.uniform(kappa, ell, max(n - 2, 0))])[:n]
        A = Qo @ np.diag(eig) @ Qo.T
        A = 0.5 * (A + A.T)
    else:
        top = kappa + spread * (ell - kappa)
        eig = np.concatenate([[kappa], rng.uniform(kappa, top, n - 1)])
        if n > 1:
            eig[-1] = top
        S = Qo @ np.diag(eig) @ Qo.T
        S = 0.5 * (S + S.T)
        G = rng.standard_normal((n, n))
        K = G - G.T
        K /= np.linalg.norm(K, 2)
        lo, hi = 0.0, ell + np.linalg.norm(S, 2) + 1.0
        if np.linalg.norm(S, 2) < ell:
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if np.linalg.norm(S + mid * K, 2) < ell:
                    lo = mid
                else:
                    hi = mid
        A = S + 0.5 * (lo + hi) * K if np.linalg.norm(S, 2) < ell else S
    k_got, l_got = quadratic_constants(A)
    if abs(k_got - kappa) > 0.01 * kappa or abs(l_got - ell) > 0.01 * ell:
        raise ConfigError(f"generator missed targets: kappa={k_got}, ell={l_got}")
    lo_b, hi_b = ne_box
    q_star = rng.uniform(lo_b, hi_b, n)
    return quadratic_game(A, -A @ q_star, name=f"random_n{n}_seed{seed}")


def build_game(cfg: dict) -> GameSpec:
    g = cfg["game"]
    if "catalog" in g:
        return catalog_game(g["catalog"])
    if "A" in g:
        return quadratic_game(np.array(g["A"], dtype=float), np.array(g["b"], dtype=float))
    r = g["random"]
    return generate_random_game(r["n"], r["kappa"], r["ell"], r["potential"], r["seed"],
                                r.get("spread", 0.5), tuple(r.get("ne_box", (-1.0, 1.0))))


def build_graph(cfg: dict, n: int) -> Optional[Graph]:
    g = cfg.get("graph")
    if not g:
        return None
    if "edges" in g:
        return Graph.from_one_based(n, g["edges"])
    preset = g.get("preset", "complete")
    if preset == "complete":
        return complete_graph(n)
    if preset == "ring":
        return ring_graph(n)
    if preset == "path":
        return path_graph(n)
    if preset == "erdos_renyi":
        return erdos_renyi_graph(n, g.get("p", 0.5), g["seed"])
    raise ConfigError(f"unknown graph preset {preset!r}")


def build_params(cfg: dict, game: GameSpec, graph: Optional[Graph]) -> HmNssParams:
    p = cfg.get("params", {})
    eta = p.get("eta", 0.5)
    T0 = p.get("T0", 0.1)
    T = p.get("T", 1.0)
    if isinstance(T, str):
        c = game.constants
        if c is None or c.kappa <= 0:
            raise ConfigError("symbolic T needs a strongly monotone game")
        if T == "t_opt":
            T = cert.t_opt(c.kappa, max(c.sigma_phi, 1.0), T0)
        elif T == "gc_threshold":
            rho_F = c.ell if game.has_potential else c.sigma_phi * c.ell
            T = cert.gc_threshold(game, rho_F, cfg.get("certify", {}).get("delta", 0.0), eta)
        else:
            raise ConfigError(f"'params.T' must be a number, 't_opt' or 'gc_threshold', got {T!r}")
    T = T * p.get("T_scale", 1.0)
    return HmNssParams.create(game.n, eta=eta, T0=T0, T=T, alpha=p.get("alpha", 0), r=p.get("r"),
                              coordination=p.get("coordination", True), graph=graph,
                              tie_to=p.get("tie_to", "T"))


def build_policy(cfg: dict) -> JumpPolicy:
    p = cfg.get("params", {})
    return JumpPolicy(p.get("jump_policy", "lowest_index"), p.get("jump_seed"))


def build_perturbation(cfg: dict, n: int) -> Perturbation:
    pc = cfg.get("perturbation", {})
    return Perturbation(mode=pc.get("mode", "none"), amplitude=pc.get("amplitude", 0.0),
                        frequency=pc.get("frequency", 1.0), phase=pc.get("phase", 0.0),
                        seed=pc.get("seed", 0), n=n, target=pc.get("target", "pseudogradient"),
                        noise_dt=pc.get("noise_dt", 0.1))


def build_bank(cfg: dict, n: int) -> OscillatorBank:
    m = cfg.get("model_free", {})
    eps_p, eps_a = m.get("eps_p", 1e-2), m.get("eps_a", 5e-2)
    phases = tuple(m["phases"]) if "phases" in m else None
    if "freqs" in m:
        freqs = tuple(Fraction(str(f)) for f in m["freqs"])
        return OscillatorBank(freqs, eps_p, eps_a, phases)
    bank = OscillatorBank.default(n, eps_p, eps_a)
    return OscillatorBank(bank.freqs, eps_p, eps_a, phases)


def build_initial_q(cfg: dict, game: GameSpec) -> np.ndarray:
    init = cfg.get("initial", {})
    if "q" in init:
        q0 = np.array(init["q"], dtype=float)
        if q0.size != game.n:
            raise ConfigError(f"'initial.q' needs {game.n} entries")
        return q0
    if "box" in init:
        lo, hi = init["box"]
        return np.random.default_rng(init["seed"]).uniform(lo, hi, game.n)
    return np.zeros(game.n)


@dataclass
class Scenario:
    """Everything needed to simulate one configured experiment."""

    cfg: dict
    game: GameSpec
    variant: str
    system: Any
    x0: np.ndarray
    params: Optional[HmNssParams]
    step: float
    stride: int
    t_max: float
    j_max: int
    policy: JumpPolicy
    perturbation: Perturbation
    graph: Optional[Graph] = None
    bank: Optional[OscillatorBank] = None
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.game.n


def build_scenario(cfg: dict) -> Scenario:
    game = build_game(cfg)
    n = game.n
    variant = cfg.get("variant", "h1")
    graph = build_graph(cfg, n)
    init = cfg.get("initial", {})
    q0 = build_initial_q(cfg, game)
    pert = build_perturbation(cfg, n)
    integ = cfg.get("integrator", {})
    hz = cfg.get("horizon", {})
    t_max = hz.get("t_max", 10.0)
    j_max = hz.get("j_max", 10**9)
    policy = build_policy(cfg)
    warnings: list = []
    params = bank = None
    if variant == "baseline_ode":
        T0 = cfg.get("params", {}).get("T0", 0.1)
        sys_ = baseline_ode(game, cfg.get("params", {}).get("eta", 0.5), pert.target)
        x0 = baseline_initial_state(q0, T0, init.get("p"))
        step = integ.get("step", 1e-3)
    elif variant == "psg_flow":
        sys_ = psg_flow(game, pert.target)
        x0 = q0
        step = integ.get("step", 1e-2)
    else:
        params = build_params(cfg, game, graph)
        tau0 = init.get("tau")
        if init.get("tau_random"):
            rng = np.random.default_rng([init["seed"], 1])
            tau0 = rng.uniform(params.T0, params.T, n)
        x1 = initial_state(params, q0, init.get("p"), tau0)
        step = integ.get("step", params.default_step)
        pi = cfg.get("partial_info", {})
        mf = cfg.get("model_free", {})
        if variant == "h1":
            sys_ = build_h1(game, params, pert.target)
            x0 = x1
        elif variant == "h2":
            eps = pi.get("eps", 1e-2)
            sys_ = build_h2(game, params, eps, graph)
            x0 = np.concatenate([x1, np.asarray(init.get("q_hat", default_qhat(q0)), dtype=float)])
            step = min(step, eps / 10)
        else:
            bank = build_bank(cfg, n)
            step = bank.default_step(step)
            if variant == "h3":
                sys_ = build_h3(game, params, bank)
                x0 = np.concatenate([x1, bank.initial_mu()])
            else:
                eps_c = mf.get("eps_c", pi.get("eps", 1e-1))
                warnings += h4_order_warnings(bank.eps_p, bank.eps_a, eps_c)
                sys_ = build_h4(game, params, bank, eps_c, graph)
                qh = np.asarray(init.get("q_hat", default_qhat(q0)), dtype=float)
                x0 = np.concatenate([x1, qh, bank.initial_mu()])
        if pert.active and variant in ("h3", "h4"):
            warnings.append("perturbations act on the pseudogradient, which model-free variants never query")
    if pert.active and variant not in ("h3", "h4") and pert.n != n:
        raise ConfigError("perturbation dimension mismatch")
    stride = integ.get("stride", 1)
    return Scenario(cfg, game, variant, sys_, np.asarray(x0, dtype=float), params, step, stride,
                    t_max, j_max, policy, pert, graph, bank, warnings)


def simulate(sc: Scenario) -> HybridArc:
    return run(sc.system, sc.x0, sc.t_max, sc.j_max, step=sc.step, policy=sc.policy,
               perturbation=sc.perturbation, stride=sc.stride)


def _columns(sc: Scenario) -> list:
    n = sc.n
    cols = ["t", "j"] + [f"q_{i + 1}" for i in range(n)]
    if sc.variant == "psg_flow":
        return cols
    cols += [f"p_{i + 1}" for i in range(n)]
    if sc.variant == "baseline_ode":
        return cols + ["tau"]
    cols += [f"tau_{i + 1}" for i in range(n)]
    if sc.variant in ("h2", "h4"):
        cols += [f"qhat_{k + 1}" for k in range(n * n - n)]
    if sc.variant in ("h3", "h4"):
        cols += [f"mu_{k + 1}" for k in range(2 * n)]
    return cols


def _lyapunov_variant(game: GameSpec) -> Optional[str]:
    if game.has_potential:
        return "potential"
    if game.constants is not None and game.constants.cocoercivity > 0:
        return "nonpotential"
    return None


def lyapunov_for(sc: Scenario, arc: HybridArc) -> np.ndarray:
    n = sc.n
    if sc.variant == "psg_flow" or not sc.game.known_ne:
        d = ne_distance_series(arc, sc.game, n) if sc.game.known_ne else np.full(len(arc), np.nan)
        return 0.5 * d * d
    variant = _lyapunov_variant(sc.game)
    if variant is None:
        return np.full(len(arc), np.nan)
    if sc.variant == "baseline_ode":
        xs = np.hstack([arc.x[:, :2 * n], np.repeat(arc.x[:, 2 * n:2 * n + 1], n, axis=1)])
        shadow = HybridArc(arc.t, arc.j, xs)
        return lyapunov_series(shadow, sc.game, n, variant)
    return lyapunov_series(arc, sc.game, n, variant)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path: Path, sc: Scenario, arc: HybridArc, dist: np.ndarray, V: np.ndarray) -> None:
    cols = _columns(sc) + ["dist_to_ne", "V_total"]
    width = len(cols) - 4
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(arc)):
            row = [_fmt(arc.t[k]), str(int(arc.j[k]))]
            row += [_fmt(v) for v in arc.x[k, :width]]
            row += [_fmt(dist[k]), _fmt(V[k])]
            fh.write(",".join(row) + "\n")


def read_csv_arc(path) -> tuple:
    """Load a trajectory CSV as an arc over its (q, p, tau) columns, plus the header."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    keep = [k for k, c in enumerate(header) if c.split("_")[0] in ("q", "p", "tau")]
    return HybridArc(data[:, 0], data[:, 1].astype(np.int64), data[:, keep]), [header[k] for k in keep]


def observed_sync_time(sc: Scenario, arc: HybridArc) -> Optional[float]:
    if sc.params is None:
        return None
    n = sc.n
    d = np.array([sync_distance(sc.params, x[2 * n:3 * n]) for x in arc.x])
    bad = np.flatnonzero(d > 1e-6)
    if bad.size == 0:
        return 0.0
    if bad[-1] + 1 >= len(arc):
        return None
    return float(arc.t[bad[-1] + 1])


def certificate_report(cfg: dict, game: GameSpec, params: Optional[HmNssParams],
                       graph: Optional[Graph]) -> dict:
    if params is None:
        return {}
    c = cfg.get("certify", {})
    spectrum = spectrum_summary(graph) if graph is not None and graph.n > 1 else None
    zeta = cfg.get("partial_info", {}).get("zeta")
    if spectrum is None and cfg.get("variant") in ("h2", "h4") and game.n > 1:
        spectrum = spectrum_summary(complete_graph(game.n))
    rep = cert.certify(game, params.T, params.T0, params.eta, params.alpha,
                       delta=c.get("delta", 0.0), rho_J=c.get("rho_J"), rho_F=c.get("rho_F"),
                       sigma_L=spectrum.sigma_L if spectrum else None,
                       lambda_max=spectrum.lambda_max if spectrum else None, zeta=zeta,
                       sample_box=tuple(c.get("sample_box", (-1.0, 1.0))),
                       n_points=c.get("n_points", 10_000))
    return rep.to_dict()


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_clean(obj.tolist())
    return obj


@dataclass
class RunSummary:
    config_hash: str
    name: str
    variant: str
    certificates: dict
    final_distance: Optional[float]
    initial_distance: Optional[float]
    diverged: bool
    zeno: bool
    sync_time: Optional[float]
    jump_count: int
    max_cascade: int
    flow_violations: Optional[int]
    jump_violations: Optional[int]
    fitted_rate: Optional[float]
    fitted_r2: Optional[float]
    notes: list
    wall_time: float = 0.0
    outdir: str = ""

    def to_json_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("wall_time", "outdir")}
        return _json_clean(d)


def summarize(sc: Scenario, arc: HybridArc, cfg_hash: str) -> tuple:
    n = sc.n
    notes = list(sc.warnings)
    dist = ne_distance_series(arc, sc.game, n) if sc.game.known_ne else np.full(len(arc), np.nan)
    V = lyapunov_for(sc, arc)
    flow_v = jump_v = None
    if sc.params is not None and np.all(np.isfinite(V)):
        base = HybridArc(arc.t, arc.j, arc.x)
        flow_v = check_flow_decrease(base, V, sc.params).violations
        jump_v = check_jump_decrease(base, V, sc.params).violations
    rate = r2 = None
    if sc.game.known_ne and len(arc) > 2 and not arc.diverged:
        half = arc.t >= 0.5 * arc.t[-1]
        if half.sum() > 2:
            f = fit_rate(arc.t[half], dist[half])
            rate, r2 = f.lambda_hat, f.r2
            if f.clipped:
                notes.append("distance hit the numerical floor; rate fit clipped at 1e-14")
    ref = REFERENCE_NE.get(sc.game.name)
    if ref is not None:
        ref = np.array(ref)
        notes.append(
            f"reference NE {ref.tolist()} has residual |G|={np.linalg.norm(sc.game.kind.pseudogradient(ref)):.6g}; "
            f"linear solve gives {sc.game.ne.tolist()}")
    summ = RunSummary(
        config_hash=cfg_hash, name=sc.cfg.get("name", ""), variant=sc.variant,
        certificates=certificate_report(sc.cfg, sc.game, sc.params, sc.graph),
        final_distance=float(dist[-1]) if sc.game.known_ne else None,
        initial_distance=float(dist[0]) if sc.game.known_ne else None,
        diverged=arc.diverged, zeno=bool(arc.annotations.get("zeno", False)),
        sync_time=observed_sync_time(sc, arc), jump_count=len(arc.events),
        max_cascade=int(arc.annotations.get("max_cascade", 0)),
        flow_violations=flow_v, jump_violations=jump_v, fitted_rate=rate, fitted_r2=r2,
        notes=notes)
    return summ, dist, V


def run_experiment(cfg: dict, out_root: Optional[Path] = None, write: bool = True) -> tuple:
    """Simulate one configuration; returns ``(RunSummary, HybridArc)`` and writes files."""
    validate_config(cfg)
    start = time.perf_counter()
    sc = build_scenario(cfg)
    arc = simulate(sc)
    summ, dist, V = summarize(sc, arc, config_hash(cfg))
    summ.wall_time = time.perf_counter() - start
    if write:
        root = Path(out_root if out_root is not None else cfg.get("output_dir", "runs"))
        outdir = root / cfg.get("name", "run")
        outdir.mkdir(parents=True, exist_ok=True)
        write_csv(outdir / "trajectory.csv", sc, arc, dist, V)
        with open(outdir / "summary.json", "w") as fh:
            json.dump(summ.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(outdir / "timing.json", "w") as fh:
            json.dump({"wall_time_s": summ.wall_time}, fh)
        summ.outdir = str(outdir)
    return summ, arc


def _set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def sweep_points(cfg: dict) -> list:
    """Grid points of the sweep axes in a stable (row-major, sorted-axis) order."""
    axes = cfg.get("sweep", {}).get("axes", {})
    keys = sorted(axes)
    points = []
    for k, combo in enumerate(itertools.product(*(axes[a] for a in keys))):
        c = copy.deepcopy(cfg)
        c.pop("sweep", None)
        for a, v in zip(keys, combo):
            _set_path(c, a, v)
        c["name"] = f"{cfg.get('name', 'sweep')}/point_{k:03d}"
        points.append((dict(zip(keys, combo)), c))
    return points


def _run_point(args):
    point, cfg, out_root = args
    try:
        summ, _ = run_experiment(cfg, out_root)
        return point, summ, None
    except HmnssError as exc:
        return point, None, f"{type(exc).__name__}: {exc}"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def run_sweep(cfg: dict, out_root: Optional[Path] = None, workers: Optional[int] = None) -> list:
    """One run per grid point, in parallel processes; results keep grid order."""
    validate_config(cfg)
    points = sweep_points(cfg)
    root = Path(out_root if out_root is not None else cfg.get("output_dir", "runs"))
    jobs = [(p, c, root) for p, c in points]
    workers = workers or thread_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    table = []
    for point, summ, err in results:
        row = {"point": point, "error": err}
        if summ is not None:
            row.update(summ.to_json_dict())
        table.append(_json_clean(row))
    outdir = root / cfg.get("name", "sweep")
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.json", "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table


def certify_config(cfg: dict) -> dict:
    """Certificates only, without simulating."""
    validate_config(cfg)
    game = build_game(cfg)
    graph = build_graph(cfg, game.n)
    params = build_params(cfg, game, graph)
    return _json_clean(certificate_report(cfg, game, params, graph))
