"""End-to-end acceptance checks; each test prints one PASS/FAIL line with its measurements."""
import copy
import math
import time

import numpy as np
import pytest

from hmnss.certificates import (check_rc1, check_rc2, check_rc3, epsilon_star, example4_m0,
                                find_rc1_rc3_tuning, gamma, gc_threshold,
                                is_globally_contractive, lemma5_feasible, rc3_bound)
from hmnss.diagnostics import (check_jump_decrease, check_rate_bounds, lyapunov_series,
                               ne_distance_series, synchronized_mask, sync_report)
from hmnss.engine import closeness, run
from hmnss.experiment import build_scenario, generate_random_game, load_config, run_experiment
from hmnss.full_info import HmNssParams, build_h1, initial_state, sync_distance
from hmnss.game import catalog_game, eval_pseudogradient, fd_pseudogradient
from hmnss.model_free import OscillatorBank, build_h3, dither_average, initial_state_h3
from hmnss.network import build_selection, spectrum_summary
from hmnss.partial_info import consensus_error

from conftest import random_quadratic

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def _preset(name, **overrides):
    cfg = load_config(name)
    cfg.pop("sweep", None)
    for dotted, value in overrides.items():
        node = cfg
        *head, last = dotted.split(".")
        for part in head:
            node = node.setdefault(part, {})
        node[last] = value
    return cfg


def _distances(cfg):
    summ, arc = run_experiment(cfg, write=False)
    sc = build_scenario(cfg)
    return summ, ne_distance_series(arc, sc.game, sc.n)


def test_timer_synchronization(verdict):
    start = time.perf_counter()
    worst, longest, zeno, checked = 0.0, 0.0, 0, 0
    for k in range(100):
        rng = np.random.default_rng(1000 + k)
        n = (3, 5, 10)[k % 3]
        g = random_quadratic(rng, n)
        p = HmNssParams.create(n, eta=0.5, T0=0.1, T=1.0)
        x0 = initial_state(p, rng.uniform(-2, 2, n), tau0=rng.uniform(p.T0, p.T, n))
        arc = run(build_h1(g, p), x0, p.sync_time + 2 * p.flow_length, step=p.default_step, stride=1)
        rep = sync_report(arc, p)
        worst = max(worst, rep["max_sync_distance"])
        checked += rep["checked"]
        longest = max(longest, arc.annotations["max_cascade"] / n)
        zeno += bool(arc.annotations["zeno"])
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and longest <= 1 and zeno == 0 and elapsed < 60
    verdict(1, ok, f"max sync distance {worst:.2e} over {checked} samples, longest cascade "
                   f"{longest:.2f} n, zeno trips {zeno}, {elapsed:.1f} s")


def test_restarts_remove_perturbation_instability(verdict):
    _, base = _distances(_preset("example1_noresets"))
    _, hyb = _distances(_preset("example1_resets"))
    ratio = base.max() / base.min()
    ok = ratio >= 10 and hyb[-1] <= 0.1 * hyb[0]
    verdict(2, ok, f"baseline sup/min {ratio:.3g}; restarted final/initial {hyb[-1] / hyb[0]:.3g}")


def test_coordination_benefit(verdict):
    coord, _ = _distances(_preset("example2_coordinated"))
    unco, _ = _distances(_preset("example2_uncoordinated"))
    psg, _ = _distances(_preset("example2_psg"))
    a, b, c = coord.final_distance, unco.final_distance, psg.final_distance
    verdict(3, a < b and a < c, f"final distance coordinated {a:.3g}, uncoordinated {b:.3g}, "
                                f"first-order flow {c:.3g}")


def test_reset_frequency_band(verdict):
    g = catalog_game("example4")
    c = g.constants
    rho_F = c.sigma_phi * c.ell
    analytic = 1 / math.sqrt(1 - example4_m0(rho_F, 1.0, 0.5))
    bisected = gc_threshold(g, rho_F, 0.0, 0.5)
    agree = abs(analytic - bisected) <= 1e-6 and abs(analytic - math.sqrt(4 / 3)) <= 1e-12
    fast, d_fast = _distances(_preset("example4_sweep", **{"params.T_scale": 0.9}))
    slow, d_slow = _distances(_preset("example4_sweep", **{"params.T_scale": 2.0}))
    converges = d_fast[-1] <= 1e-6
    unstable = slow.diverged or d_slow[-1] >= d_slow[0]
    verdict(4, agree and converges and unstable,
            f"threshold analytic {analytic:.9f} vs bisection {bisected:.9f}; 0.9x final {d_fast[-1]:.2e}; "
            f"2x final {d_slow[-1]:.2e} vs initial {d_slow[0]:.3g} (diverged={slow.diverged})")


def test_exponential_contraction(verdict):
    rows, ok = [], True
    for s in range(5):
        g = generate_random_game(5, 0.5, 2.0, True, seed=100 + s, ne_box=(-2, 2))
        rho_J = 1 / g.constants.kappa
        T = 1.5 * math.sqrt(0.01 + rho_J / 2)
        assert check_rc1(T, 0.1, rho_J, [0])
        ok &= _contraction_case(g, T, rho_J, "T1i3", "potential", s, rows)
    for s in range(5):
        g = generate_random_game(5, 0.5, 0.6, False, seed=200 + s, ne_box=(-2, 2))
        c = g.constants
        rho_J = c.sigma_phi**2 / c.kappa
        T = 0.9 * gc_threshold(g, c.sigma_phi * c.ell, 0.0, 0.5)
        assert check_rc1(T, 0.1, rho_J, [0])
        assert is_globally_contractive(g, c.sigma_phi * c.ell, 0.0, T, 0.5).holds
        ok &= _contraction_case(g, T, rho_J, "T3i5", "nonpotential", s, rows)
    verdict(5, ok, "; ".join(rows))


def _contraction_case(g, T, rho_J, tag, variant, seed, rows):
    p = HmNssParams.create(5, eta=0.5, T0=0.1, T=T)
    rng = np.random.default_rng(seed)
    x0 = initial_state(p, rng.uniform(-3, 3, 5), tau0=rng.uniform(0.1, T, 5))
    arc = run(build_h1(g, p), x0, p.sync_time + 12 * p.flow_length, step=p.default_step, stride=5)
    V = lyapunov_series(arc, g, 5, variant)
    jr = check_jump_decrease(arc, V, p, rho_J=rho_J)
    bound = 1 - gamma(T, 0.1, rho_J)
    # factors are only meaningful while V is well above round-off
    pre = [V[a] for a, _ in _sync_cascades(arc, p)]
    strict = [f for f, v in zip(jr.factors, pre) if v >= 1e-8]
    rb = check_rate_bounds(arc, g, p, tag)
    good = (jr.contraction_violations == 0 and all(f <= bound + 1e-6 for f in strict)
            and rb.holds and jr.checked > 0)
    rows.append(f"{tag}#{seed} max factor {max(strict, default=0):.3f}<={bound:.3f}, "
                f"margin {rb.worst_margin:.2e}")
    return good


def _sync_cascades(arc, p):
    from hmnss.diagnostics import cascades
    return [(a, b) for a, b in cascades(arc) if arc.t[a] + arc.j[a] >= p.sync_time]


def _semi_acceleration(game, p, q0, t_max, level_fn, tag):
    arc = run(build_h1(game, p), initial_state(p, q0), t_max, step=p.default_step, stride=5)
    rep = check_rate_bounds(arc, game, p, tag)
    n = p.n
    level = np.array([level_fn(v) for v in arc.x[:, :n]])
    w = level * arc.x[:, 2 * n] ** 2
    mask = synchronized_mask(arc, p)
    rises = 0
    for _, idx in arc.intervals():
        idx = idx[mask[idx]]
        ww = w[idx]
        up = np.diff(ww) > 1e-6 * np.abs(ww[:-1])
        rises += int(np.sum(up & (ww[:-1] > 1e-12 * w[0])))
    cj = np.array(rep.details["c_j"])
    live = cj[cj > 1e-12 * cj[0]]
    dec = bool(np.all(np.diff(live) <= 1e-12 * live[:-1]))
    ratio = rep.details["c_ratio_final"]
    ok = rep.holds and rises == 0 and dec and ratio < 1e-3
    return ok, (f"{tag}: bound holds={rep.holds}, weighted-level rises {rises}, "
                f"c_j decreasing={dec}, c_final/c_0 {ratio:.2e}")


def test_semi_acceleration(verdict):
    g = catalog_game("logcosh5")
    p = HmNssParams.create(5, eta=0.5, T0=0.1, T=2.0, alpha=1)
    ok1, d1 = _semi_acceleration(g, p, np.full(5, 3.0), 200.0,
                                 lambda q: g.kind.potential(q) - g.kind.potential(g.ne), "T1i1")
    sk = catalog_game("example4")
    c = sk.constants
    T = 0.9 * gc_threshold(sk, c.sigma_phi * c.ell, 0.0, 0.5)
    p2 = HmNssParams.create(2, eta=0.5, T0=0.1, T=T, alpha=1)
    ok2, d2 = _semi_acceleration(sk, p2, np.array([5.0, 5.0]), 60.0,
                                 lambda q: float(np.sum(sk.kind.pseudogradient(q) ** 2)), "T2")
    verdict(6, ok1 and ok2, f"{d1}; {d2}")


def test_certificate_consistency(verdict):
    rng = np.random.default_rng(2024)
    counts, bad = [0, 0, 0], [0, 0, 0]
    for k in range(1000):
        n = int(rng.integers(2, 7))
        potential = bool(rng.integers(0, 2))
        kappa = float(rng.uniform(0.1, 2.0))
        sphi = float(rng.uniform(1.02, 3.0))
        eta = float(rng.uniform(0.05, 0.5))
        g = generate_random_game(n, kappa, kappa * sphi, potential, seed=k)
        c = g.constants
        T = float(rng.uniform(0.01, 0.999)) * math.sqrt((1 - eta) / (2 * c.ell))
        assert check_rc2(T, eta, c.ell)
        counts[0] += 1
        bad[0] += not is_globally_contractive(g, c.ell, 0.0, T, eta).holds
        rho = c.sigma_phi * c.ell
        delta = float(rng.uniform(0, 0.999)) * (1 - eta) / rho
        bound, unbounded = rc3_bound(eta, c.sigma_phi, c.ell, c.kappa, delta)
        T3 = float(rng.uniform(0.01, 0.999)) * math.sqrt(100.0 if unbounded else bound)
        if check_rc3(T3, eta, c.sigma_phi, c.ell, c.kappa, delta).holds:
            counts[1] += 1
            bad[1] += not is_globally_contractive(g, rho, delta, T3, eta).holds
        if lemma5_feasible(c.sigma_phi, eta):
            counts[2] += 1
            bad[2] += find_rc1_rc3_tuning(c.kappa, c.sigma_phi, eta) is None
    verdict(7, sum(bad) == 0, f"counterexamples {bad} over {counts} checks "
                              f"(RC2=>GC, RC3=>GC, feasible=>tuning)")


def test_two_time_scale_closeness(verdict):
    cfg = _preset("example8_h2")
    sc = build_scenario(cfg)
    p, n = sc.params, sc.n
    window, jumps, h = 3 * p.flow_length, 3 * n, 1e-4
    ref = run(build_h1(sc.game, p), sc.x0[:3 * n], window + 0.01, step=h, stride=10)
    gaps = []
    for eps in (0.1, 0.01, 0.001):
        c = copy.deepcopy(cfg)
        c["partial_info"]["eps"] = eps
        s2 = build_scenario(c)
        arc = run(s2.system, s2.x0, window + 0.01, step=min(h, eps / 10), stride=10)
        gaps.append(closeness(arc, ref, window, jumps, cols=list(range(3 * n))))
    monotone = all(a >= b for a, b in zip(gaps, gaps[1:]))
    small = gaps[-1] <= 1e-2

    spec = spectrum_summary(sc.graph)
    eps_star = epsilon_star(spec.sigma_L, p.T / p.T0, n, p.T, sc.game.constants.ell,
                            spec.lambda_max, 0.1, 0.5)
    eps = 0.5 * eps_star
    c = copy.deepcopy(cfg)
    c["partial_info"]["eps"] = eps
    s3 = build_scenario(c)
    x0 = s3.x0.copy()
    x0[3 * n:] += np.random.default_rng(0).normal(0, 0.5, n * n - n)
    arc = run(s3.system, x0, 0.05, step=eps / 10, stride=50)
    assert max(sync_distance(p, x[2 * n:3 * n]) for x in arc.x) <= 1e-9
    theta = np.array([consensus_error(x, n) for x in arc.x])
    speed = np.array([np.linalg.norm(s3.system.flow_map(x, None)[:n]) for x in arc.x])
    rising = np.diff(theta) >= 0
    radius = 5 * eps * math.sqrt(n - 1) * speed.max() / spec.lambda2
    outside_ok = bool(np.all(theta[:-1][rising] <= radius))
    strictly = not rising.any()
    ok = monotone and small and strictly
    verdict(8, ok, f"closeness {['%.3g' % v for v in gaps]} (non-increasing={monotone}, "
                   f"<=1e-2 at 1e-3: {small}); at eps={eps:.2e}<eps*={eps_star:.2e} theta "
                   f"{theta[0]:.3g}->{theta[-1]:.2e}, strictly decreasing={strictly}, "
                   f"decreasing outside radius {radius:.1e}: {outside_ok}")


def test_averaging(verdict):
    cfg = _preset("example9_h3")
    sc = build_scenario(cfg)
    g, p, n = sc.game, sc.params, sc.n
    window = 4.0
    x1 = sc.x0[:3 * n]
    ref = run(build_h1(g, p), x1, window + 0.05, step=1e-4, stride=20)
    at_ne = initial_state(p, g.ne)
    gaps, hoods = [], []
    drift = 0.0
    for eps_a, eps_p in ((0.1, 1e-2), (0.05, 1e-3), (0.02, 1e-4)):
        bank = OscillatorBank.default(n, eps_p=eps_p, eps_a=eps_a)
        h = bank.default_step(1e-3)
        sysd = build_h3(g, p, bank)
        stride = max(1, int(1e-3 / h))
        arc = run(sysd, initial_state_h3(x1, bank), window + 0.05, step=h, stride=stride)
        gaps.append(closeness(arc, ref, window, n, cols=list(range(3 * n))))
        r = np.hypot(arc.x[:, 3 * n::2], arc.x[:, 3 * n + 1::2])
        drift = max(drift, float(np.max(np.abs(r - 1))))
        b = run(sysd, initial_state_h3(at_ne, bank), window + 0.05, step=h, stride=stride)
        d = np.linalg.norm(b.x[:, :n] - g.ne, axis=1)
        hoods.append(float(d[b.t >= window / 2].max()))
    q = g.ne + np.random.default_rng(0).normal(0, 1, n)
    amps = (0.1, 0.05, 0.02, 0.01)
    errs = [np.linalg.norm(dither_average(g, OscillatorBank.default(n, eps_p=1e-2, eps_a=a), q)
                           - eval_pseudogradient(g, q)) for a in amps]
    slope = float(np.polyfit(np.log(amps), np.log(np.maximum(errs, 1e-300)), 1)[0])
    c_ok = all(a >= b for a, b in zip(gaps, gaps[1:]))
    h_ok = all(a > b for a, b in zip(hoods, hoods[1:]))
    s_ok = abs(slope - 1) <= 0.2
    verdict(9, c_ok and h_ok and s_ok and drift <= 1e-9,
            f"closeness {['%.3g' % v for v in gaps]}, neighborhood {['%.3g' % v for v in hoods]}, "
            f"dither error {['%.1e' % e for e in errs]} slope {slope:.2f}, unit drift {drift:.1e}")


def test_numerical_hygiene(verdict, tmp_path):
    rng = np.random.default_rng(10)
    games = [random_quadratic(rng, 5), catalog_game("logcosh5"), catalog_game("duopoly_frihauf")]
    fd_err = 0.0
    for g in games:
        for _ in range(20):
            q = rng.uniform(-3, 3, g.n)
            exact = eval_pseudogradient(g, q)
            fd_err = max(fd_err, float(np.max(np.abs(fd_pseudogradient(g, q) - exact)
                                              / (1 + np.abs(exact)))))
    bank = OscillatorBank.default(4, eps_p=1e-3, eps_a=0.05)
    g4 = random_quadratic(rng, 4)
    p4 = HmNssParams.create(4, T0=0.1, T=1.0)
    arc = run(build_h3(g4, p4, bank), initial_state_h3(initial_state(p4, np.ones(4)), bank), 3.0,
              step=bank.default_step(1e-3), stride=100)
    drift = float(np.max(np.abs(np.hypot(arc.x[:, 12::2], arc.x[:, 13::2]) - 1)))
    cfg = _preset("example1_resets", **{"horizon.t_max": 20.0})
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    name = cfg["name"]
    same = all((tmp_path / "a" / name / f).read_bytes() == (tmp_path / "b" / name / f).read_bytes()
               for f in ("trajectory.csv", "summary.json"))
    ident = True
    for n in range(2, 8):
        s = build_selection(n)
        ident &= (np.array_equal(s.P @ s.P.T, np.eye(n)) and np.array_equal(s.Q @ s.Q.T, np.eye(n * n - n))
                  and not np.any(s.P @ s.Q.T))
    verdict(10, fd_err <= 1e-6 and drift <= 1e-9 and same and ident,
            f"fd error {fd_err:.1e}, unit drift {drift:.1e}, byte-identical reruns {same}, "
            f"selection identities exact {ident}")
