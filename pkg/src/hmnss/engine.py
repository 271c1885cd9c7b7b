"""Fixed-step simulator for hybrid systems with flows, jumps and hybrid time.

A system is a :class:`HybridSystemDef` over flat state vectors. Flow maps have
the signature ``flow_map(x, e)`` where ``e`` is the current perturbation vector
(or ``None``); systems that are not perturbable simply ignore it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

TOL_EVENT = 1e-10
DIVERGENCE_BOUND = 1e12
ZENO_FACTOR = 10


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int


@dataclass(frozen=True)
class JumpPolicy:
    """How a jump resolver picks among simultaneously enabled branches."""

    kind: str = "lowest_index"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("lowest_index", "random", "enumerate_all"):
            raise ConfigError(f"unknown jump policy {self.kind!r}")
        if self.kind == "random" and self.seed is None:
            raise ConfigError("random jump policy needs a seed")


@dataclass
class HybridSystemDef:
    flow_map: Callable
    flow_set_test: Callable
    jump_set_test: Callable
    jump_resolver: Callable
    dim: int
    event_value: Optional[Callable] = None
    n_players: int = 1
    post_step: Optional[Callable] = None
    # optional compiled fast path: kernel(x, t, h, nsteps) -> (x, steps_done, hit)
    # that stops before the first step landing in the jump set
    kernel: Optional[Callable] = None
    name: str = ""


@dataclass(frozen=True)
class Perturbation:
    """Bounded additive disturbance injected into the pseudogradient.

    ``target`` is ``"pseudogradient"`` (added to the output) or
    ``"pseudogradient_both"`` (added to the argument and to the output).
    """

    mode: str = "none"
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    seed: int = 0
    n: int = 1
    target: str = "pseudogradient"
    noise_dt: float = 0.1

    def __post_init__(self):
        if self.mode not in ("none", "additive_sinusoid", "additive_seeded_noise"):
            raise ConfigError(f"unknown perturbation mode {self.mode!r}")
        if self.target not in ("pseudogradient", "pseudogradient_both"):
            raise ConfigError(f"unknown perturbation target {self.target!r}")
        if self.amplitude < 0:
            raise ConfigError("perturbation amplitude must be non-negative")

    @property
    def active(self) -> bool:
        return self.mode != "none" and self.amplitude > 0

    def value(self, t: float) -> Optional[np.ndarray]:
        """Signal at time ``t``; its Euclidean norm never exceeds ``amplitude``."""
        if not self.active:
            return None
        per = self.amplitude / math.sqrt(self.n)
        if self.mode == "additive_sinusoid":
            return np.full(self.n, per * math.sin(self.frequency * t + self.phase))
        # piecewise-linear interpolation of seeded uniform knots
        k = int(t // self.noise_dt)
        w = t / self.noise_dt - k
        a = self._knot(k)
        return (1 - w) * a + w * self._knot(k + 1)

    def _knot(self, k: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, k])
        return (self.amplitude / math.sqrt(self.n)) * rng.uniform(-1.0, 1.0, self.n)


NO_PERTURBATION = Perturbation()


@dataclass
class JumpRecord:
    t: float
    j: int
    player: int
    branch: str


@dataclass
class HybridArc:
    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    events: list = field(default_factory=list)
    annotations: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def diverged(self) -> bool:
        return bool(self.annotations.get("diverged", False))

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def intervals(self):
        """Yield ``(j, index_array)`` for each flow interval, in order."""
        if self.t.size == 0:
            return
        cuts = np.flatnonzero(np.diff(self.j)) + 1
        for idx in np.split(np.arange(self.t.size), cuts):
            yield int(self.j[idx[0]]), idx

    def check_domain(self) -> bool:
        """Successive samples advance in t or j (never both nor neither); jumps add exactly 1."""
        dt = np.diff(self.t)
        dj = np.diff(self.j)
        flow = (dj == 0) & (dt > 0)
        jump = (dj == 1) & (dt == 0)
        return bool(np.all(flow | jump))


class _Recorder:
    def __init__(self, dim):
        self.t, self.j, self.x = [], [], []

    def add(self, t, j, x):
        self.t.append(t)
        self.j.append(j)
        self.x.append(np.array(x, dtype=float))

    def arc(self, events, annotations) -> HybridArc:
        return HybridArc(np.array(self.t, dtype=float), np.array(self.j, dtype=np.int64),
                         np.array(self.x), events, annotations)


def rk4_step(f, x, t, h, perturbation: Perturbation = NO_PERTURBATION):
    if perturbation.active:
        pv = perturbation.value
        k1 = f(x, pv(t))
        k2 = f(x + 0.5 * h * k1, pv(t + 0.5 * h))
        k3 = f(x + 0.5 * h * k2, pv(t + 0.5 * h))
        k4 = f(x + h * k3, pv(t + h))
    else:
        k1 = f(x, None)
        k2 = f(x + 0.5 * h * k1, None)
        k3 = f(x + 0.5 * h * k2, None)
        k4 = f(x + h * k3, None)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _bad(x) -> bool:
    m = np.max(np.abs(x))
    return not (m <= DIVERGENCE_BOUND)


@dataclass
class FlowResult:
    x: np.ndarray
    elapsed: float
    status: str  # "event", "timeout" or "diverged"


def _step(sys, x, t, h, perturbation):
    y = rk4_step(sys.flow_map, x, t, h, perturbation)
    if sys.post_step is not None:
        y = sys.post_step(y)
    return y


def _locate_event(sys, x_prev, t, h, perturbation, tol=TOL_EVENT):
    """Bisect the step length so the event function lands within ``tol`` of zero."""
    lo, hi = 0.0, h
    x_hi = _step(sys, x_prev, t, h, perturbation)
    if sys.event_value is None:
        return x_hi, h
    for _ in range(200):
        ev = sys.event_value(x_hi)
        if abs(ev) <= tol or hi - lo <= 1e-15 * max(1.0, abs(t)):
            break
        mid = 0.5 * (lo + hi)
        x_mid = _step(sys, x_prev, t, mid, perturbation)
        if sys.jump_set_test(x_mid):
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return x_hi, hi


def integrate_flow(sys: HybridSystemDef, x0, max_flow: float, step: float, *, t0: float = 0.0,
                   perturbation: Perturbation = NO_PERTURBATION,
                   on_step: Optional[Callable] = None) -> FlowResult:
    """Flow with fixed-step RK4 until the jump set is reached or ``max_flow`` elapses.

    ``on_step(t, x, k)`` is called after ``k`` accepted steps that stay out of
    the jump set. The step landing in the jump set is bisected so that the
    returned state sits on the event surface.
    """
    if not step > 0:
        raise ConfigError(f"integration step must be positive, got {step}")
    x = np.array(x0, dtype=float)
    if sys.jump_set_test(x):
        return FlowResult(x, 0.0, "event")
    elapsed = 0.0
    use_kernel = sys.kernel is not None and not perturbation.active
    while elapsed < max_flow:
        h = min(step, max_flow - elapsed)
        if max_flow - elapsed - h < 1e-12 * step:
            h = max_flow - elapsed
        if use_kernel and h == step:
            nsteps = int((max_flow - elapsed) // step)
            if on_step is not None:
                remaining = getattr(on_step, "remaining", None)
                nsteps = min(nsteps, remaining() if remaining else 1)
            if nsteps >= 1:
                x_new, done, hit = sys.kernel(x, t0 + elapsed, step, nsteps)
                if done:
                    x = x_new
                    elapsed += done * step
                    if _bad(x):
                        return FlowResult(x, elapsed, "diverged")
                    if on_step is not None:
                        on_step(t0 + elapsed, x, done)
                if not hit:
                    continue
        y = _step(sys, x, t0 + elapsed, h, perturbation)
        if _bad(y):
            return FlowResult(y, elapsed + h, "diverged")
        if sys.jump_set_test(y):
            y, hh = _locate_event(sys, x, t0 + elapsed, h, perturbation)
            return FlowResult(y, elapsed + hh, "event")
        x = y
        elapsed += h
        if on_step is not None:
            on_step(t0 + elapsed, x, 1)
    return FlowResult(x, elapsed, "timeout")


class _StrideRecorder:
    """on_step callback that records every ``stride``-th flow step."""

    def __init__(self, rec: _Recorder, stride: int, j_ref):
        self.rec = rec
        self.stride = max(1, int(stride))
        self.count = 0
        self.j_ref = j_ref

    def remaining(self) -> int:
        return self.stride - self.count

    def __call__(self, t, x, steps):
        self.count += steps
        if self.count >= self.stride:
            self.count = 0
            self.rec.add(t, self.j_ref[0], x)


def run(sys: HybridSystemDef, x0, t_max: float, j_max: int = 10**9, *,
        step: float, policy: JumpPolicy = JumpPolicy(), perturbation: Perturbation = NO_PERTURBATION,
        stride: int = 1, rng_seed: Optional[int] = None) -> HybridArc:
    """Simulate from ``x0`` until ``t_max`` or ``j_max`` jumps.

    Samples are recorded every ``stride`` flow steps, at every pre- and post-jump
    state, and at the final time. Divergence and Zeno-guard trips end the run
    and are reported in ``arc.annotations`` instead of being raised.
    """
    if policy.kind == "enumerate_all":
        raise ConfigError("enumerate_all is a test-only policy; use the cascade enumerator")
    x = np.array(x0, dtype=float)
    if x.shape != (sys.dim,):
        raise ConfigError(f"initial state has shape {x.shape}, expected ({sys.dim},)")
    if not (sys.flow_set_test(x) or sys.jump_set_test(x)):
        raise ConfigError("initial state lies outside the flow and jump sets")
    seed = policy.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    rec = _Recorder(sys.dim)
    events: list = []
    ann = {"diverged": False, "zeno": False, "stopped": "horizon"}
    t, j = 0.0, 0
    rec.add(t, j, x)
    j_ref = [0]
    recorder = _StrideRecorder(rec, stride, j_ref)
    zeno_max = ZENO_FACTOR * max(1, sys.n_players)
    while True:
        if sys.jump_set_test(x) and j < j_max:
            cascade = 0
            while sys.jump_set_test(x) and j < j_max:
                x, label = sys.jump_resolver(x, policy, rng)
                player, branch = label if isinstance(label, tuple) else (-1, str(label))
                events.append(JumpRecord(t, j, player, branch))
                j += 1
                cascade += 1
                rec.add(t, j, x)
                if cascade > zeno_max:
                    ann.update(zeno=True, stopped="zeno")
                    return rec.arc(events, ann)
            ann["max_cascade"] = max(ann.get("max_cascade", 0), cascade)
            continue
        if j >= j_max:
            ann["stopped"] = "j_max"
            break
        if t >= t_max:
            break
        j_ref[0] = j
        recorder.count = 0
        res = integrate_flow(sys, x, t_max - t, step, t0=t, perturbation=perturbation,
                             on_step=recorder)
        t += res.elapsed
        x = res.x
        if res.status == "diverged":
            rec.add(t, j, x)
            ann.update(diverged=True, stopped="diverged")
            return rec.arc(events, ann)
        if res.status == "timeout":
            if rec.t[-1] != t or rec.j[-1] != j:
                rec.add(t, j, x)
            t = t_max
            break
        if rec.t[-1] != t or rec.j[-1] != j:
            rec.add(t, j, x)
    return rec.arc(events, ann)


def _interp(ts, xs, t):
    if t <= ts[0]:
        return xs[0]
    if t >= ts[-1]:
        return xs[-1]
    k = int(np.searchsorted(ts, t, side="right")) - 1
    k = min(k, ts.size - 2)
    w = (t - ts[k]) / (ts[k + 1] - ts[k])
    return (1 - w) * xs[k] + w * xs[k + 1]


def _directed_gap(a: HybridArc, b: HybridArc, T: float, J: int, cols) -> float:
    worst = 0.0
    b_int = {jj: idx for jj, idx in b.intervals()}
    for jj, idx in a.intervals():
        if jj > J:
            break
        idx = idx[a.t[idx] <= T + 1e-12]
        if idx.size == 0:
            continue
        if jj not in b_int:
            return math.inf
        bi = b_int[jj]
        tb, xb = b.t[bi], b.x[bi][:, cols]
        ta, xa = a.t[idx], a.x[idx][:, cols]
        for k in range(ta.size):
            # candidate matches: every stored b sample in the same interval, and
            # the interpolated b state at the same time
            cand = np.maximum(np.abs(tb - ta[k]), np.linalg.norm(xb - xa[k], axis=1))
            best = float(cand.min())
            if tb[0] <= ta[k] <= tb[-1]:
                best = min(best, float(np.linalg.norm(_interp(tb, xb, ta[k]) - xa[k])))
            worst = max(worst, best)
    return worst


def closeness(a: HybridArc, b: HybridArc, T: float, J: int, cols=None) -> float:
    """Smallest eps (up to sampling) for which the arcs are (T, J, eps)-close.

    Each sample of one arc must have a sample of the other with the same jump
    index, time within eps and state within eps (Euclidean); ``b`` is linearly
    interpolated within its flow intervals. ``cols`` restricts the compared
    state components.
    """
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("closeness needs nonempty arcs")
    if cols is None:
        cols = slice(None)
    return max(_directed_gap(a, b, T, J, cols), _directed_gap(b, a, T, J, cols))
