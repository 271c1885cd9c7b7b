"""Communication graphs, Laplacian spectra and estimate-selection matrices."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GraphError

EIG_TOL = 1e-10


@dataclass(frozen=True)
class Graph:
    """Undirected, connected, unweighted graph on nodes ``0..n-1``."""

    n: int
    edges: frozenset

    def __init__(self, n: int, edges):
        if n < 1:
            raise GraphError("graph needs at least one node")
        norm = set()
        for e in edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", frozenset(norm))
        if not self._connected():
            raise GraphError("graph is not connected")

    @classmethod
    def from_one_based(cls, n: int, edges) -> "Graph":
        return cls(n, [(int(i) - 1, int(j) - 1) for i, j in edges])

    def _connected(self) -> bool:
        seen, stack = {0}, [0]
        adj = self.neighbors
        while stack:
            for k in adj[stack.pop()]:
                if k not in seen:
                    seen.add(k)
                    stack.append(k)
        return len(seen) == self.n

    @cached_property
    def neighbors(self) -> tuple:
        adj = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def edge_list_one_based(self) -> list:
        return [[i + 1, j + 1] for i, j in sorted(self.edges)]


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def ring_graph(n: int) -> Graph:
    if n < 3:
        return complete_graph(n)
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def erdos_renyi_graph(n: int, p: float, seed: int, max_tries: int = 10_000) -> Graph:
    """G(n, p) resampled from the same seeded stream until connected."""
    if not 0 < p <= 1:
        raise GraphError("edge probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    for _ in range(max_tries):
        keep = rng.random(iu[0].size) < p
        try:
            return Graph(n, zip(iu[0][keep], iu[1][keep]))
        except GraphError:
            continue
    raise GraphError(f"no connected sample of G({n}, {p}) after {max_tries} draws")


def laplacian(g: Graph) -> np.ndarray:
    L = np.zeros((g.n, g.n))
    for i, j in g.edges:
        L[i, j] = L[j, i] = -1.0
    L[np.diag_indices(g.n)] = -L.sum(axis=1)
    return L


@dataclass(frozen=True)
class Spectrum:
    lambda2: float
    lambda_max: float

    @property
    def sigma_L(self) -> float:
        return self.lambda_max / self.lambda2


def spectrum_summary(g: Graph) -> Spectrum:
    ev = np.linalg.eigvalsh(laplacian(g))
    if g.n < 2 or ev[1] <= EIG_TOL:
        raise GraphError("graph has no positive algebraic connectivity")
    return Spectrum(lambda2=float(ev[1]), lambda_max=float(ev[-1]))


@dataclass(frozen=True)
class SelectionMatrices:
    n: int
    P_blocks: tuple
    Q_blocks: tuple
    P: np.ndarray
    Q: np.ndarray


def build_selection(n: int) -> SelectionMatrices:
    """Per-player selectors: P_i picks entry i, Q_i deletes entry i."""
    if n < 2:
        raise DomainError("selection matrices need n >= 2")
    eye = np.eye(n)
    P_blocks = tuple(eye[i:i + 1] for i in range(n))
    Q_blocks = tuple(np.delete(eye, i, axis=0) for i in range(n))
    P = np.zeros((n, n * n))
    Q = np.zeros((n * n - n, n * n))
    for i in range(n):
        P[i, i * n:(i + 1) * n] = P_blocks[i]
        Q[i * (n - 1):(i + 1) * (n - 1), i * n:(i + 1) * n] = Q_blocks[i]
    for M in (P, Q, *P_blocks, *Q_blocks):
        M.setflags(write=False)
    return SelectionMatrices(n, P_blocks, Q_blocks, P, Q)


def big_laplacian(g: Graph) -> np.ndarray:
    """Communication matrix L kron I_n acting on stacked per-player estimate vectors."""
    return np.kron(laplacian(g), np.eye(g.n))


def psi(q, q_hat, sel: SelectionMatrices) -> np.ndarray:
    """Stack each player's estimate vector, with its own true action in its own slot."""
    q = np.asarray(q, dtype=float)
    q_hat = np.asarray(q_hat, dtype=float)
    n = sel.n
    if q.shape != (n,) or q_hat.shape != (n * n - n,):
        raise DomainError(f"expected shapes ({n},) and ({n * n - n},), got {q.shape}, {q_hat.shape}")
    e = np.empty((n, n))
    off = ~np.eye(n, dtype=bool)
    e[off] = q_hat
    e[np.diag_indices(n)] = q
    return e.reshape(-1)
