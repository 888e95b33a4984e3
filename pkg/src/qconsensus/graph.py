"""Undirected communication graphs and the Laplacian quantities the protocols depend on."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CONNECTIVITY_TOL = 1e-8
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class GraphError(ValueError):
    """Invalid graph description or a graph that fails a structural requirement."""


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to converge."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    n_agents: int
    edges: tuple[tuple[int, int], ...]  # 1-based, each stored as (min, max)
    adjacency: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @property
    def d_star(self) -> int:
        return int(self.degrees.max()) if self.n_agents else 0

    def neighbors(self, i: int) -> list[int]:
        """0-based neighbor indices of 0-based agent ``i``."""
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    """Build a 0/1 undirected graph from 1-based edge pairs."""
    if int(n) != n or n < 1:
        raise GraphError(f"number of agents must be a positive integer, got {n!r}")
    n = int(n)
    seen: set[tuple[int, int]] = set()
    ordered: list[tuple[int, int]] = []
    for e in edges:
        if len(e) != 2:
            raise GraphError(f"edge {tuple(e)!r} is not a pair")
        i, j = int(e[0]), int(e[1])
        if i != e[0] or j != e[1]:
            raise GraphError(f"edge {tuple(e)!r} has non-integer endpoints")
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"edge ({i}, {j}) has an index outside [1, {n}]")
        if i == j:
            raise GraphError(f"edge ({i}, {j}) is a self-loop")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GraphError(f"edge ({i}, {j}) is a duplicate")
        seen.add(key)
        ordered.append(key)

    adj = np.zeros((n, n), dtype=np.int64)
    for i, j in ordered:
        adj[i - 1, j - 1] = adj[j - 1, i - 1] = 1
    deg = adj.sum(axis=1)
    lap = np.diag(deg) - adj
    return Graph(n, tuple(ordered), _frozen(adj), _frozen(lap.astype(float)), _frozen(deg))


def star_graph(n: int, center: int = 1) -> Graph:
    return build_graph(n, [(center, j) for j in range(1, n + 1) if j != center])


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 agents")
    return build_graph(n, [(i, i % n + 1) for i in range(1, n + 1)])


def path_graph(n: int) -> Graph:
    return build_graph(n, [(i, i + 1) for i in range(1, n)])


def complete_graph(n: int) -> Graph:
    return build_graph(n, [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3) -> Graph:
    """Random spanning tree plus independent extra edges; always connected."""
    order = rng.permutation(n) + 1
    edges = set()
    for pos in range(1, n):
        parent = order[rng.integers(0, pos)]
        a, b = int(order[pos]), int(parent)
        edges.add((min(a, b), max(a, b)))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return build_graph(n, sorted(edges))


PRESETS = {
    "star": star_graph,
    "cycle": cycle_graph,
    "path": path_graph,
    "complete": complete_graph,
}


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` sorted ascending, eigenvectors as columns.
    Stops once the Frobenius norm of the off-diagonal part falls below ``tol``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # rotation angle below machine precision: t ~ apq / diff
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def lambda2(self) -> float:
        if len(self.eigenvalues) < 2:
            raise GraphError("a single agent has no second Laplacian eigenvalue")
        return float(self.eigenvalues[1])

    @property
    def lambdaN(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def connected(self) -> bool:
        return len(self.eigenvalues) >= 2 and self.eigenvalues[1] > CONNECTIVITY_TOL


def spectrum(g: Graph) -> Spectrum:
    w, v = jacobi_eigh(g.laplacian)
    # the Laplacian is PSD; clip the tiny negative round-off on the zero eigenvalue
    w = np.where(np.abs(w) < 1e-13, 0.0, w)
    return Spectrum(_frozen(w), _frozen(v))


def bfs_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.neighbors(i):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.n_agents


def is_connected(g: Graph, spec: Spectrum | None = None) -> bool:
    """Spectral connectivity test, cross-checked against a breadth-first search."""
    spec = spec if spec is not None else spectrum(g)
    spectral = spec.connected if g.n_agents > 1 else True
    combinatorial = bfs_connected(g)
    if spectral != combinatorial:
        raise NumericalError(
            f"connectivity disagreement: lambda2={spec.eigenvalues[1] if g.n_agents > 1 else None}, "
            f"bfs={combinatorial}"
        )
    return spectral


def rho_h(spec: Spectrum, c: float, T: float) -> float:
    """Contraction factor max_{i>=2} |1 - c T lambda_i| of the consensus update."""
    if not spec.connected:
        raise GraphError("graph not connected")
    return float(np.max(np.abs(1.0 - c * T * spec.eigenvalues[1:])))
