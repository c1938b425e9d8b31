"""Undirected communication graphs and the random-walk token step."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np

KINDS = ("erdos_renyi", "ring", "star", "complete")


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph on nodes ``0..n-1``.

    ``adjacency[i]`` is the sorted tuple of neighbours of node ``i``.
    """

    n: int
    adjacency: tuple

    def __post_init__(self):
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency must have one entry per node")
        for i, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError(f"neighbour list of node {i} is not sorted/unique")
            for j in nbrs:
                if not 0 <= j < self.n:
                    raise ValueError(f"neighbour {j} of node {i} out of range")
                if j == i:
                    raise ValueError(f"self-loop at node {i}")
                if i not in self.adjacency[j]:
                    raise ValueError(f"edge ({i}, {j}) is not symmetric")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple]) -> "Graph":
        nbrs = [set() for _ in range(n)]
        for i, j in edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs))

    def edges(self) -> list:
        """Edge list as sorted ``(i, j)`` pairs with ``i < j``."""
        return [(i, j) for i in range(self.n) for j in self.adjacency[i] if i < j]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def write_edgelist(self, fh: TextIO) -> None:
        for i, j in self.edges():
            fh.write(f"{i} {j}\n")


def er_connectivity_probability(n: int) -> float:
    """Edge probability ``2 log(n) / n`` used for the logistic experiment."""
    return min(1.0, 2.0 * math.log(n) / n)


def generate_topology(kind: str, n: int, p: Optional[float] = None, seed: int = 0) -> Graph:
    """Build a graph of the requested kind.

    Erdos-Renyi sampling draws one uniform per pair ``i < j`` in
    lexicographic order from ``numpy.random.default_rng(seed)``, so the
    result is a pure function of ``(n, p, seed)``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    if kind == "erdos_renyi":
        if p is None or not (0.0 < p <= 1.0):
            raise ValueError(f"erdos_renyi needs p in (0, 1], got {p!r}")
    elif p is not None:
        raise ValueError(f"p is only accepted for erdos_renyi, not {kind}")

    if kind == "ring":
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "star":
        edges = [(0, j) for j in range(1, n)]
    elif kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    else:
        rng = np.random.default_rng(seed)
        iu, ju = np.triu_indices(n, k=1)  # row-major, i.e. lexicographic in (i, j)
        keep = rng.random(iu.size) < p
        edges = zip(iu[keep].tolist(), ju[keep].tolist())
    return Graph.from_edges(n, edges)


def is_connected(g: Graph) -> bool:
    """Breadth-first search from node 0 reaches every node."""
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == g.n


def random_walk_step(g: Graph, current: int, rng: np.random.Generator) -> int:
    """Move the token to a uniformly chosen neighbour (one rng draw)."""
    if not 0 <= current < g.n:
        raise IndexError(f"node {current} out of range for n={g.n}")
    nbrs = g.adjacency[current]
    if not nbrs:
        raise ValueError(f"node {current} is isolated")
    return nbrs[int(rng.integers(len(nbrs)))]


def connected_topology(kind: str, n: int, p: Optional[float], seed: int, max_tries: int = 1000):
    """Retry ``seed, seed+1, ...`` until the sampled graph is connected.

    Returns ``(graph, seed_used)``.
    """
    for t in range(max_tries):
        g = generate_topology(kind, n, p, seed + t)
        if is_connected(g):
            return g, seed + t
        if kind != "erdos_renyi":
            break
    raise RuntimeError(f"no connected {kind} graph found from seed {seed}")
