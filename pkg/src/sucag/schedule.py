"""Agent activation processes and staleness bookkeeping."""

from __future__ import annotations

import csv
from typing import Optional, TextIO

import numpy as np

from .graph import Graph, is_connected, random_walk_step

KINDS = ("iid_uniform", "cyclic", "random_walk", "star_coordinator")


class ActivationProcess:
    """Source of the agent sequence ``i_0, i_1, ...``.

    ``random_walk`` starts at a uniformly drawn node and then hops to a
    uniform neighbour each call. ``star_coordinator`` treats node 0 of a
    star as the hub: agents are the leaves ``1..n-1``, drawn i.i.d.
    """

    def __init__(self, kind: str, n: int, seed: Optional[int] = None, graph: Optional[Graph] = None,
                 rng: Optional[np.random.Generator] = None):
        if kind not in KINDS:
            raise ValueError(f"unknown activation kind {kind!r}; expected one of {KINDS}")
        if n < 1:
            raise ValueError("n must be >= 1")
        if kind == "random_walk":
            if graph is None or graph.n != n:
                raise ValueError("random_walk needs a graph with n nodes")
            if not is_connected(graph):
                raise ValueError("random_walk needs a connected graph")
        if kind == "star_coordinator" and n < 2:
            raise ValueError("star_coordinator needs at least one leaf")
        self.kind = kind
        self.n = n
        self.graph = graph
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.current: Optional[int] = None
        self.k = 0

    def next_agent(self) -> int:
        kind = self.kind
        if kind == "cyclic":
            i = self.k % self.n
        elif kind == "iid_uniform":
            i = int(self.rng.integers(self.n))
        elif kind == "star_coordinator":
            i = 1 + int(self.rng.integers(self.n - 1))
        elif self.current is None:
            i = int(self.rng.integers(self.n))
        else:
            i = random_walk_step(self.graph, self.current, self.rng)
        self.current = i
        self.k += 1
        return i

    def take(self, K: int) -> np.ndarray:
        """The next ``K`` agents as an integer array."""
        if self.kind == "cyclic":
            out = (self.k + np.arange(K)) % self.n
            self.k += K
            if K:
                self.current = int(out[-1])
            return out
        return np.fromiter((self.next_agent() for _ in range(K)), dtype=np.int64, count=K)


class DelayTracker:
    """Tracks last-access times and the realised staleness ``m_k``.

    Unvisited agents carry ``tau = -1`` so their staleness at iteration
    ``k`` is ``k + 1``.
    """

    def __init__(self, n: int):
        self.tau = np.full(n, -1, dtype=np.int64)
        self.m_series: list[int] = []
        self.last_k: Optional[int] = None

    def record(self, k: int, i: int):
        """Register activation of ``i`` at iteration ``k``.

        Returns ``(m_k, delay)`` where ``m_k = max_j (k - tau_j)`` over the
        access times before this call and ``delay = k - tau_i``.
        """
        if self.last_k is not None and k <= self.last_k:
            raise ValueError(f"iterations must be strictly increasing ({k} after {self.last_k})")
        m_k = int(k - self.tau.min())
        delay = int(k - self.tau[i])
        self.tau[i] = k
        self.last_k = k
        self.m_series.append(m_k)
        return m_k, delay


def record_and_delays(tracker: DelayTracker, k: int, i_k: int):
    return tracker.record(k, i_k)


def delay_trace(agents) -> tuple[np.ndarray, np.ndarray]:
    """Per-iteration ``(delay, m_k)`` for an activation sequence."""
    agents = np.asarray(agents)
    n = int(agents.max()) + 1 if agents.size else 0
    tracker = DelayTracker(n)
    delays = np.empty(agents.size, dtype=np.int64)
    m = np.empty(agents.size, dtype=np.int64)
    for k, i in enumerate(agents.tolist()):
        m[k], delays[k] = tracker.record(k, i)
    return delays, m


def return_gaps(agents, n: int) -> list[np.ndarray]:
    """Gaps between successive visits of every node, one array per node."""
    agents = np.asarray(agents)
    out = []
    for i in range(n):
        visits = np.flatnonzero(agents == i)
        out.append(np.diff(visits))
    return out


def staleness_tail(gaps: np.ndarray, xs) -> np.ndarray:
    """Empirical ``P(k - tau_i^{k-1} > x)`` over iterations between visits.

    A gap ``g`` between two visits of node ``i`` contributes the
    staleness values ``1..g`` (one per iteration in that excursion).
    """
    gaps = np.asarray(gaps, dtype=np.int64)
    xs = np.asarray(xs)
    total = gaps.sum()
    if total == 0:
        return np.zeros(xs.shape)
    counts = np.bincount(gaps)
    g = np.arange(counts.size)
    # sum over gaps of max(0, g - x), for every x
    return np.array([np.sum(counts * np.maximum(0, g - x)) for x in xs.ravel()]).reshape(xs.shape) / total


def fit_delay_envelope(m_series) -> float:
    """Smallest ``c0 >= 0`` with ``4 log m_k <= c0 + log k`` for all ``k >= 1``.

    ``m_series[k]`` is the staleness entering iteration ``k``.
    """
    m = np.asarray(m_series, dtype=float)
    k = np.arange(m.size)
    sel = k >= 1
    if not np.any(sel):
        return 0.0
    return float(max(0.0, np.max(4.0 * np.log(m[sel]) - np.log(k[sel]))))


def write_activation_csv(agents, fh: TextIO) -> None:
    delays, m = delay_trace(agents)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "agent", "delay", "m_k"])
    for k, (i, dl, mk) in enumerate(zip(np.asarray(agents).tolist(), delays.tolist(), m.tolist())):
        w.writerow([k, i, dl, mk])
