"""Directed acyclic graphs: random generators, acyclicity checks, support masks."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class DagGraph:
    """A DAG on nodes ``0..d-1``; ``edges`` holds ``(parent, child)`` pairs."""

    d: int
    edges: frozenset
    topo_order: tuple

    def __post_init__(self):
        pos = {v: i for i, v in enumerate(self.topo_order)}
        if sorted(pos) != list(range(self.d)):
            raise ParameterError("topo_order must be a permutation of range(d)")
        for k, j in self.edges:
            if k == j:
                raise ParameterError(f"self-loop on node {k}")
            if pos[k] >= pos[j]:
                raise ParameterError(f"edge {k}->{j} violates the topological order")

    @classmethod
    def from_edges(cls, d: int, edges) -> "DagGraph":
        edges = frozenset((int(k), int(j)) for k, j in edges)
        order = topological_order(d, edges)
        if order is None:
            raise ParameterError("edge set contains a directed cycle")
        return cls(d, edges, tuple(order))

    @classmethod
    def from_adjacency(cls, adj, tol: float = 0.0) -> "DagGraph":
        adj = np.asarray(adj)
        k, j = np.nonzero(np.abs(adj) > tol)
        return cls.from_edges(adj.shape[0], zip(k.tolist(), j.tolist()))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def parents(self, j: int) -> list:
        return sorted(k for k, c in self.edges if c == j)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.d, self.d), dtype=int)
        for k, j in self.edges:
            a[k, j] = 1
        return a

    def sorted_edges(self) -> list:
        return sorted(self.edges)


@dataclass(frozen=True)
class SupportMasks:
    m0: np.ndarray
    m1: np.ndarray
    rho: float

    @property
    def overlap(self) -> float:
        union = np.logical_or(self.m0, self.m1).sum()
        return float(np.logical_and(self.m0, self.m1).sum() / union) if union else 1.0


def topological_order(d: int, edges) -> list | None:
    """Kahn's algorithm; returns None when the edges contain a cycle."""
    indeg = [0] * d
    children = [[] for _ in range(d)]
    for k, j in edges:
        children[k].append(j)
        indeg[j] += 1
    queue = deque(v for v in range(d) if indeg[v] == 0)
    order = []
    while queue:
        v = queue.popleft()
        order.append(v)
        for c in sorted(children[v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return order if len(order) == d else None


def is_acyclic(adj, tol: float = 0.0) -> bool:
    """True iff the support ``|adj| > tol`` has a topological order."""
    adj = np.asarray(adj, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ParameterError(f"adjacency must be square, got shape {adj.shape}")
    k, j = np.nonzero(np.abs(adj) > tol)
    if np.any(k == j):
        return False
    return topological_order(adj.shape[0], zip(k.tolist(), j.tolist())) is not None


def generate_er(d: int, p: float, seed=None) -> DagGraph:
    """Erdos-Renyi DAG: each pair consistent with a random node order kept w.p. ``p``."""
    if d < 2:
        raise ParameterError(f"need d >= 2, got {d}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(d)
    iu, ju = np.triu_indices(d, k=1)
    keep = rng.random(iu.size) < p
    edges = zip(perm[iu[keep]].tolist(), perm[ju[keep]].tolist())
    return DagGraph(d, frozenset(edges), tuple(perm.tolist()))


def generate_ba(d: int, m: int, seed=None) -> DagGraph:
    """Barabasi-Albert DAG grown by preferential attachment.

    Node ``t`` attaches to ``min(m, t)`` distinct earlier nodes drawn with
    probability proportional to ``degree + 1``. Edges point from the older
    node to the newer one, then labels are randomly permuted.
    """
    if m < 1:
        raise ParameterError(f"need m >= 1, got {m}")
    if d <= m:
        raise ParameterError(f"need d > m, got d={d}, m={m}")
    rng = np.random.default_rng(seed)
    degree = np.zeros(d)
    grown = []
    for t in range(1, d):
        k = min(m, t)
        weights = degree[:t] + 1.0
        targets = rng.choice(t, size=k, replace=False, p=weights / weights.sum())
        for s in targets.tolist():
            grown.append((s, t))
            degree[s] += 1
        degree[t] += k
    perm = rng.permutation(d)
    edges = frozenset((int(perm[s]), int(perm[t])) for s, t in grown)
    return DagGraph(d, edges, tuple(perm.tolist()))


def split_support(g: DagGraph, rho: float, seed=None) -> SupportMasks:
    """Split the edges of ``g`` into overlapping zero/count supports.

    ``ceil(rho * |E|)`` randomly chosen edges go to both masks; the rest
    alternate between ``m0`` only and ``m1`` only, starting with ``m0``.
    """
    if not 0.0 <= rho <= 1.0:
        raise ParameterError(f"rho must lie in [0, 1], got {rho}")
    edges = g.sorted_edges()
    if not edges:
        raise ParameterError("cannot split an empty edge set")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(edges))
    n_shared = math.ceil(round(rho * len(edges), 9))
    m0 = np.zeros((g.d, g.d), dtype=bool)
    m1 = np.zeros((g.d, g.d), dtype=bool)
    for rank, idx in enumerate(order.tolist()):
        k, j = edges[idx]
        if rank < n_shared:
            m0[k, j] = m1[k, j] = True
        elif (rank - n_shared) % 2 == 0:
            m0[k, j] = True
        else:
            m1[k, j] = True
    return SupportMasks(m0, m1, float(rho))


def write_edges(g: DagGraph, path) -> None:
    lines = [f"# d={g.d}"] + [f"{k}\t{j}" for k, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edges(path) -> DagGraph:
    d = None
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("d="):
                d = int(line[1:].strip()[2:])
            continue
        k, j = line.split("\t")
        edges.append((int(k), int(j)))
    if d is None:
        raise ParameterError(f"{path}: missing '# d=<n>' header")
    return DagGraph.from_edges(d, edges)
