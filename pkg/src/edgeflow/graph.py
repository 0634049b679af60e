"""Undirected communication graph and its oriented incidence matrix.

Agents are numbered 1..m in scenario files and in :func:`build_graph`; the
:class:`Graph` object stores 0-based indices throughout.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DuplicateEdge, NodeIndexOutOfRange, SelfLoop


@dataclass(frozen=True)
class Graph:
    m: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[frozenset[int], ...]

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edge_index(self, i: int, j: int) -> tuple[int, int]:
        """Return ``(k, sign)`` for the edge joining 0-based nodes ``i`` and ``j``.

        ``sign`` is +1 when the edge is listed as ``(i, j)`` and -1 when it is
        listed as ``(j, i)``.
        """
        for k, (a, b) in enumerate(self.edges):
            if (a, b) == (i, j):
                return k, 1
            if (a, b) == (j, i):
                return k, -1
        raise KeyError((i, j))


def build_graph(m: int, edge_list) -> Graph:
    """Build a graph from 1-based node pairs, keeping the listing order."""
    if m < 1:
        raise ValueError(f"agent count must be positive, got {m}")
    edges = []
    seen = set()
    nbrs = [set() for _ in range(m)]
    for pair in edge_list:
        i, j = (int(v) for v in pair)
        for v in (i, j):
            if not 1 <= v <= m:
                raise NodeIndexOutOfRange(f"node {v} outside 1..{m} in edge ({i}, {j})")
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        key = frozenset((i, j))
        if key in seen:
            raise DuplicateEdge(f"edge ({i}, {j}) listed more than once")
        seen.add(key)
        edges.append((i - 1, j - 1))
        nbrs[i - 1].add(j - 1)
        nbrs[j - 1].add(i - 1)
    return Graph(m=m, edges=tuple(edges), neighbors=tuple(frozenset(s) for s in nbrs))


def incidence_matrix(g: Graph) -> np.ndarray:
    """Oriented incidence matrix, +1 at the first-listed node of each edge."""
    H = np.zeros((g.edge_count, g.m))
    for k, (i, j) in enumerate(g.edges):
        H[k, i] = 1.0
        H[k, j] = -1.0
    return H


def connected_components(g: Graph) -> int:
    seen = [False] * g.m
    count = 0
    for start in range(g.m):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in g.neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
    return count


def is_connected(g: Graph) -> bool:
    return connected_components(g) == 1
