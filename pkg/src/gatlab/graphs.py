"""Directed graphs with explicit self-loops, and the star-graph builder.

An edge ``(i, j)`` means node ``j`` sends a message to node ``i``; the
neighbor set of ``i`` is therefore ``{j : (i, j) in edges}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CENTER = 0


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset[tuple[int, int]]
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one node, got n={self.n}")
        for i, j in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {(i, j)} out of range for n={self.n}")
        nbrs = tuple(
            tuple(sorted(j for (k, j) in self.edges if k == i)) for i in range(self.n)
        )
        object.__setattr__(self, "neighbors", nbrs)

    @classmethod
    def from_edges(cls, n: int, edges) -> Graph:
        return cls(n, frozenset((int(i), int(j)) for i, j in edges))

    @classmethod
    def from_adjacency(cls, adj) -> Graph:
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        return cls.from_edges(adj.shape[0], zip(*np.nonzero(adj)))

    def self_loop(self, i: int) -> bool:
        return (i, i) in self.edges

    def adjacency(self) -> np.ndarray:
        return adjacency(self)

    def mask(self, exclude_self: bool = False) -> np.ndarray:
        """Boolean (n, n) mask of attention domains: row i selects N_i."""
        m = self.adjacency().astype(bool)
        if exclude_self:
            np.fill_diagonal(m, False)
        return m


def adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.n, g.n), dtype=np.int64)
    for i, j in g.edges:
        A[i, j] = 1
    return A


def star_graph(n: int) -> Graph:
    """Star on ``n`` nodes: node 0 is the hub and carries a self-loop."""
    if n < 2:
        raise ValueError(f"star graph needs n >= 2, got {n}")
    edges = {(CENTER, CENTER)}
    for j in range(1, n):
        edges.add((CENTER, j))
        edges.add((j, CENTER))
    return Graph(n, frozenset(edges))
