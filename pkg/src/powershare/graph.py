"""Weighted undirected communication graph of the cyber layer.

Vertices are labelled 1..n at every external boundary (scenario files, CLI
output, public ``build_graph`` arguments) and 0..n-1 internally.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from powershare._ordered import ordered_matvec
from powershare.errors import GraphError


@dataclass(frozen=True)
class CommGraph:
    """Symmetric, nonnegative, zero-diagonal weight matrix ``a_ij``."""

    n: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if self.n < 1 or w.shape != (self.n, self.n):
            raise GraphError(f"weights must be {self.n}x{self.n}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise GraphError("weights must be finite and nonnegative")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loop")
        if not np.array_equal(w, w.T):
            raise GraphError("weights not symmetric")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def neighbors(self, i: int) -> list[int]:
        """0-based neighbor indices of 0-based vertex ``i``, ascending."""
        return [int(j) for j in np.flatnonzero(self.weights[i] > 0)]

    def edges(self) -> list[tuple[int, int, float]]:
        """Edges as 1-based ``(i, j, w)`` with ``i < j``."""
        iu, ju = np.nonzero(np.triu(self.weights, 1))
        return [(int(i) + 1, int(j) + 1, float(self.weights[i, j])) for i, j in zip(iu, ju)]

    @property
    def edge_pairs(self) -> set[tuple[int, int]]:
        """Directed 0-based pairs along which signals may flow (both directions)."""
        iu, ju = np.nonzero(self.weights > 0)
        return {(int(i), int(j)) for i, j in zip(iu, ju)}


def build_graph(n: int, edges: Iterable[Sequence]) -> CommGraph:
    """Build a graph from 1-based ``(i, j, w)`` triples."""
    if n < 1:
        raise GraphError("bad index: graph needs at least one agent")
    w = np.zeros((n, n))
    for edge in edges:
        i, j, weight = edge
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"bad index: edge ({i}, {j}) with n={n}")
        if i == j:
            raise GraphError(f"self-loop at vertex {i}")
        if not weight > 0:
            raise GraphError(f"edge ({i}, {j}) weight must be positive, got {weight}")
        if w[i - 1, j - 1] != 0:
            raise GraphError(f"duplicate edge ({i}, {j})")
        w[i - 1, j - 1] = w[j - 1, i - 1] = float(weight)
    return CommGraph(n, w)


def degrees(g: CommGraph) -> np.ndarray:
    """Weighted degrees summed in ascending neighbor order (see ``_ordered``)."""
    return ordered_matvec(g.weights, np.ones(g.n))


def degree_matrix(g: CommGraph) -> np.ndarray:
    return np.diag(degrees(g))


def laplacian(g: CommGraph) -> np.ndarray:
    """``L = D - A``; symmetric with zero row sums."""
    return degree_matrix(g) - g.weights


def is_connected(g: CommGraph) -> bool:
    """Breadth-first reachability from vertex 0 over positive-weight edges."""
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in g.neighbors(i):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == g.n


def graph_from_laplacian(L: np.ndarray) -> CommGraph:
    """Recover the weight matrix from a Laplacian (off-diagonal negation)."""
    L = np.asarray(L, dtype=float)
    A = -L.copy()
    np.fill_diagonal(A, 0.0)
    return CommGraph(L.shape[0], A)


def random_connected_graph(
    rng: np.random.Generator,
    n: int,
    density: float | None = None,
    weight_range: tuple[float, float] = (0.5, 5.0),
) -> CommGraph:
    """Random connected graph: a random spanning tree plus Bernoulli extra edges."""
    if density is None:
        density = rng.uniform(0.1, 0.9)
    lo, hi = weight_range
    w = np.zeros((n, n))
    order = rng.permutation(n)
    for pos in range(1, n):
        i, j = order[pos], order[rng.integers(pos)]
        w[i, j] = w[j, i] = rng.uniform(lo, hi)
    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] == 0 and rng.random() < density:
                w[i, j] = w[j, i] = rng.uniform(lo, hi)
    return CommGraph(n, w)
