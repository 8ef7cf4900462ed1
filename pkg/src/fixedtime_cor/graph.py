"""Leader-rooted directed communication graphs and the matrices H and K."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConstructionFailed, DimensionMismatch, NotSpanningTree
from .numerics import solve_linear, symmetric_eigen_range

TOL_PSD = 1e-9


@dataclass(frozen=True)
class DirectedGraph:
    """Weighted digraph over node 0 (the exosystem) and agents ``1..N``.

    ``weights[i, j] > 0`` means node ``i`` receives information from node
    ``j``.  Row 0 stays zero: the exosystem listens to nobody.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise DimensionMismatch(f"weights must be a square matrix, got {w.shape}")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("self-loops are not allowed")
        if np.any(w[0] != 0):
            raise ValueError("node 0 (exosystem) cannot receive information")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n_agents: int, edges: Iterable[Mapping | tuple]) -> "DirectedGraph":
        """Build from ``(from, to, weight)`` tuples or ``{from, to, weight}`` dicts."""
        w = np.zeros((n_agents + 1, n_agents + 1))
        for edge in edges:
            if isinstance(edge, Mapping):
                src, dst, wt = edge["from"], edge["to"], edge.get("weight", 1.0)
            else:
                src, dst, *rest = edge
                wt = rest[0] if rest else 1.0
            w[dst, src] = wt
        return cls(w)

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0] - 1

    def edges(self) -> list[tuple[int, int, float]]:
        rows, cols = np.nonzero(self.weights)
        return [(int(j), int(i), float(self.weights[i, j])) for i, j in zip(rows, cols)]


@dataclass(frozen=True)
class CouplingMatrix:
    h: np.ndarray

    @property
    def n(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class GainMatrixK:
    k: np.ndarray
    lambda_min_slack: float

    @property
    def k_max(self) -> float:
        return float(np.max(self.k))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.k)


def build_h_matrix(graph: DirectedGraph) -> CouplingMatrix:
    """``h_ii = Σ_j a_ij + a_i0`` and ``h_ij = -a_ij`` over the agents."""
    a = graph.weights
    n = graph.n_agents
    h = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            h[i - 1, j - 1] = -a[i, j]
        h[i - 1, i - 1] = np.sum(a[i, 1:]) + a[i, 0]
    return CouplingMatrix(h)


def graph_from_h(h: CouplingMatrix) -> DirectedGraph:
    """Recover the adjacency: off-diagonals give ``a_ij``, row sums give ``a_i0``."""
    n = h.n
    w = np.zeros((n + 1, n + 1))
    w[1:, 1:] = -h.h
    np.fill_diagonal(w, 0.0)
    w[1:, 0] = np.sum(h.h, axis=1)
    w[np.abs(w) < 1e-15] = 0.0
    return DirectedGraph(w)


def has_spanning_tree_from_root(graph: DirectedGraph) -> bool:
    """Breadth-first reachability from node 0 along edges ``j -> i`` with ``a_ij > 0``."""
    a = graph.weights
    seen = {0}
    queue = deque([0])
    while queue:
        j = queue.popleft()
        for i in np.nonzero(a[:, j] > 0)[0]:
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return len(seen) == graph.node_count


def verify_k_condition(h: CouplingMatrix, k) -> float:
    """``λ_min(HᵀK + KH − 2I)``; nonnegative (within tolerance) means K is admissible."""
    k = np.asarray(k, dtype=float).reshape(-1)
    if k.size != h.n:
        raise DimensionMismatch(f"K has {k.size} entries, H is {h.n}x{h.n}")
    kk = np.diag(k)
    slack = h.h.T @ kk + kk @ h.h - 2.0 * np.eye(h.n)
    return symmetric_eigen_range(slack)[0]


def compute_gain_matrix_k(h: CouplingMatrix, override=None) -> GainMatrixK:
    """Construct a diagonal K with ``HᵀK + KH − 2I ⪰ 0``.

    With ``Hp = 1`` and ``Hᵀq = 1`` (both positive for a nonsingular
    M-matrix), ``K₀ = diag(q/p)`` makes ``HᵀK₀ + K₀H`` positive definite;
    rescaling by ``2/λ_min`` meets the slack exactly.  An ``override`` is
    checked and returned unchanged when admissible.
    """
    if not has_spanning_tree_from_root(graph_from_h(h)):
        raise NotSpanningTree("node 0 does not reach every agent")
    if override is not None:
        k = np.asarray(override, dtype=float).reshape(-1)
        if k.size == 1:
            k = np.full(h.n, float(k[0]))
        if np.any(k <= 0):
            raise ConstructionFailed("K entries must be positive")
        slack = verify_k_condition(h, k)
        if slack < -TOL_PSD:
            raise ConstructionFailed(f"supplied K violates the slack condition (λ_min = {slack:.6g})")
        return GainMatrixK(k, slack)
    ones = np.ones(h.n)
    p = solve_linear(h.h, ones)
    q = solve_linear(h.h.T, ones)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ConstructionFailed("H^{-1}1 or H^{-T}1 is not elementwise positive")
    k0 = q / p
    lam0 = symmetric_eigen_range(h.h.T @ np.diag(k0) + np.diag(k0) @ h.h)[0]
    if lam0 <= TOL_PSD:
        raise ConstructionFailed(f"HᵀK₀ + K₀H not positive definite (λ_min = {lam0:.3e})")
    k = (2.0 / lam0) * k0
    return GainMatrixK(k, verify_k_condition(h, k))
