"""Graph, permutation and doubly stochastic types shared by the whole package.

Conventions
-----------
A permutation is stored as an index map ``map`` of length ``n``.  Vertex ``k``
of the unipartite graph ``A`` corresponds to vertex ``map[k]`` of the
bipartite network.  Its matrix form ``P`` has ``P[k, map[k]] = 1`` so that

    permute_graph(A, P) == P.T @ A @ P,  i.e.  W[map[k], map[l]] = A[k, l].

A doubly stochastic matrix relaxes ``P`` with the same orientation (rows index
``A``, columns index the bipartite side).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvalidParameterError, SeedError

_NUM_SLACK = 1e-10
_SUM_TOL = 1e-8


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class UnipartiteGraph:
    """Symmetric adjacency matrix with zero diagonal and entries in [0, 1]."""

    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionError(f"adjacency must be square, got shape {adj.shape}")
        if not np.all(np.isfinite(adj)):
            raise InvalidParameterError("adjacency has non-finite entries")
        if not np.array_equal(adj, adj.T):
            raise InvalidParameterError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise InvalidParameterError("adjacency must have a zero diagonal (no self-loops)")
        if adj.min(initial=0.0) < 0 or adj.max(initial=0.0) > 1:
            raise InvalidParameterError("edge weights must lie in [0, 1]")
        object.__setattr__(self, "adj", _frozen(adj))

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.adj == 0) | (self.adj == 1)))

    def require_binary(self) -> "UnipartiteGraph":
        if not self.is_binary:
            raise InvalidParameterError("operation requires a binary adjacency matrix")
        return self

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adj, 1)))

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1)

    def edges(self) -> list[tuple[int, int, float]]:
        """Upper-triangle edges as ``(i, j, weight)`` with ``i < j``."""
        rows, cols = np.nonzero(np.triu(self.adj, 1))
        return [(int(i), int(j), float(self.adj[i, j])) for i, j in zip(rows, cols)]

    def __eq__(self, other):
        if not isinstance(other, UnipartiteGraph):
            return NotImplemented
        return np.array_equal(self.adj, other.adj)

    def __repr__(self):
        return f"UnipartiteGraph(n={self.n}, edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``range(n)`` stored as an index map."""

    map: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.map)
        if perm.ndim != 1:
            raise DimensionError("permutation map must be one-dimensional")
        if perm.size and not np.issubdtype(perm.dtype, np.integer):
            if not np.all(perm == np.round(perm)):
                raise InvalidParameterError("permutation map must hold integers")
        perm = perm.astype(np.int64)
        n = perm.size
        if n and (perm.min() < 0 or perm.max() >= n or np.unique(perm).size != n):
            raise InvalidParameterError(f"not a bijection on range({n}): {perm.tolist()}")
        object.__setattr__(self, "map", _frozen(perm))

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Permutation":
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError("permutation matrix must be square")
        if not (np.all((matrix == 0) | (matrix == 1))
                and np.all(matrix.sum(0) == 1) and np.all(matrix.sum(1) == 1)):
            raise InvalidParameterError("not a permutation matrix")
        return cls(np.argmax(matrix, axis=1))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator | int | None = None) -> "Permutation":
        rng = np.random.default_rng(rng)
        return cls(rng.permutation(n))

    @property
    def n(self) -> int:
        return self.map.size

    def matrix(self) -> np.ndarray:
        P = np.zeros((self.n, self.n))
        P[np.arange(self.n), self.map] = 1.0
        return P

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.map)
        inv[self.map] = np.arange(self.n)
        return Permutation(inv)

    def then(self, other: "Permutation") -> "Permutation":
        """Apply ``self`` first, then ``other``; see :func:`compose`."""
        return compose(self, other)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.map, np.arange(self.n)))

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.map)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.as_tuple())

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Permutation({self.map.tolist()})"


@dataclass(frozen=True, eq=False)
class DoublyStochastic:
    """Point of the Birkhoff polytope (rows and columns sum to one)."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DimensionError(f"doubly stochastic matrix must be square, got {d.shape}")
        if d.size:
            if d.min() < -_NUM_SLACK:
                raise InvalidParameterError(f"negative entry {d.min():.3g}")
            if (np.abs(d.sum(0) - 1).max() > _SUM_TOL
                    or np.abs(d.sum(1) - 1).max() > _SUM_TOL):
                raise InvalidParameterError("row or column sums deviate from 1")
        object.__setattr__(self, "d", _frozen(d))

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @classmethod
    def from_permutation(cls, perm: Permutation) -> "DoublyStochastic":
        return cls(perm.matrix())


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Known correspondences ``(index in A, index in the bipartite side)``."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        a_side = [a for a, _ in pairs]
        b_side = [b for _, b in pairs]
        if len(set(a_side)) != len(a_side) or len(set(b_side)) != len(b_side):
            raise SeedError("seed pairs must not repeat an index on either side")
        if any(v < 0 for v in a_side + b_side):
            raise SeedError("seed indices must be non-negative")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def empty(cls) -> "SeedSet":
        return cls(())

    @classmethod
    def from_permutation(cls, perm: Permutation, vertices: Iterable[int]) -> "SeedSet":
        return cls(tuple((int(v), int(perm.map[v])) for v in vertices))

    @property
    def a_indices(self) -> np.ndarray:
        return np.array([a for a, _ in self.pairs], dtype=np.int64)

    @property
    def b_indices(self) -> np.ndarray:
        return np.array([b for _, b in self.pairs], dtype=np.int64)

    def check_size(self, n: int) -> None:
        if any(a >= n or b >= n for a, b in self.pairs):
            raise SeedError(f"seed index out of range for n={n}")

    def agrees_with(self, perm: Permutation) -> bool:
        return all(perm.map[a] == b for a, b in self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        if not isinstance(other, SeedSet):
            return NotImplemented
        return self.pairs == other.pairs


# ---------------------------------------------------------------------------
# generators and algebra
# ---------------------------------------------------------------------------

def chain_graph(n: int) -> UnipartiteGraph:
    """Path graph ``0 - 1 - ... - (n-1)``."""
    if n < 2:
        raise InvalidParameterError(f"chain graph needs n >= 2, got {n}")
    adj = np.zeros((n, n))
    idx = np.arange(n - 1)
    adj[idx, idx + 1] = adj[idx + 1, idx] = 1.0
    return UnipartiteGraph(adj)


def er_graph(n: int, p: float, seed=None) -> UnipartiteGraph:
    """Erdos-Renyi graph: every pair ``i < j`` is an edge independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameterError(f"edge probability must be in [0, 1], got {p}")
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, 1).astype(float)
    return UnipartiteGraph(upper + upper.T)


def _adj(graph) -> np.ndarray:
    return graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)


def _map(perm) -> np.ndarray:
    return perm.map if isinstance(perm, Permutation) else np.asarray(perm, dtype=np.int64)


def permute_adjacency(adj: np.ndarray, perm_map: np.ndarray) -> np.ndarray:
    """Array-level ``P.T @ adj @ P`` without materializing ``P``."""
    inv = np.empty_like(perm_map)
    inv[perm_map] = np.arange(perm_map.size)
    return adj[np.ix_(inv, inv)]


def permute_graph(graph: UnipartiteGraph, perm: Permutation) -> UnipartiteGraph:
    adj, perm_map = _adj(graph), _map(perm)
    if adj.shape[0] != perm_map.size:
        raise DimensionError(f"graph has {adj.shape[0]} vertices, permutation has {perm_map.size}")
    return UnipartiteGraph(permute_adjacency(adj, perm_map))


def compose(first: Permutation, second: Permutation) -> Permutation:
    """Permutation equal to applying ``first`` and then ``second``.

    ``permute_graph(permute_graph(A, first), second) == permute_graph(A, compose(first, second))``.
    """
    if first.n != second.n:
        raise DimensionError("cannot compose permutations of different sizes")
    return Permutation(second.map[first.map])


def direct_sum(r: Permutation, q: Permutation) -> Permutation:
    """Block permutation acting as ``r`` on the first indices and ``q`` (shifted) on the rest."""
    return Permutation(np.concatenate([r.map, q.map + r.n]))


def barycenter(n: int) -> DoublyStochastic:
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    return DoublyStochastic(np.full((n, n), 1.0 / n))


def support_of(adj: np.ndarray) -> np.ndarray:
    """Boolean off-diagonal support of a (possibly weighted) adjacency matrix."""
    mask = np.asarray(adj) != 0
    np.fill_diagonal(mask, False)
    return mask


def all_permutations(n: int) -> Sequence[tuple[int, ...]]:
    """All index maps of size ``n`` in lexicographic order."""
    from itertools import permutations

    return list(permutations(range(n)))
