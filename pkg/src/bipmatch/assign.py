"""Linear assignment, permutation projection and Frank-Wolfe QAP steps.

The QAP step maximizes ``f(D) = Tr(D^T A D M)`` over doubly stochastic ``D``.
For a permutation this is ``<P^T A P, M>``, the agreement between the permuted
unipartite graph and a weight matrix ``M`` on the bipartite side (``|Theta|``
in the matching algorithms, a collapsed graph in the baselines).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionError, DomainError, SeedError
from .graphs import DoublyStochastic, Permutation, SeedSet, UnipartiteGraph, barycenter

_TIE_RTOL = 1e-9


@njit(cache=True)
def _shortest_augmenting_path(cost):
    """Exact min-cost assignment (square) with dual potentials.

    Returns ``col4row, u, v`` with ``cost[i, j] - u[i] - v[j] >= 0`` and equality
    on every assigned pair.
    """
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    shortest = np.empty(n)
    path = np.full(n, -1, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    seen_row = np.zeros(n, dtype=np.bool_)
    seen_col = np.zeros(n, dtype=np.bool_)
    remaining = np.empty(n, dtype=np.int64)

    for cur_row in range(n):
        n_rem = n
        for j in range(n):
            remaining[j] = n - 1 - j
            shortest[j] = np.inf
            seen_col[j] = False
            seen_row[j] = False
            path[j] = -1
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            seen_row[i] = True
            index = -1
            lowest = np.inf
            for it in range(n_rem):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            if min_val == np.inf:
                return col4row, u, v  # unreachable for finite costs
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            seen_col[j] = True
            n_rem -= 1
            remaining[index] = remaining[n_rem]

        u[cur_row] += min_val
        for r in range(n):
            if seen_row[r] and r != cur_row:
                u[r] += min_val - shortest[col4row[r]]
        for c in range(n):
            if seen_col[c]:
                v[c] -= min_val - shortest[c]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break
    return col4row, u, v


@njit(cache=True)
def _lexicographic_in_tight_graph(tight, col4row):
    """Turn a perfect matching of the tight graph into its lexicographically smallest one.

    Rows are fixed in order; row ``i`` takes the smallest tight column for which
    the remaining rows can still be perfectly matched (checked by an
    alternating-path search restricted to unfixed rows and columns).
    """
    n = tight.shape[0]
    row4col = np.empty(n, dtype=np.int64)
    for r in range(n):
        row4col[col4row[r]] = r
    locked_col = np.zeros(n, dtype=np.bool_)
    parent_row = np.empty(n, dtype=np.int64)  # column -> row that reached it
    visited_col = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)

    for i in range(n):
        current = col4row[i]
        for j in range(n):
            if not tight[i, j] or locked_col[j]:
                continue
            if j == current:
                break
            # Try i -> j: row r = row4col[j] loses its column and must reach `current`.
            r = row4col[j]
            for c in range(n):
                visited_col[c] = False
                parent_row[c] = -1
            visited_col[j] = True
            head = 0
            tail = 0
            queue[tail] = r
            tail += 1
            found = False
            while head < tail and not found:
                row = queue[head]
                head += 1
                for c in range(n):
                    if tight[row, c] and not locked_col[c] and not visited_col[c]:
                        visited_col[c] = True
                        parent_row[c] = row
                        if c == current:
                            found = True
                            break
                        queue[tail] = row4col[c]
                        tail += 1
            if not found:
                continue
            # Flip the alternating path ending at `current`.
            c = current
            while True:
                row = parent_row[c]
                prev = col4row[row]
                col4row[row] = c
                row4col[c] = row
                if row == r:
                    break
                c = prev
            col4row[i] = j
            row4col[j] = i
            break
        locked_col[col4row[i]] = True
    return col4row


def _lap_min(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    shift = cost - cost.min()
    col4row, u, v = _shortest_augmenting_path(np.ascontiguousarray(shift))
    scale = max(1.0, float(np.abs(shift).max()))
    reduced = shift - u[:, None] - v[None, :]
    tight = reduced <= _TIE_RTOL * scale * max(1, n)
    # every assigned pair is tight by construction; guard against round-off
    tight[np.arange(n), col4row] = True
    return _lexicographic_in_tight_graph(tight, col4row.copy())


def lap_solve(cost, sense: str = "min") -> Permutation:
    """Exact linear assignment.

    Parameters
    ----------
    cost : (n, n) array
        Finite assignment costs (or profits when ``sense="max"``).
    sense : {"min", "max"}

    Returns
    -------
    Permutation
        ``map[i]`` is the column assigned to row ``i``.  Among optimal
        assignments, the lexicographically smallest map is returned; entries
        within a relative ``1e-9`` are treated as ties.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise DimensionError(f"cost must be square, got shape {cost.shape}")
    if np.isnan(cost).any():
        raise DomainError("cost matrix contains NaN")
    if not np.isfinite(cost).all():
        raise DomainError("cost matrix contains infinite entries")
    if sense == "max":
        cost = -cost
    elif sense != "min":
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    return Permutation(_lap_min(cost))


def assignment_value(cost, perm: Permutation) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(cost[np.arange(perm.n), perm.map].sum())


def project_to_permutation(d) -> Permutation:
    """Closest permutation in the Frobenius sense: ``argmax_P <D, P>``."""
    d = d.d if isinstance(d, DoublyStochastic) else np.asarray(d, dtype=float)
    return lap_solve(d, sense="max")


# ---------------------------------------------------------------------------
# Frank-Wolfe
# ---------------------------------------------------------------------------

@dataclass
class QapStepResult:
    d: DoublyStochastic
    projected: Permutation
    objective_trace: list[float] = field(default_factory=list)
    fw_iterations: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def qap_objective(adj: np.ndarray, d: np.ndarray, weights: np.ndarray) -> float:
    """``Tr(D^T A D M)``."""
    return float(np.sum((d.T @ adj @ d) * weights))


def _line_search(a: float, b: float) -> float:
    """Maximizer on [0, 1] of ``a g^2 + b g``."""
    if a < 0:
        return float(np.clip(-b / (2.0 * a), 0.0, 1.0))
    return 1.0 if a + b > 0 else 0.0


def _frank_wolfe(adj, weights, d, n_fixed, max_fw, tol):
    """Maximize ``Tr(D^T A D M)`` over ``D = I_{n_fixed} (+) J``.

    ``adj``, ``weights`` and ``d`` are already relabeled so the fixed block
    occupies the leading indices.  Only the trailing block moves.
    """
    n = adj.shape[0]
    free = slice(n_fixed, n)
    ad = adj @ d
    obj = float(np.sum((d.T @ ad) * weights))
    trace = [obj]
    iterations = 0
    for _ in range(max_fw):
        iterations += 1
        grad = 2.0 * ad @ weights
        q = lap_solve(grad[free, free], sense="max")
        direction = -d.copy()
        direction[:n_fixed, :] = 0.0
        direction[:, :n_fixed] = 0.0
        direction[n_fixed + np.arange(n - n_fixed), n_fixed + q.map] += 1.0
        ar = adj @ direction
        a = float(np.sum((direction.T @ ar) * weights))
        b = float(np.sum(direction * grad))
        gamma = _line_search(a, b)
        if gamma <= 0.0:
            break
        d = d + gamma * direction
        ad = ad + gamma * ar
        new_obj = float(np.sum((d.T @ ad) * weights))
        improvement = new_obj - obj
        trace.append(new_obj)
        obj = new_obj
        if improvement <= tol * max(abs(obj), 1e-12):
            break
    # Snap away round-off so the result stays a valid DoublyStochastic.
    d = np.where(np.abs(d) < 1e-15, 0.0, d)
    return d, trace, iterations


def _check_weights(weights: np.ndarray, n: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n, n):
        raise DimensionError(f"weight matrix has shape {weights.shape}, expected {(n, n)}")
    if not np.allclose(weights, weights.T, rtol=0, atol=1e-12 * max(1.0, np.abs(weights).max(initial=0))):
        raise DomainError("weight matrix must be symmetric")
    return weights


def faq_step(graph: UnipartiteGraph, weights, d0: DoublyStochastic | None = None,
             max_fw: int = 30, tol: float = 1e-6) -> QapStepResult:
    """Frank-Wolfe ascent of ``Tr(D^T A D M)`` from ``d0`` (barycenter by default)."""
    return seeded_faq_step(graph, weights, SeedSet.empty(), d0, max_fw=max_fw, tol=tol)


def seeded_faq_step(graph: UnipartiteGraph, weights, seeds: SeedSet,
                    j0: DoublyStochastic | None = None, max_fw: int = 30,
                    tol: float = 1e-6) -> QapStepResult:
    """Frank-Wolfe step with the seed correspondences held fixed.

    Seeds are moved to the leading indices on both sides, the free block ``J``
    is optimized with the cross terms from the seeded rows and columns included
    in its gradient, and the labels are restored on output.

    ``j0`` is the starting point of the free block, indexed by the unseeded
    vertices of each side in increasing order.  For convenience a full
    ``n x n`` matrix is also accepted; its free block is then extracted and
    re-normalized only if it is already consistent with the seeds.
    """
    adj = graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)
    n = adj.shape[0]
    weights = _check_weights(weights, n)
    seeds.check_size(n)
    seeded_a, seeded_b = seeds.a_indices, seeds.b_indices
    free_a = np.setdiff1d(np.arange(n), seeded_a)
    free_b = np.setdiff1d(np.arange(n), seeded_b)
    order_a = np.concatenate([seeded_a, free_a]).astype(np.int64)
    order_b = np.concatenate([seeded_b, free_b]).astype(np.int64)
    n_fixed, n_free = len(seeds), n - len(seeds)

    if j0 is None:
        j = barycenter(n_free).d if n_free else np.zeros((0, 0))
    else:
        j = j0.d if isinstance(j0, DoublyStochastic) else np.asarray(j0, dtype=float)
        if j.shape == (n, n) and n_fixed:
            full = j[np.ix_(order_a, order_b)]
            if not np.allclose(full[:n_fixed, :n_fixed], np.eye(n_fixed)):
                raise SeedError("initial matrix disagrees with the seed assignments")
            j = full[n_fixed:, n_fixed:]
        if j.shape != (n_free, n_free):
            raise DimensionError(f"initial block has shape {j.shape}, expected {(n_free, n_free)}")

    d_rel = np.zeros((n, n))
    d_rel[:n_fixed, :n_fixed] = np.eye(n_fixed)
    d_rel[n_fixed:, n_fixed:] = j
    adj_rel = adj[np.ix_(order_a, order_a)]
    w_rel = weights[np.ix_(order_b, order_b)]

    if n_free:
        d_rel, trace, iterations = _frank_wolfe(adj_rel, w_rel, d_rel, n_fixed, max_fw, tol)
        block = lap_solve(d_rel[n_fixed:, n_fixed:], sense="max")
    else:
        trace, iterations = [float(np.sum((d_rel.T @ adj_rel @ d_rel) * w_rel))], 0
        block = Permutation(np.zeros(0, dtype=np.int64))

    d = np.zeros((n, n))
    d[np.ix_(order_a, order_b)] = d_rel
    perm_map = np.empty(n, dtype=np.int64)
    perm_map[seeded_a] = seeded_b
    perm_map[free_a] = free_b[block.map]
    return QapStepResult(DoublyStochastic(d), Permutation(perm_map), trace, iterations)
