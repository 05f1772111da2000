"""Collapsing baselines: reduce ``B`` to an ``n x n`` matrix, then match it to ``A``.

The collapsed matrix ``M`` is matched by maximizing ``Tr(D^T A D M)`` with
Frank-Wolfe from the barycenter.  For permutations this equals minimizing
``||A - P M P^T||_F^2`` up to terms that do not depend on ``P``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .assign import seeded_faq_step
from .errors import BipmatchError, DegenerateModelError, DimensionError, InvalidParameterError
from .gauss_fit import (constrained_gaussian_mle, gaussian_profile_loss, quadratic_lasso_cd,
                        sample_covariance, weighted_graphical_lasso)
from .graphs import Permutation, SeedSet, UnipartiteGraph
from .ising_fit import constrained_pseudo_mle, lasso_logistic_node, pseudo_loglik
from .models import BipartiteData, Family, exhaustive_argmax

METHODS = ("omp", "cov", "corr", "glasso", "mb")
BASELINE_GRID = tuple(float(v) for v in np.logspace(-2.5, -0.5, 10))


@dataclass(frozen=True, eq=False)
class CollapsedGraph:
    """Symmetric ``n x n`` summary of ``B``.

    ``edges`` is set for the methods that estimate an edge set (glasso, mb).
    """

    matrix: np.ndarray
    method: str
    lam: float | None = None
    edges: np.ndarray | None = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"collapsed matrix must be square, got {matrix.shape}")
        if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(matrix).max(initial=0))):
            raise InvalidParameterError("collapsed matrix must be symmetric")
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown collapsing method {self.method!r}")
        object.__setattr__(self, "matrix", (matrix + matrix.T) / 2)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _b(data) -> np.ndarray:
    return data.b if isinstance(data, BipartiteData) else np.asarray(data, dtype=float)


def one_mode_projection(data) -> CollapsedGraph:
    """Co-occurrence matrix ``B B^T / m``."""
    b = _b(data)
    return CollapsedGraph(b @ b.T / b.shape[1], "omp")


def covariance_graph(data) -> CollapsedGraph:
    return CollapsedGraph(sample_covariance(data).sigma_hat, "cov")


def correlation_matrix(data) -> CollapsedGraph:
    """Pearson correlations between the rows of ``B``."""
    sigma = sample_covariance(data).sigma_hat
    sd = np.sqrt(np.diag(sigma))
    flat = np.nonzero(sd <= 1e-15 * max(1.0, sd.max(initial=0.0)))[0]
    if flat.size:
        raise DegenerateModelError(f"rows with zero variance: {flat.tolist()}")
    corr = np.clip(sigma / np.outer(sd, sd), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return CollapsedGraph(corr, "corr")


def _edge_count(mask: np.ndarray) -> int:
    return int(np.count_nonzero(np.triu(mask, 1)))


def _refit_score(data: BipartiteData, mask: np.ndarray) -> float:
    """``loglik - log(m) * edges / 2`` of the support-constrained refit."""
    m = data.m
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if data.family is Family.GAUSSIAN:
            cov = sample_covariance(data)
            loglik = 0.5 * m * gaussian_profile_loss(constrained_gaussian_mle(cov, mask), cov)
        else:
            loglik = pseudo_loglik(data, constrained_pseudo_mle(data, mask))
    return loglik - np.log(m) * _edge_count(mask) / 2


def _select(data: BipartiteData, fit, grid) -> CollapsedGraph:
    best, best_score = None, -np.inf
    for lam in grid:
        try:
            graph = fit(data, lam)
            score = _refit_score(data, graph.edges)
        except (BipmatchError, np.linalg.LinAlgError):
            continue
        if best is None or score > best_score:
            best, best_score = graph, score
    if best is None:
        raise DegenerateModelError("no lambda on the grid produced a usable fit")
    return best


def _as_data(data, family=None) -> BipartiteData:
    if isinstance(data, BipartiteData):
        return data
    b = np.asarray(data, dtype=float)
    if family is None:
        family = Family.ISING if np.all((b == 0) | (b == 1)) else Family.GAUSSIAN
    return BipartiteData(b, family)


def glasso_edges(data, lam: float | None = None) -> CollapsedGraph:
    """``|Theta_hat|`` from uniform-weight graphical lasso; ``lam=None`` selects it on the grid."""
    data = _as_data(data)
    if lam is None:
        return _select(data, glasso_edges, BASELINE_GRID)
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    n = data.n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = weighted_graphical_lasso(sample_covariance(data), np.ones((n, n)), lam)
    mag = np.abs(est.theta_hat)
    mag = (mag + mag.T) / 2
    np.fill_diagonal(mag, 0.0)
    return CollapsedGraph(mag, "glasso", lam, mag != 0)


def _linear_node(sigma: np.ndarray, j: int, lam: float) -> np.ndarray:
    """Lasso of centered row ``j`` on the other rows from the covariance alone."""
    rest = np.arange(sigma.shape[0]) != j
    q = np.ascontiguousarray(sigma[np.ix_(rest, rest)])
    c = np.ascontiguousarray(-sigma[rest, j])
    x = np.zeros(q.shape[0])
    quadratic_lasso_cd(q, c, np.full(q.shape[0], lam), x, 1e-9, 10000)
    out = np.zeros(sigma.shape[0])
    out[rest] = x
    return out


def mb_edges(data, lam: float | None = None) -> CollapsedGraph:
    """Neighborhood selection with the OR rule.

    Gaussian data use linear lasso regressions, binary data logistic ones.
    ``lam=None`` selects the penalty on the grid.
    """
    data = _as_data(data)
    if lam is None:
        return _select(data, mb_edges, BASELINE_GRID)
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    n = data.n
    coef = np.zeros((n, n))
    if data.family is Family.GAUSSIAN:
        sigma = sample_covariance(data).sigma_hat
        for j in range(n):
            coef[:, j] = _linear_node(sigma, j, lam)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for j in range(n):
                coef[:, j] = lasso_logistic_node(data, j, None, lam).theta_col
    edges = (coef != 0) | (coef.T != 0)
    np.fill_diagonal(edges, False)
    return CollapsedGraph(edges.astype(float), "mb", lam, edges)


def collapse(data, method: str, lam: float | None = None) -> CollapsedGraph:
    if method == "omp":
        return one_mode_projection(data)
    if method == "cov":
        return covariance_graph(data)
    if method == "corr":
        return correlation_matrix(data)
    if method == "glasso":
        return glasso_edges(data, lam)
    if method == "mb":
        return mb_edges(data, lam)
    raise InvalidParameterError(f"unknown collapsing method {method!r}; expected one of {METHODS}")


def _matrix(collapsed) -> np.ndarray:
    return collapsed.matrix if isinstance(collapsed, CollapsedGraph) else np.asarray(collapsed, dtype=float)


def collapse_and_match(graph: UnipartiteGraph, collapsed, seeds: SeedSet | None = None,
                       fw_max: int = 30, tol: float = 1e-6) -> Permutation:
    """Frank-Wolfe matching of ``A`` to a collapsed matrix (diagonal ignored)."""
    weights = _matrix(collapsed).copy()
    if weights.shape != (graph.n, graph.n):
        raise DimensionError(f"collapsed matrix has shape {weights.shape}, graph has n={graph.n}")
    np.fill_diagonal(weights, 0.0)
    seeds = seeds or SeedSet.empty()
    return seeded_faq_step(graph, weights, seeds, None, max_fw=fw_max, tol=tol).projected


def brute_force_collapsed(graph: UnipartiteGraph, collapsed) -> tuple[Permutation, float]:
    """Exhaustive ``argmin_P ||P^T A P - M||_F^2``; returns the permutation and the minimum."""
    weights = _matrix(collapsed)
    perm, best = exhaustive_argmax(graph, lambda w: -float(np.sum((w - weights) ** 2)))
    return perm, -best
