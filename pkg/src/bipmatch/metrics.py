"""Matching and edge-recovery error measures.

All measures compare against a ground-truth permutation ``p_star`` and are
unchanged when both permutations are relabeled by a common permutation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError
from .graphs import Permutation, UnipartiteGraph, permute_adjacency


@dataclass(frozen=True)
class ErrorReport:
    vertex_error: float
    edge_error: float
    fpr: float | None = None
    fnr: float | None = None


def _maps(p_hat: Permutation, p_star: Permutation):
    if p_hat.n != p_star.n:
        raise DimensionError(f"permutation sizes differ: {p_hat.n} vs {p_star.n}")
    return p_hat.map, p_star.map


def vertex_error(p_hat: Permutation, p_star: Permutation) -> float:
    """Fraction of vertices sent to the wrong position."""
    a, b = _maps(p_hat, p_star)
    return float(np.mean(a != b)) if a.size else 0.0


def edge_error(graph: UnipartiteGraph, p_hat: Permutation, p_star: Permutation) -> float:
    """``||W* - W_hat||_F^2 / (2 ||A||_F^2)`` with ``W = P^T A P``."""
    a, b = _maps(p_hat, p_star)
    adj = graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)
    norm = float(np.sum(adj ** 2))
    if norm == 0:
        raise UndefinedMetricError("edge error is undefined for an empty graph")
    diff = permute_adjacency(adj, b) - permute_adjacency(adj, a)
    return float(np.sum(diff ** 2)) / (2.0 * norm)


def edge_confusion(w_hat, w_true) -> tuple[float | None, float | None]:
    """False positive and false negative rates over pairs ``i < j``.

    A rate is ``None`` when its denominator is empty (no true non-edges for
    the FPR, no true edges for the FNR).
    """
    w_hat = np.asarray(getattr(w_hat, "adj", w_hat)) != 0
    w_true = np.asarray(getattr(w_true, "adj", w_true)) != 0
    if w_hat.shape != w_true.shape:
        raise DimensionError(f"edge sets have shapes {w_hat.shape} and {w_true.shape}")
    iu = np.triu_indices(w_true.shape[0], 1)
    est, truth = w_hat[iu], w_true[iu]
    negatives = np.count_nonzero(~truth)
    positives = np.count_nonzero(truth)
    fpr = float(np.count_nonzero(est & ~truth) / negatives) if negatives else None
    fnr = float(np.count_nonzero(~est & truth) / positives) if positives else None
    return fpr, fnr


def error_report(graph: UnipartiteGraph, p_hat: Permutation, p_star: Permutation,
                 w_hat=None) -> ErrorReport:
    """All measures; ``w_hat`` defaults to the matched structure ``P_hat^T A P_hat``."""
    if w_hat is None:
        w_hat = permute_adjacency(graph.adj, p_hat.map)
    fpr, fnr = edge_confusion(w_hat, permute_adjacency(graph.adj, p_star.map))
    return ErrorReport(vertex_error(p_hat, p_star), edge_error(graph, p_hat, p_star), fpr, fnr)
