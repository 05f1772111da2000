import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bipmatch.errors import DimensionError, UndefinedMetricError
from bipmatch.graphs import Permutation, UnipartiteGraph, chain_graph, compose, er_graph, permute_adjacency
from bipmatch.metrics import edge_confusion, edge_error, error_report, vertex_error


def test_vertex_error_examples():
    p = Permutation.random(8, 0)
    assert vertex_error(p, p) == 0
    swap = Permutation([1, 0, 2, 3, 4, 5, 6, 7, 8, 9])
    assert vertex_error(swap, Permutation.identity(10)) == pytest.approx(0.2)
    assert vertex_error(Permutation([1, 2, 3, 4, 0]), Permutation.identity(5)) == 1.0


def test_vertex_error_size_mismatch():
    with pytest.raises(DimensionError):
        vertex_error(Permutation.identity(3), Permutation.identity(4))


def test_edge_error_examples():
    g = chain_graph(3)
    truth = Permutation.identity(3)
    assert edge_error(g, truth, truth) == 0
    # chain reversal is an automorphism
    assert edge_error(g, compose(Permutation([2, 1, 0]), truth), truth) == 0
    assert edge_error(g, Permutation([1, 0, 2]), truth) == pytest.approx(0.5)


def test_edge_error_hand_enumeration():
    g = chain_graph(3)
    swapped = permute_adjacency(g.adj, np.array([1, 0, 2]))
    assert np.sum((g.adj - swapped) ** 2) == 4
    assert np.sum(g.adj ** 2) == 4


def test_edge_error_empty_graph():
    with pytest.raises(UndefinedMetricError):
        edge_error(UnipartiteGraph(np.zeros((3, 3))), Permutation.identity(3), Permutation([1, 0, 2]))


def test_edge_confusion_examples():
    truth = chain_graph(4).adj
    assert edge_confusion(truth, truth) == (0.0, 0.0)
    assert edge_confusion(np.zeros((4, 4)), truth) == (0.0, 1.0)
    assert edge_confusion(np.ones((4, 4)) - np.eye(4), truth) == (1.0, 0.0)


def test_edge_confusion_undefined_rates():
    complete = np.ones((3, 3)) - np.eye(3)
    assert edge_confusion(complete, complete) == (None, 0.0)
    assert edge_confusion(complete, np.zeros((3, 3))) == (1.0, None)


def test_edge_confusion_counts_upper_triangle_once():
    truth = chain_graph(4).adj
    est = truth.copy()
    est[0, 3] = 1  # asymmetric extra entry counts once
    fpr, fnr = edge_confusion(est, truth)
    assert fpr == pytest.approx(1 / 3) and fnr == 0.0


def test_error_report():
    g = chain_graph(4)
    rep = error_report(g, Permutation([1, 0, 2, 3]), Permutation.identity(4))
    assert rep.vertex_error == 0.5
    assert 0 < rep.edge_error <= 1
    assert 0 <= rep.fpr <= 1 and 0 <= rep.fnr <= 1


@settings(max_examples=60, deadline=None)
@given(data=st.data(), n=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_metrics_invariant_to_common_relabeling(data, n, seed):
    g = er_graph(n, 0.5, seed=seed)
    if g.n_edges == 0:
        return
    draw = lambda: Permutation(data.draw(st.permutations(list(range(n)))))
    p_hat, p_star, r = draw(), draw(), draw()
    # relabel the B side of both maps by r
    assert vertex_error(compose(p_hat, r), compose(p_star, r)) == vertex_error(p_hat, p_star)
    assert edge_error(g, compose(p_hat, r), compose(p_star, r)) == pytest.approx(edge_error(g, p_hat, p_star))
    assert 0 <= edge_error(g, p_hat, p_star) <= 1
    if vertex_error(p_hat, p_star) == 0:
        assert edge_error(g, p_hat, p_star) == 0
