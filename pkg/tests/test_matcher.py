import itertools

import numpy as np
import pytest

from bipmatch.errors import InvalidParameterError, MatchError
from bipmatch.gauss_fit import constrained_gaussian_mle, gaussian_profile_loss, sample_covariance
from bipmatch.graphs import (Permutation, SeedSet, UnipartiteGraph, barycenter, chain_graph,
                             permute_adjacency)
from bipmatch.ising_fit import PseudoParams, pseudo_loglik
from bipmatch.matcher import (MatchConfig, evaluate_candidates, match_invcov, match_pseudo,
                              penalty_weights, selection_score)
from bipmatch.metrics import edge_error
from bipmatch.models import BipartiteData, MrfParams, gaussian_sample, ising_gibbs_sample

SHORT_GRID = (0.01, 0.05, 0.2)


def gaussian_instance(n, m, seed, weight=0.4):
    rng = np.random.default_rng(seed)
    g = chain_graph(n)
    p = Permutation.random(n, rng)
    w = permute_adjacency(g.adj, p.map)
    theta = weight * w
    theta += (0.5 - np.linalg.eigvalsh(theta)[0]) * np.eye(n)
    return g, p, gaussian_sample(MrfParams("gaussian", theta), m, seed=rng)


def ising_instance(n, m, seed, weight=0.4):
    rng = np.random.default_rng(seed)
    g = chain_graph(n)
    p = Permutation.random(n, rng)
    theta = weight * permute_adjacency(g.adj, p.map)
    params = MrfParams("ising", theta, -0.5 * theta.sum(axis=1))
    return g, p, ising_gibbs_sample(params, m, seed=rng)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        MatchConfig(lambda_grid=())
    with pytest.raises(InvalidParameterError):
        MatchConfig(lambda_grid=(0.1, 0.01))
    with pytest.raises(InvalidParameterError):
        MatchConfig(lambda_grid=(0.0, 0.1))
    cfg = MatchConfig()
    assert len(cfg.lambda_grid) == 10
    assert cfg.lambda_grid[0] == pytest.approx(10 ** -2.5) and cfg.lambda_grid[-1] == pytest.approx(10 ** -0.5)
    assert cfg.max_outer == 20 and len(cfg.seeds) == 0


def test_penalty_weights():
    g = chain_graph(4)
    np.testing.assert_array_equal(penalty_weights(g, np.eye(4)), 1 - g.adj - np.eye(4))
    w = penalty_weights(g, barycenter(4))
    assert np.all(w[~np.eye(4, dtype=bool)] == pytest.approx(1 - 6 / 16))
    heavy = UnipartiteGraph(np.full((3, 3), 1.0) - np.eye(3))
    d = np.full((3, 3), 1.0)  # not doubly stochastic: DᵀAD exceeds 1, weights clamp at 0
    assert np.all(penalty_weights(heavy, d) == 0)


def test_invcov_recovers_edges_small_chain():
    hits = 0
    for s in range(20):
        g, p, data = gaussian_instance(4, 5000, [1, s])
        res = match_invcov(g, data)
        hits += edge_error(g, res.p_hat, p) == 0
    assert hits >= 18


def test_invcov_fully_seeded():
    g, p, data = gaussian_instance(6, 200, 2)
    res = match_invcov(g, data, MatchConfig(lambda_grid=SHORT_GRID, seeds=SeedSet.from_permutation(p, range(6))))
    assert res.p_hat == p


def test_pseudo_fully_seeded():
    g, p, data = ising_instance(5, 300, 3)
    res = match_pseudo(g, data, MatchConfig(lambda_grid=SHORT_GRID, seeds=SeedSet.from_permutation(p, range(5))))
    assert res.p_hat == p


def test_single_lambda_grid():
    g, _, data = gaussian_instance(5, 500, 4)
    res = match_invcov(g, data, MatchConfig(lambda_grid=(0.05,)))
    assert res.lambda_star == 0.05
    assert {r.lam for r in res.trace} == {0.05}


def test_selection_score_reproducible():
    g, _, data = gaussian_instance(6, 800, 5)
    res = match_invcov(g, data, MatchConfig(lambda_grid=SHORT_GRID))
    assert abs(selection_score(g, data, res.p_hat) - res.selection_score) <= 1e-9
    cov = sample_covariance(data)
    support = permute_adjacency(g.adj, res.p_hat.map) != 0
    direct = gaussian_profile_loss(constrained_gaussian_mle(cov, support), cov)
    assert abs(direct - res.selection_score) <= 1e-9
    assert res.candidates[0] == (res.p_hat, res.selection_score)
    scores = [c[1] for c in res.candidates]
    assert scores == sorted(scores, reverse=True)


def test_invcov_penalized_objective_monotone():
    for s in range(4):
        g, _, data = gaussian_instance(7, 300, [6, s])
        res = match_invcov(g, data)
        for lam in res.lambda_star, *MatchConfig().lambda_grid:
            recs = [r for r in res.trace if r.lam == lam]
            values = [v for r in recs for v in (r.objective_fit, r.objective_step)]
            assert np.all(np.diff(values) >= -1e-6), (lam, values)


def test_seeded_trace_respects_seeds():
    g, p, data = gaussian_instance(8, 300, 7)
    seeds = SeedSet.from_permutation(p, [0, 3, 5])
    res = match_invcov(g, data, MatchConfig(lambda_grid=SHORT_GRID, seeds=seeds))
    assert all(seeds.agrees_with(r.perm) for r in res.trace if r.perm is not None)
    assert seeds.agrees_with(res.p_hat)


def test_deterministic():
    g, _, data = ising_instance(5, 400, 8)
    cfg = MatchConfig(lambda_grid=SHORT_GRID)
    a, b = match_pseudo(g, data, cfg), match_pseudo(g, data, cfg)
    assert a.p_hat == b.p_hat
    assert a.selection_score == b.selection_score
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)
    assert [(r.loss, r.perm) for r in a.trace] == [(r.loss, r.perm) for r in b.trace]


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="Frank-Wolfe search misses the true permutation: 14/20 reach the "
                   "target while the true permutation outscores the selected one in the misses")
def test_pseudo_small_chain_edge_error():
    good = 0
    for s in range(20):
        g, p, data = ising_instance(5, 2000, [9, s])
        res = match_pseudo(g, data)
        good += edge_error(g, res.p_hat, p) <= 0.2
    assert good >= 15


def test_pseudo_null_score_is_independence_score():
    # every binary state once: the empirical distribution factorizes exactly
    n = 4
    b = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float).T
    data = BipartiteData(b, "ising")
    g = chain_graph(n)
    independence = pseudo_loglik(data, PseudoParams(np.zeros((n, n)), np.zeros(n)))
    for perm in itertools.permutations(range(n)):
        assert abs(selection_score(g, data, Permutation(perm)) - independence) <= 1e-6
    res = match_pseudo(g, data, MatchConfig(lambda_grid=SHORT_GRID))
    assert abs(res.selection_score - independence) <= 1e-6


def test_evaluate_candidates_single_and_duplicates():
    g, p, data = gaussian_instance(5, 300, 10)
    one = evaluate_candidates(g, data, [p])
    assert len(one) == 1 and one[0][0] == p
    assert one[0][1] == pytest.approx(selection_score(g, data, p))
    q = Permutation.random(5, 0)
    dup = evaluate_candidates(g, data, [p, q, p, q])
    assert len(dup) == len({p, q})


def test_evaluate_candidates_tie_order():
    g = chain_graph(3)
    data = gaussian_sample(MrfParams("gaussian", np.eye(3)), 100, seed=0)
    # the chain reversal is an automorphism, so both candidates have the same support
    a, b = Permutation([0, 1, 2]), Permutation([2, 1, 0])
    assert [c[0] for c in evaluate_candidates(g, data, [b, a])] == [b, a]
    assert [c[0] for c in evaluate_candidates(g, data, [a, b])] == [a, b]


def test_evaluate_candidates_truth_beats_random():
    wins = 0
    for s in range(20):
        g, p, data = gaussian_instance(5, 5000, [11, s])
        rng = np.random.default_rng([12, s])
        q = Permutation.random(5, rng)
        while np.array_equal(permute_adjacency(g.adj, q.map), permute_adjacency(g.adj, p.map)):
            q = Permutation.random(5, rng)
        ranked = evaluate_candidates(g, data, [q, p])
        wins += ranked[0][0] == p and ranked[0][1] > ranked[1][1]
    assert wins >= 18


def test_empty_candidates():
    g, _, data = gaussian_instance(4, 100, 13)
    with pytest.raises(InvalidParameterError):
        evaluate_candidates(g, data, [])


def test_all_lambdas_fail():
    g = chain_graph(4)
    # a constant row gives a zero variance, which every glasso fit refuses
    b = np.vstack([np.ones((1, 20)), np.random.default_rng(1).normal(size=(3, 20))])
    with pytest.raises(MatchError, match="every lambda"):
        match_invcov(g, BipartiteData(b, "gaussian"), MatchConfig(lambda_grid=SHORT_GRID))
