import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from bipmatch.errors import ConvergenceWarning, DomainError, InsufficientDataError
from bipmatch.gauss_fit import (constrained_gaussian_mle, gaussian_profile_loss, glasso_kkt_residual,
                                penalized_objective, sample_covariance, weighted_graphical_lasso)
from bipmatch.graphs import chain_graph
from bipmatch.models import BipartiteData, MrfParams, gaussian_sample

from oracles import reference_glasso


def random_pd(n, rng, scale=1.0):
    g = rng.normal(size=(n, 2 * n))
    return scale * g @ g.T / (2 * n) + 0.1 * np.eye(n)


# --- covariance and loss -------------------------------------------------------

def test_sample_covariance_identical_columns():
    b = np.tile([[1.0], [2.0], [-1.0]], (1, 5))
    np.testing.assert_array_equal(sample_covariance(BipartiteData(b, "gaussian")).sigma_hat, 0)


def test_sample_covariance_hand_computed():
    sigma = sample_covariance(BipartiteData(np.eye(2), "gaussian")).sigma_hat
    np.testing.assert_allclose(sigma, [[0.25, -0.25], [-0.25, 0.25]])


def test_sample_covariance_double_loop_oracle():
    rng = np.random.default_rng(0)
    b = rng.normal(size=(4, 9))
    n, m = b.shape
    mu = [sum(b[i, k] for k in range(m)) / m for i in range(n)]
    naive = np.array([[sum((b[i, k] - mu[i]) * (b[j, k] - mu[j]) for k in range(m)) / m
                       for j in range(n)] for i in range(n)])
    assert np.max(np.abs(sample_covariance(b).sigma_hat - naive)) <= 1e-12


def test_sample_covariance_needs_two_columns():
    with pytest.raises(InsufficientDataError):
        sample_covariance(np.ones((3, 1)))


def test_profile_loss_examples():
    assert gaussian_profile_loss(np.eye(4), np.eye(4)) == pytest.approx(-4)
    rng = np.random.default_rng(1)
    s = random_pd(4, rng)
    assert gaussian_profile_loss(np.linalg.inv(s), s) == pytest.approx(-np.linalg.slogdet(s)[1] - 4)


def test_profile_loss_scaling_identity():
    rng = np.random.default_rng(2)
    s, t = random_pd(3, rng), random_pd(3, rng)
    c = 1.7
    delta = gaussian_profile_loss(c * t, s) - gaussian_profile_loss(t, s)
    assert delta == pytest.approx(3 * np.log(c) - (c - 1) * np.trace(s @ t))


def test_profile_loss_non_pd():
    with pytest.raises(DomainError):
        gaussian_profile_loss(-np.eye(2), np.eye(2))


# --- weighted glasso -----------------------------------------------------------

def test_glasso_diagonal_covariance():
    s = np.diag([2.0, 0.5, 4.0])
    rng = np.random.default_rng(3)
    w = rng.random((3, 3))
    w = w + w.T
    est = weighted_graphical_lasso(s, w, 0.2)
    np.testing.assert_allclose(est.theta_hat, np.diag(1 / np.diag(s)), atol=1e-12)


def test_glasso_full_shrinkage():
    rng = np.random.default_rng(4)
    s = random_pd(5, rng)
    off = np.abs(s - np.diag(np.diag(s))).max()
    est = weighted_graphical_lasso(s, None, off * 1.01)
    np.testing.assert_allclose(est.theta_hat, np.diag(1 / np.diag(s)), atol=1e-10)


def test_glasso_matches_reference_solver():
    for seed in range(5):
        rng = np.random.default_rng([5, seed])
        s = random_pd(3, rng)
        w = np.ones((3, 3))
        est = weighted_graphical_lasso(s, w, 0.1, tol=1e-9)
        _, ref_value = reference_glasso(s, w, 0.1)
        assert est.objective == pytest.approx(ref_value, abs=1e-5)
        assert est.objective >= ref_value - 1e-9


def test_glasso_matches_reference_with_weights():
    rng = np.random.default_rng(6)
    s = random_pd(5, rng)
    w = rng.random((5, 5))
    w = (w + w.T) / 2
    est = weighted_graphical_lasso(s, w, 0.05, tol=1e-9)
    ref_theta, ref_value = reference_glasso(s, w, 0.05)
    assert est.objective == pytest.approx(ref_value, abs=1e-5)
    np.testing.assert_allclose(est.theta_hat, ref_theta, atol=1e-3)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 8), seed=st.integers(0, 10_000), lam=st.floats(0.001, 0.5))
def test_glasso_kkt_monotone_pd(n, seed, lam):
    rng = np.random.default_rng(seed)
    s = random_pd(n, rng)
    w = rng.random((n, n))
    w = (w + w.T) / 2
    est = weighted_graphical_lasso(s, w, lam)
    assert est.converged
    assert glasso_kkt_residual(est.theta_hat, s, np.where(np.eye(n, dtype=bool), 0, w), lam) <= 1e-6
    assert np.all(np.diff(est.objective_trace) >= -1e-10)
    np.linalg.cholesky(est.theta_hat)
    assert est.objective == pytest.approx(penalized_objective(est.theta_hat, s, w, lam))


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 10_000))
def test_glasso_zero_penalty_is_inverse(n, seed):
    rng = np.random.default_rng(seed)
    s = random_pd(n, rng)
    est = weighted_graphical_lasso(s, None, 0.0, tol=1e-9, max_sweeps=2000)
    assert np.max(np.abs(est.theta_hat - np.linalg.inv(s))) <= 1e-6


def test_glasso_singular_guard():
    s = np.ones((3, 3))
    with pytest.raises(DomainError):
        weighted_graphical_lasso(s, None, 0.0)
    with pytest.raises(DomainError):
        weighted_graphical_lasso(s, np.zeros((3, 3)), 0.5)
    est = weighted_graphical_lasso(s + 0.0, None, 0.5)
    np.linalg.cholesky(est.theta_hat)


def test_glasso_non_positive_diagonal():
    with pytest.raises(DomainError):
        weighted_graphical_lasso(np.diag([1.0, 0.0]), None, 0.1)


def test_glasso_negative_weights_clamped():
    rng = np.random.default_rng(7)
    s = random_pd(4, rng)
    w = -np.ones((4, 4))
    a = weighted_graphical_lasso(s, w, 0.3, tol=1e-9)
    b = weighted_graphical_lasso(s, np.zeros((4, 4)), 0.3, tol=1e-9)
    np.testing.assert_allclose(a.theta_hat, b.theta_hat, atol=1e-12)


def test_glasso_nonconvergence_warns():
    rng = np.random.default_rng(8)
    s = random_pd(6, rng)
    with pytest.warns(ConvergenceWarning):
        est = weighted_graphical_lasso(s, None, 0.01, tol=1e-14, max_sweeps=1)
    assert not est.converged and est.kkt_residual > 1e-14


def test_glasso_warm_start_same_solution():
    rng = np.random.default_rng(9)
    s = random_pd(5, rng)
    cold = weighted_graphical_lasso(s, None, 0.05, tol=1e-9)
    warm = weighted_graphical_lasso(s, None, 0.05, tol=1e-9, theta0=np.linalg.inv(s))
    np.testing.assert_allclose(cold.theta_hat, warm.theta_hat, atol=1e-6)


# --- constrained MLE -----------------------------------------------------------

def lbfgs_constrained(sigma, mask):
    """Maximize the profile loss over the free entries with a generic quasi-Newton method."""
    n = sigma.shape[0]
    ii, jj = np.nonzero(np.triu(mask | np.eye(n, dtype=bool)))

    def unpack(v):
        t = np.zeros((n, n))
        t[ii, jj] = v
        t[jj, ii] = v
        return t

    def f(v):
        t = unpack(v)
        if np.linalg.eigvalsh(t)[0] <= 0:
            return np.inf, np.zeros_like(v)
        logdet = np.linalg.slogdet(t)[1]
        g = np.linalg.inv(t) - sigma
        grad = np.where(ii == jj, g[ii, jj], 2 * g[ii, jj])
        return -(logdet - np.sum(sigma * t)), -grad

    v0 = np.diag(1 / np.diag(sigma))[ii, jj]
    res = minimize(f, v0, jac=True, method="BFGS", options={"gtol": 1e-11, "maxiter": 10_000})
    return unpack(res.x)


def test_constrained_full_support_is_inverse():
    rng = np.random.default_rng(10)
    s = random_pd(4, rng)
    est = constrained_gaussian_mle(s, np.ones((4, 4)), tol=1e-9)
    np.testing.assert_allclose(est.theta_hat, np.linalg.inv(s), atol=1e-6)


def test_constrained_empty_support_is_independence():
    rng = np.random.default_rng(11)
    s = random_pd(4, rng)
    est = constrained_gaussian_mle(s, np.zeros((4, 4)))
    np.testing.assert_allclose(est.theta_hat, np.diag(1 / np.diag(s)), atol=1e-12)


def test_constrained_matches_huge_penalty_glasso():
    rng = np.random.default_rng(12)
    s = random_pd(4, rng)
    mask = chain_graph(4).adj != 0
    est = constrained_gaussian_mle(s, mask)
    w = np.where(mask, 0.0, 1.0)
    ref = weighted_graphical_lasso(s, w, 1e6)
    assert np.max(np.abs(est.theta_hat - ref.theta_hat)) <= 1e-4


def test_constrained_matches_quasi_newton_oracle():
    for seed in range(4):
        rng = np.random.default_rng([13, seed])
        n = 5
        s = random_pd(n, rng)
        mask = np.triu(rng.random((n, n)) < 0.5, 1)
        mask = mask | mask.T
        est = constrained_gaussian_mle(s, mask, tol=1e-9)
        ref = lbfgs_constrained(s, mask)
        np.testing.assert_allclose(est.theta_hat, ref, atol=1e-5)
        free = mask | np.eye(n, dtype=bool)
        assert np.max(np.abs((np.linalg.inv(est.theta_hat) - s)[free])) <= 1e-8
        assert np.all(est.theta_hat[~free] == 0)


def test_constrained_accepts_pairs():
    rng = np.random.default_rng(14)
    s = random_pd(3, rng)
    a = constrained_gaussian_mle(s, [(0, 1), (1, 2)])
    b = constrained_gaussian_mle(s, chain_graph(3))
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


def test_constrained_consistency():
    n = 5
    theta = np.eye(n) + 0.35 * chain_graph(n).adj
    data = gaussian_sample(MrfParams("gaussian", theta), 100_000, seed=15)
    est = constrained_gaussian_mle(sample_covariance(data), chain_graph(n))
    assert np.max(np.abs(est.theta_hat - theta)) <= 0.05
