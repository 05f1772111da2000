"""Slow independent reference solvers shared by the unit and acceptance tests."""

import itertools

import numpy as np
from scipy.special import expit


def brute_force_lap(cost):
    """Lexicographically first optimum over all permutations (itertools order is lexicographic)."""
    n = cost.shape[0]
    best, best_map = np.inf, None
    for perm in itertools.permutations(range(n)):
        value = cost[np.arange(n), perm].sum()
        if value < best - 1e-9:
            best, best_map = value, perm
    return best, best_map


def reference_glasso(sigma, weights, lam, iters=200_000):
    """Proximal gradient ascent with backtracking; slow, independent of the column solver."""
    n = sigma.shape[0]
    pen = lam * weights * (1 - np.eye(n))

    def smooth(t):
        # a positive determinant is not enough: two negative eigenvalues also give one
        try:
            chol = np.linalg.cholesky(t)
        except np.linalg.LinAlgError:
            return -np.inf
        return 2 * np.sum(np.log(np.diag(chol))) - np.sum(sigma * t)

    def full(t):
        return smooth(t) - np.sum(pen * np.abs(t))

    theta = np.diag(1 / np.diag(sigma))
    step = 1.0
    value = full(theta)
    for _ in range(iters):
        grad = np.linalg.inv(theta) - sigma
        while True:
            z = theta + step * grad
            cand = np.sign(z) * np.maximum(np.abs(z) - step * pen, 0)
            cand = (cand + cand.T) / 2
            fc = smooth(cand)
            diff = cand - theta
            # sufficient-increase test for the smooth part
            if np.isfinite(fc) and fc >= smooth(theta) + np.sum(grad * diff) - np.sum(diff ** 2) / (2 * step):
                break
            step /= 2
        new_value = full(cand)
        theta = cand
        if abs(new_value - value) < 1e-15:
            break
        value = new_value
        step *= 1.5
    return theta, full(theta)


def fista_logistic(y, x, pen, iters=200_000, tol=1e-9):
    """Accelerated proximal gradient on mean logistic loss + weighted l1 (intercept free)."""
    m = x.shape[0]
    xt = np.hstack([np.ones((m, 1)), x])
    lip = np.linalg.norm(xt, 2) ** 2 / (4 * m)
    coef = np.zeros(xt.shape[1])
    z, t = coef.copy(), 1.0
    for _ in range(iters):
        grad = xt.T @ (expit(xt @ z) - y) / m
        u = z - grad / lip
        new = np.sign(u) * np.maximum(np.abs(u) - pen / lip, 0)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        z = new + (t - 1) / t_new * (new - coef)
        done = np.max(np.abs(new - coef)) < tol
        coef, t = new, t_new
        if done:
            break
    return coef
