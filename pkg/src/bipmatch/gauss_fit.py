"""Gaussian estimation: sample covariance, weighted graphical lasso, constrained MLE.

The penalized problem is

    max_Theta  log det Theta - Tr(S Theta) - lam * sum_{i != j} omega_ij |Theta_ij|

with an unpenalized diagonal.  It is solved by block coordinate descent over
columns of ``Theta`` itself (the primal variant of glasso), so every iterate is
positive definite and the objective never decreases.  For the last column,
with ``Theta_11`` held fixed and ``Omega = Theta_11^{-1}``, the off-diagonal
block solves the weighted lasso

    min_t  0.5 t^T (s_22 Omega) t + s_12^T t + lam * sum_k omega_k |t_k|

and the diagonal entry is ``1 / s_22 + t^T Omega t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (ConvergenceWarning, DimensionError, DomainError, InsufficientDataError,
                     InvalidParameterError)
from .models import BipartiteData

W_OFF_SCALE = 1e6
PD_REPAIR = 1e-8


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    sigma_hat: np.ndarray
    m: int
    mu_hat: np.ndarray

    @property
    def n(self) -> int:
        return self.sigma_hat.shape[0]


@dataclass(frozen=True, eq=False)
class PrecisionEstimate:
    """Fitted precision matrix with solver diagnostics.

    ``objective`` is the penalized objective that was maximized (for the
    constrained MLE, the unpenalized log-likelihood term).
    """

    theta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool = True
    kkt_residual: float = 0.0
    objective_trace: list = field(default_factory=list)


def sample_covariance(data) -> CovarianceEstimate:
    """Centered covariance with ``1/m`` normalization."""
    b = data.b if isinstance(data, BipartiteData) else np.asarray(data, dtype=float)
    if b.ndim != 2:
        raise DimensionError("data must be an n x m matrix")
    m = b.shape[1]
    if m < 2:
        raise InsufficientDataError(f"sample covariance needs m >= 2 columns, got {m}")
    mu = b.mean(axis=1)
    centered = b - mu[:, None]
    sigma = centered @ centered.T / m
    return CovarianceEstimate((sigma + sigma.T) / 2, m, mu)


def _sigma(cov) -> np.ndarray:
    return cov.sigma_hat if isinstance(cov, CovarianceEstimate) else np.asarray(cov, dtype=float)


def _theta(theta) -> np.ndarray:
    return theta.theta_hat if isinstance(theta, PrecisionEstimate) else np.asarray(theta, dtype=float)


def _logdet_pd(theta: np.ndarray) -> float:
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise DomainError("precision matrix is not positive definite") from None
    return 2.0 * float(np.log(np.diag(chol)).sum())


def gaussian_profile_loss(theta, cov) -> float:
    """``log det Theta - Tr(S Theta)``."""
    theta, sigma = _theta(theta), _sigma(cov)
    if theta.shape != sigma.shape:
        raise DimensionError(f"shape mismatch {theta.shape} vs {sigma.shape}")
    return _logdet_pd(theta) - float(np.sum(sigma * theta))


def penalized_objective(theta, cov, weights, lam: float) -> float:
    theta = _theta(theta)
    off = np.abs(theta) * weights
    np.fill_diagonal(off, 0.0)
    return gaussian_profile_loss(theta, cov) - lam * float(off.sum())


# ---------------------------------------------------------------------------
# inner weighted lasso
# ---------------------------------------------------------------------------

@njit(cache=True)
def _kkt_quadratic(grad, x, pen):
    worst = 0.0
    for k in range(x.shape[0]):
        if x[k] == 0.0:
            r = abs(grad[k]) - pen[k]
            if r < 0.0:
                r = 0.0
        elif x[k] > 0.0:
            r = abs(grad[k] + pen[k])
        else:
            r = abs(grad[k] - pen[k])
        if r > worst:
            worst = r
    return worst


@njit(cache=True)
def quadratic_lasso_cd(q, c, pen, x, tol, max_passes):
    """Cyclic coordinate descent for ``min 0.5 x^T q x + c^T x + sum pen_k |x_k|``.

    ``x`` is updated in place.  Returns ``(passes, kkt_residual)``; the
    residual is the largest violation of the optimality conditions on the
    gradient ``q x + c``.
    """
    p = x.shape[0]
    grad = c + q @ x
    resid = _kkt_quadratic(grad, x, pen)
    passes = 0
    while resid > tol and passes < max_passes:
        passes += 1
        for k in range(p):
            qkk = q[k, k]
            if qkk <= 0.0:
                continue
            z = qkk * x[k] - grad[k]
            if z > pen[k]:
                new = (z - pen[k]) / qkk
            elif z < -pen[k]:
                new = (z + pen[k]) / qkk
            else:
                new = 0.0
            delta = new - x[k]
            if delta != 0.0:
                x[k] = new
                for j in range(p):
                    grad[j] += q[j, k] * delta
        resid = _kkt_quadratic(grad, x, pen)
    return passes, resid


# ---------------------------------------------------------------------------
# weighted graphical lasso
# ---------------------------------------------------------------------------

def glasso_kkt_residual(theta: np.ndarray, sigma: np.ndarray, weights: np.ndarray, lam: float) -> float:
    """Largest violation of the weighted-glasso optimality conditions."""
    w = np.linalg.inv(theta)
    w = (w + w.T) / 2
    gap = sigma - w
    pen = lam * weights
    n = theta.shape[0]
    off = ~np.eye(n, dtype=bool)
    zero = (theta == 0) & off
    nonzero = (theta != 0) & off
    resid = np.abs(np.diag(gap)).max(initial=0.0)
    if zero.any():
        resid = max(resid, float(np.maximum(np.abs(gap[zero]) - pen[zero], 0.0).max()))
    if nonzero.any():
        resid = max(resid, float(np.abs(gap[nonzero] + pen[nonzero] * np.sign(theta[nonzero])).max()))
    return float(resid)


def _check_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        weights = np.ones((n, n))
    weights = np.array(getattr(weights, "omega", weights), dtype=float)
    if weights.shape != (n, n):
        raise DimensionError(f"weights have shape {weights.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(weights)):
        raise InvalidParameterError("weights must be finite")
    if not np.allclose(weights, weights.T, rtol=0, atol=1e-10):
        raise InvalidParameterError("weights must be symmetric")
    weights = np.maximum((weights + weights.T) / 2, 0.0)
    np.fill_diagonal(weights, 0.0)
    return weights


def _is_singular(sigma: np.ndarray) -> bool:
    eig = np.linalg.eigvalsh(sigma)
    return eig[0] <= 1e-12 * max(1.0, abs(eig[-1]))


def weighted_graphical_lasso(cov, weights=None, lam: float = 0.1, tol: float = 1e-6,
                             max_sweeps: int = 200, theta0=None) -> PrecisionEstimate:
    """Entrywise-weighted graphical lasso.

    Parameters
    ----------
    cov : CovarianceEstimate or array
        Sample covariance ``S``.
    weights : (n, n) array, optional
        Penalty weights ``omega``; negative entries are clamped to zero and
        the diagonal is ignored.  Uniform ones by default.
    lam : float
        Overall penalty level.
    tol : float
        Target KKT residual.
    max_sweeps : int
        Outer sweeps over all columns.
    theta0 : array, optional
        Positive definite warm start.

    Returns
    -------
    PrecisionEstimate
        On non-convergence the last iterate is returned with
        ``converged=False`` and a :class:`ConvergenceWarning` is issued.
    """
    sigma = _sigma(cov)
    n = sigma.shape[0]
    if sigma.ndim != 2 or sigma.shape[1] != n:
        raise DimensionError(f"covariance must be square, got {sigma.shape}")
    if lam < 0:
        raise InvalidParameterError(f"lambda must be non-negative, got {lam}")
    weights = _check_weights(weights, n)
    diag = np.diag(sigma)
    if np.any(diag <= 0):
        raise DomainError(f"covariance has non-positive diagonal at {np.nonzero(diag <= 0)[0].tolist()}")
    if _is_singular(sigma) and (lam == 0 or not np.any(weights > 0)):
        raise DomainError("singular covariance needs a positive penalty for a bounded objective")

    pen_all = lam * weights
    if theta0 is None:
        theta = np.diag(1.0 / diag)
        w = np.diag(diag.astype(float))
    else:
        theta = np.array(_theta(theta0), dtype=float)
        _logdet_pd(theta)
        w = np.linalg.inv(theta)
    trace = [penalized_objective(theta, sigma, weights, lam)]
    resid = glasso_kkt_residual(theta, sigma, weights, lam)
    inner_tol = tol / 10
    sweeps = 0
    idx = np.arange(n)
    while resid > tol and sweeps < max_sweeps:
        sweeps += 1
        for j in range(n):
            rest = idx != j
            w11 = w[np.ix_(rest, rest)]
            w12 = w[rest, j]
            omega = w11 - np.outer(w12, w12) / w[j, j]
            s22 = sigma[j, j]
            q = np.ascontiguousarray(s22 * omega)
            x = np.ascontiguousarray(theta[rest, j])
            quadratic_lasso_cd(q, np.ascontiguousarray(sigma[rest, j]),
                               np.ascontiguousarray(pen_all[rest, j]), x, inner_tol, 10000)
            ox = omega @ x
            theta[rest, j] = x
            theta[j, rest] = x
            theta[j, j] = 1.0 / s22 + x @ ox
            new_w12 = -s22 * ox
            w[np.ix_(rest, rest)] = omega + np.outer(new_w12, new_w12) / s22
            w[rest, j] = new_w12
            w[j, rest] = new_w12
            w[j, j] = s22
        w = np.linalg.inv(theta)
        w = (w + w.T) / 2
        trace.append(penalized_objective(theta, sigma, weights, lam))
        resid = glasso_kkt_residual(theta, sigma, weights, lam)
    converged = resid <= tol
    if not converged:
        warnings.warn(f"weighted graphical lasso did not converge in {max_sweeps} sweeps "
                      f"(KKT residual {resid:.3g})", ConvergenceWarning, stacklevel=2)
    return PrecisionEstimate(theta, trace[-1], sweeps, converged, resid, trace)


def _support_matrix(support, n: int) -> np.ndarray:
    if hasattr(support, "adj"):
        support = support.adj
    support = np.asarray(support)
    if support.shape == (n, n):
        mask = support != 0
    else:
        mask = np.zeros((n, n), dtype=bool)
        for i, j in support:
            mask[i, j] = True
            mask[j, i] = True
    if not np.array_equal(mask, mask.T):
        raise InvalidParameterError("support must be symmetric")
    mask = mask.copy()
    np.fill_diagonal(mask, False)
    return mask


def constrained_gaussian_mle(cov, support, tol: float = 1e-6, max_sweeps: int = 200) -> PrecisionEstimate:
    """Gaussian MLE of ``Theta`` with zeros forced outside ``support``.

    ``support`` is a symmetric boolean (or 0/1) ``n x n`` matrix, a graph, or
    a list of index pairs; the diagonal is always free.  Realized as a
    weighted glasso with zero weight on the support and a prohibitive weight
    elsewhere, followed by exact zeroing.
    """
    sigma = _sigma(cov)
    n = sigma.shape[0]
    mask = _support_matrix(support, n)
    weights = np.where(mask, 0.0, W_OFF_SCALE * max(np.abs(sigma).max(), 1e-300))
    np.fill_diagonal(weights, 0.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        est = weighted_graphical_lasso(sigma, weights, 1.0, tol=tol, max_sweeps=max_sweeps)
    theta = est.theta_hat.copy()
    theta[~mask & ~np.eye(n, dtype=bool)] = 0.0
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        theta = theta + PD_REPAIR * np.eye(n)
    w = np.linalg.inv(theta)
    free = mask | np.eye(n, dtype=bool)
    grad_norm = float(np.abs((w - sigma)[free]).max())
    converged = est.converged and grad_norm <= tol
    if not converged:
        detail = "; ".join(str(c.message) for c in caught)
        warnings.warn(f"constrained Gaussian MLE did not converge (gradient norm {grad_norm:.3g})"
                      + (f": {detail}" if detail else ""), ConvergenceWarning, stacklevel=2)
    return PrecisionEstimate(theta, gaussian_profile_loss(theta, sigma), est.iterations,
                             converged, grad_norm, est.objective_trace)
