"""Ising estimation by nodewise l1-penalized logistic regression.

States are coded in ``{0, 1}``.  Node ``j`` is regressed on the others with
logit ``beta_j + sum_{i != j} Theta_ij x_i``; in terms of the joint model this
``Theta`` is twice the pairwise interaction (ordered pairs are summed there).
The loss per node is the mean negative conditional log-likelihood over the
``m`` columns plus ``lam * sum_i omega_ij |Theta_ij|``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (BipmatchError, DimensionError, DomainError, InvalidParameterError,
                     SeparabilityWarning)
from .gauss_fit import quadratic_lasso_cd
from .models import BipartiteData

COEF_CAP = 50.0


@dataclass(frozen=True, eq=False)
class NodewiseFit:
    theta_col: np.ndarray
    beta_j: float
    objective: float
    kkt_residual: float = 0.0
    iterations: int = 0
    capped: bool = False


@dataclass(frozen=True, eq=False)
class PseudoParams:
    """Pseudolikelihood parameters; column ``j`` of ``theta`` holds node ``j``'s coefficients."""

    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        beta = np.array(self.beta, dtype=float).reshape(-1)
        n = beta.size
        if theta.shape != (n, n):
            raise DimensionError(f"theta has shape {theta.shape}, expected {(n, n)}")
        if np.any(np.diag(theta) != 0):
            raise InvalidParameterError("theta must have a zero diagonal")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.beta.size


def _binary(data) -> np.ndarray:
    b = data.b if isinstance(data, BipartiteData) else np.asarray(data, dtype=float)
    if b.ndim != 2:
        raise DimensionError("data must be an n x m matrix")
    if not np.all((b == 0) | (b == 1)):
        raise DomainError("pseudolikelihood needs binary (0/1) data")
    return b


def _softplus(eta: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, eta)


def pseudo_loglik(data, params: PseudoParams) -> float:
    """Sum over nodes and columns of ``log P(B_jk | B_{-j,k})``."""
    b = _binary(data)
    if params.n != b.shape[0]:
        raise DimensionError(f"data has {b.shape[0]} rows, parameters have n={params.n}")
    eta = params.beta[:, None] + params.theta.T @ b
    return float(np.sum(b * eta - _softplus(eta)))


def _node_loss(y, x, coef, pen):
    """Mean negative log-likelihood plus penalty; ``coef[0]`` is the intercept."""
    eta = coef[0] + x @ coef[1:]
    return float(np.mean(_softplus(eta) - y * eta)) + float(pen @ np.abs(coef))


def _kkt(grad, coef, pen, capped_ok):
    resid = np.where(coef == 0, np.maximum(np.abs(grad) - pen, 0.0),
                     np.abs(grad + pen * np.sign(coef)))
    # a coefficient held at the cap is optimal when the loss still pushes outward
    resid[capped_ok] = 0.0
    return float(resid.max(initial=0.0))


def _fit_logistic(y, x, pen, coef, tol, max_iter):
    """Proximal Newton for one node.

    Each outer step minimizes the penalized quadratic model of the loss by
    coordinate descent and then backtracks along the resulting direction.
    Coefficients are confined to ``[-50, 50]``.
    """
    m, p = x.shape
    xt = np.hstack([np.ones((m, 1)), x])
    capped = False
    resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        eta = xt @ coef
        prob = expit(eta)
        grad = xt.T @ (prob - y) / m
        at_cap = np.abs(coef) >= COEF_CAP
        outward = at_cap & (np.sign(coef) * -(grad + pen * np.sign(coef)) > 0)
        resid = _kkt(grad, coef, pen, outward)
        if resid <= tol:
            break
        wts = prob * (1.0 - prob)
        hess = (xt * wts[:, None]).T @ xt / m
        hess[np.diag_indices_from(hess)] += 1e-10
        target = coef.copy()
        linear = grad - hess @ coef
        quadratic_lasso_cd(np.ascontiguousarray(hess), np.ascontiguousarray(linear),
                           np.ascontiguousarray(pen), target, tol / 10, 1000)
        direction = np.clip(target, -COEF_CAP, COEF_CAP) - coef
        base = _node_loss(y, x, coef, pen)
        decrease = grad @ direction + pen @ (np.abs(coef + direction) - np.abs(coef))
        step = 1.0
        while step > 1e-12:
            trial = coef + step * direction
            if _node_loss(y, x, trial, pen) <= base + 1e-4 * step * min(decrease, 0.0):
                break
            step *= 0.5
        else:
            break
        coef = coef + step * direction
        if np.any(np.abs(coef) >= COEF_CAP - 1e-12):
            capped = True
    return coef, resid, it, capped


def lasso_logistic_node(data, j: int, weights=None, lam: float = 0.1, tol: float = 1e-7,
                        max_iter: int = 100, free=None, init=None) -> NodewiseFit:
    """Penalized logistic regression of row ``j`` on the remaining rows.

    Parameters
    ----------
    data : BipartiteData or (n, m) array of 0/1
    j : int
        Response node.
    weights : (n, n) array, optional
        Column ``j`` gives the per-coefficient penalty weights (clamped at 0).
    lam : float
    tol : float
        Target KKT residual of the node problem.
    free : (n,) bool array, optional
        Coefficients allowed to be non-zero; the rest are fixed at 0.
    init : (theta_col, beta_j), optional
        Warm start.

    Returns
    -------
    NodewiseFit
        The intercept is unpenalized.  Coefficients reaching ``|50|`` are
        held there and a :class:`SeparabilityWarning` is issued.
    """
    b = _binary(data)
    n, m = b.shape
    if not 0 <= j < n:
        raise InvalidParameterError(f"node index {j} out of range for n={n}")
    if lam < 0:
        raise InvalidParameterError(f"lambda must be non-negative, got {lam}")
    omega = np.ones(n) if weights is None else np.maximum(np.asarray(weights, dtype=float)[:, j], 0.0)
    active = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool).copy()
    active[j] = False
    idx = np.nonzero(active)[0]
    y = b[j]
    x = b[idx].T
    pen = np.concatenate([[0.0], lam * omega[idx]])
    coef = np.zeros(idx.size + 1)
    if init is not None:
        coef[0] = init[1]
        coef[1:] = np.asarray(init[0], dtype=float)[idx]
    if np.all(y == y[0]):
        # the likelihood increases without bound in the intercept; penalized slopes stay at 0
        coef[:] = 0.0
        coef[0] = COEF_CAP if y[0] == 1 else -COEF_CAP
        grad = np.concatenate([[0.0], x.T @ (expit(coef[0]) - y) / m])
        resid, it, capped = _kkt(grad, coef, pen, np.zeros(coef.size, dtype=bool)), 0, True
    else:
        coef, resid, it, capped = _fit_logistic(y, x, pen, coef, tol, max_iter)
    if capped:
        warnings.warn(f"node {j}: coefficient reached the +/-{COEF_CAP:g} cap (separable data)",
                      SeparabilityWarning, stacklevel=2)
    theta_col = np.zeros(n)
    theta_col[idx] = coef[1:]
    return NodewiseFit(theta_col, float(coef[0]), -_node_loss(y, x, coef, pen), resid, it, capped)


def _combine(fits: list[NodewiseFit]) -> PseudoParams:
    theta = np.column_stack([f.theta_col for f in fits])
    beta = np.array([f.beta_j for f in fits])
    theta = (theta + theta.T) / 2
    return PseudoParams(theta, beta)


def _all_nodes(b, weights, lam, tol, free_mask, init: PseudoParams | None):
    fits = []
    for j in range(b.shape[0]):
        start = None if init is None else (init.theta[:, j], init.beta[j])
        try:
            fits.append(lasso_logistic_node(b, j, weights, lam, tol,
                                            free=None if free_mask is None else free_mask[:, j],
                                            init=start))
        except BipmatchError as exc:
            raise type(exc)(f"node {j}: {exc}") from exc
    return fits


def fit_pseudo_all_nodes(data, weights=None, lam: float = 0.1, tol: float = 1e-7,
                         init: PseudoParams | None = None) -> PseudoParams:
    """Nodewise fits for every node, symmetrized by averaging ``Theta_ij`` and ``Theta_ji``."""
    b = _binary(data)
    return _combine(_all_nodes(b, weights, lam, tol, None, init))


def constrained_pseudo_mle(data, support, tol: float = 1e-7) -> PseudoParams:
    """Unpenalized nodewise fits with coefficients outside ``support`` fixed at zero."""
    b = _binary(data)
    n = b.shape[0]
    mask = np.asarray(support.adj if hasattr(support, "adj") else support) != 0
    if mask.shape != (n, n):
        raise DimensionError(f"support has shape {mask.shape}, expected {(n, n)}")
    if not np.array_equal(mask, mask.T):
        raise InvalidParameterError("support must be symmetric")
    return _combine(_all_nodes(b, None, 0.0, tol, mask, None))
