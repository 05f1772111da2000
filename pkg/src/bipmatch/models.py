"""Ising and Gaussian Markov random fields for the columns of ``B``.

Ising states live in ``{0, 1}^n`` with joint

    P(x) = exp(beta^T x + x^T Theta x) / Z(Theta, beta),

where ``x^T Theta x`` sums ordered pairs of a symmetric, zero-diagonal
``Theta``.  The single-site conditional is therefore
``logistic(beta_i + 2 sum_j Theta_ij x_j)``.

Gaussian columns are ``N(mu, Theta^{-1})`` with ``mu = Theta^{-1} beta``.

Exhaustive oracles (enumeration of ``2^n`` states, ``n!`` permutations) are
provided for small instances.
"""

from __future__ import annotations

import enum
import itertools
import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, logsumexp

from .errors import (CapacityError, ConvergenceWarning, DegenerateModelError, DimensionError,
                     FactorizationError, InvalidParameterError, ModelError)
from .graphs import Permutation, UnipartiteGraph, permute_adjacency

log = logging.getLogger(__name__)

MAX_ENUM_N = 20
MAX_BRUTE_N = 7
THETA_CAP = 50.0
_CHUNK = 1 << 16


class Family(str, enum.Enum):
    ISING = "ising"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, Family):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ModelError(f"unknown model family {value!r}; expected 'ising' or 'gaussian'") from None


def cholesky_checked(theta: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; on failure report the first non-positive leading minor."""
    try:
        return np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        pass
    for k in range(1, theta.shape[0] + 1):
        try:
            np.linalg.cholesky(theta[:k, :k])
        except np.linalg.LinAlgError:
            raise FactorizationError(
                f"matrix is not positive definite: leading minor of order {k} is not positive"
            ) from None
    raise FactorizationError("matrix is not positive definite")


@dataclass(frozen=True, eq=False)
class MrfParams:
    """Interaction matrix ``theta`` and node effects ``beta`` of an Ising or Gaussian MRF."""

    family: Family
    theta: np.ndarray
    beta: np.ndarray | None = None

    def __post_init__(self):
        family = Family.parse(self.family)
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise DimensionError(f"theta must be square, got shape {theta.shape}")
        n = theta.shape[0]
        if not np.all(np.isfinite(theta)):
            raise InvalidParameterError("theta has non-finite entries")
        if not np.allclose(theta, theta.T, rtol=0, atol=1e-12):
            raise InvalidParameterError("theta must be symmetric")
        theta = (theta + theta.T) / 2
        beta = np.zeros(n) if self.beta is None else np.array(self.beta, dtype=float).reshape(-1)
        if beta.shape != (n,):
            raise DimensionError(f"beta must have length {n}, got {beta.shape}")
        if family is Family.ISING and np.any(np.diag(theta) != 0):
            raise ModelError("Ising theta must have a zero diagonal")
        if family is Family.GAUSSIAN:
            cholesky_checked(theta)
        theta.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def mu(self) -> np.ndarray:
        """Gaussian mean ``Theta^{-1} beta``."""
        if self.family is not Family.GAUSSIAN:
            raise ModelError("mu is defined for the Gaussian family only")
        return np.linalg.solve(self.theta, self.beta)

    @classmethod
    def gaussian_from_mean(cls, theta, mu) -> "MrfParams":
        theta = np.asarray(theta, dtype=float)
        return cls(Family.GAUSSIAN, theta, theta @ np.asarray(mu, dtype=float))


@dataclass(frozen=True, eq=False)
class BipartiteData:
    """``n x m`` matrix whose columns are i.i.d. draws of the MRF."""

    b: np.ndarray
    family: Family

    def __post_init__(self):
        family = Family.parse(self.family)
        b = np.array(self.b, dtype=float)
        if b.ndim != 2:
            raise DimensionError(f"bipartite matrix must be two-dimensional, got shape {b.shape}")
        if b.shape[1] < 1:
            raise DimensionError("bipartite matrix needs at least one column")
        if not np.all(np.isfinite(b)):
            raise InvalidParameterError("bipartite matrix has non-finite entries")
        if family is Family.ISING and not np.all((b == 0) | (b == 1)):
            raise ModelError("Ising data must be binary (0/1)")
        b.setflags(write=False)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    def permuted(self, perm: Permutation) -> "BipartiteData":
        """Rows relabeled so row ``k`` moves to ``perm.map[k]``."""
        out = np.empty_like(self.b)
        out[perm.map] = self.b
        return BipartiteData(out, self.family)


def _require(params: MrfParams, family: Family) -> None:
    if params.family is not family:
        raise ModelError(f"expected {family.value} parameters, got {params.family.value}")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def ising_gibbs_sample(params: MrfParams, m: int, burn_in: int = 500, thin: int = 5,
                       seed=None) -> BipartiteData:
    """Draw ``m`` columns from the Ising joint by systematic-scan Gibbs sampling.

    Each column is its own chain, started from a uniform random state and run
    for ``burn_in + max(thin, 1)`` full sweeps; the final state is returned.
    All chains advance together as one vectorized update per coordinate.
    """
    _require(params, Family.ISING)
    if m < 1:
        raise InvalidParameterError(f"m must be positive, got {m}")
    if burn_in < 0 or thin < 0:
        raise InvalidParameterError("burn_in and thin must be non-negative")
    if burn_in == 0:
        log.info("Gibbs sampler running without burn-in")
    rng = np.random.default_rng(seed)
    n = params.n
    theta2 = 2.0 * params.theta
    beta = params.beta
    x = (rng.random((n, m)) < 0.5).astype(float)
    for _ in range(burn_in + max(thin, 1)):
        for i in range(n):
            p = expit(beta[i] + theta2[i] @ x)
            x[i] = rng.random(m) < p
    return BipartiteData(x, Family.ISING)


def gaussian_sample(params: MrfParams, m: int, seed=None) -> BipartiteData:
    """``m`` i.i.d. columns from ``N(mu, Theta^{-1})``.

    With ``Theta = L L^T`` a column is ``mu + L^{-T} z`` for standard normal ``z``.
    """
    _require(params, Family.GAUSSIAN)
    if m < 1:
        raise InvalidParameterError(f"m must be positive, got {m}")
    rng = np.random.default_rng(seed)
    chol = cholesky_checked(params.theta)
    z = rng.standard_normal((params.n, m))
    x = solve_triangular(chol.T, z, lower=False)
    return BipartiteData(x + params.mu[:, None], Family.GAUSSIAN)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def _check_enum(n: int) -> None:
    if n > MAX_ENUM_N:
        raise CapacityError(f"exact enumeration is capped at n={MAX_ENUM_N}, got n={n}")


def state_bits(start: int, stop: int, n: int) -> np.ndarray:
    """Binary states ``start..stop-1`` as rows; bit ``i`` of the index is ``x_i``."""
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(float)


def _energies(theta: np.ndarray, beta: np.ndarray) -> np.ndarray:
    n = theta.shape[0]
    total = 1 << n
    out = np.empty(total)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        x = state_bits(start, stop, n)
        out[start:stop] = x @ beta + np.einsum("si,ij,sj->s", x, theta, x)
    return out


@dataclass(frozen=True)
class IsingDistribution:
    """Full probability table of an Ising model, indexed by binary state."""

    n: int
    probs: np.ndarray
    log_partition: float

    def state(self, index: int) -> np.ndarray:
        return state_bits(index, index + 1, self.n)[0]

    def index_of(self, x) -> int:
        x = np.asarray(x, dtype=np.int64)
        return int((x << np.arange(self.n)).sum())

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """``E[x]`` and ``E[x x^T]``."""
        mean = np.zeros(self.n)
        second = np.zeros((self.n, self.n))
        total = 1 << self.n
        for start in range(0, total, _CHUNK):
            stop = min(total, start + _CHUNK)
            x = state_bits(start, stop, self.n)
            w = self.probs[start:stop]
            mean += w @ x
            second += (x * w[:, None]).T @ x
        return mean, second


def exact_ising_distribution(params: MrfParams) -> IsingDistribution:
    _require(params, Family.ISING)
    _check_enum(params.n)
    energies = _energies(params.theta, params.beta)
    log_z = float(logsumexp(energies))
    probs = np.exp(energies - log_z)
    return IsingDistribution(params.n, probs, log_z)


def exact_loglik(data: BipartiteData, params: MrfParams) -> float:
    """Mean per-column log-likelihood of ``data`` under ``params``."""
    if data.n != params.n:
        raise DimensionError(f"data has {data.n} rows, parameters have n={params.n}")
    if data.family is not params.family:
        raise ModelError("data and parameters belong to different families")
    b = data.b
    if params.family is Family.ISING:
        _check_enum(params.n)
        log_z = float(logsumexp(_energies(params.theta, params.beta)))
        energy = params.beta @ b + np.einsum("ik,ij,jk->k", b, params.theta, b)
        return float(energy.mean() - log_z)
    chol = cholesky_checked(params.theta)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    centered = b - params.mu[:, None]
    quad = np.einsum("ik,ij,jk->k", centered, params.theta, centered)
    return float(-0.5 * params.n * np.log(2 * np.pi) + 0.5 * logdet - 0.5 * quad.mean())


# ---------------------------------------------------------------------------
# restricted one-parameter Ising model
# ---------------------------------------------------------------------------

class RestrictedIsing:
    """Ising model with ``beta = 0`` and ``Theta = theta * W`` for a fixed graph ``W``.

    ``Psi(theta) = log sum_y exp(theta y^T W y)``.  The values ``y^T W y`` are
    invariant under relabeling of ``W``, so one spectrum serves every
    permutation of the same graph.
    """

    def __init__(self, graph: UnipartiteGraph):
        adj = graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)
        n = adj.shape[0]
        _check_enum(n)
        if not np.any(adj):
            raise DegenerateModelError("restricted model needs a non-empty graph")
        u = _energies(adj, np.zeros(n))
        u = np.round(u, 12)
        self.values, self.counts = np.unique(u, return_counts=True)
        self.log_counts = np.log(self.counts)
        self.adj = adj

    def psi(self, theta: float) -> float:
        return float(logsumexp(self.log_counts + theta * self.values))

    def _weights(self, theta: float) -> np.ndarray:
        z = self.log_counts + theta * self.values
        return np.exp(z - logsumexp(z))

    def dpsi(self, theta: float) -> float:
        return float(self._weights(theta) @ self.values)

    def d2psi(self, theta: float) -> float:
        w = self._weights(theta)
        mean = w @ self.values
        return float(w @ (self.values - mean) ** 2)

    def statistic(self, perm: Permutation, data: BipartiteData) -> float:
        """``Tr(P^T A P Btilde)``, the data mean of ``y^T W y`` with ``W = P^T A P``."""
        w = permute_adjacency(self.adj, perm.map)
        b = data.b
        return float(np.einsum("ik,ij,jk->", b, w, b) / data.m)

    def solve(self, target: float, tol: float = 1e-10) -> float:
        """Root of ``Psi'(theta) = target``; ``-inf``/``+inf`` at or beyond the range ends."""
        lo_v, hi_v = self.values[0], self.values[-1]
        eps = 1e-12 * max(1.0, abs(hi_v))
        if target <= lo_v + eps:
            return -np.inf
        if target >= hi_v - eps:
            return np.inf
        lo, hi = -1.0, 1.0
        while self.dpsi(lo) > target:
            lo *= 2
            if lo < -THETA_CAP:
                return -np.inf
        while self.dpsi(hi) < target:
            hi *= 2
            if hi > THETA_CAP:
                return np.inf
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.dpsi(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def profile(self, target: float) -> tuple[float, float]:
        """``(theta_hat, theta_hat * target - Psi(theta_hat))`` with boundary limits."""
        theta = self.solve(target)
        if theta == -np.inf:
            return theta, -float(self.log_counts[0])
        if theta == np.inf:
            return theta, -float(self.log_counts[-1])
        return theta, theta * target - self.psi(theta)


def _ising_only(data: BipartiteData) -> None:
    if data.family is not Family.ISING:
        raise ModelError("restricted model requires Ising data")


def restricted_profile_theta(graph: UnipartiteGraph, perm: Permutation, data: BipartiteData) -> float:
    """Profile MLE of the single interaction weight of the restricted Ising model.

    Returns ``-inf`` or ``+inf`` when the statistic sits at (or the root lies
    beyond ``|theta| = 50`` towards) an end of the attainable range.
    """
    _ising_only(data)
    model = RestrictedIsing(graph)
    return model.solve(model.statistic(perm, data))


def restricted_profile_loglik(graph: UnipartiteGraph, perm: Permutation, data: BipartiteData) -> float:
    """Mean per-column log-likelihood at the profile MLE of the restricted model."""
    _ising_only(data)
    model = RestrictedIsing(graph)
    return model.profile(model.statistic(perm, data))[1]


# ---------------------------------------------------------------------------
# exact support-constrained Ising MLE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactIsingFit:
    params: MrfParams
    loglik: float
    converged: bool
    iterations: int


def constrained_ising_mle(data: BipartiteData, support: np.ndarray, tol: float = 1e-9,
                          max_iter: int = 200) -> ExactIsingFit:
    """Exact MLE of ``(Theta, beta)`` with ``Theta`` zero off ``support`` (Newton on enumeration moments).

    Parameters are capped at ``|.| <= 50``; data on the boundary of the
    marginal polytope (for instance a constant row) drives estimates to the cap.
    """
    _ising_only(data)
    n = data.n
    _check_enum(n)
    support = np.asarray(support, dtype=bool)
    if support.shape != (n, n):
        raise DimensionError(f"support has shape {support.shape}, expected {(n, n)}")
    ii, jj = np.nonzero(np.triu(support | support.T, 1))
    x_all = state_bits(0, 1 << n, n)
    feats = np.hstack([x_all, 2.0 * x_all[:, ii] * x_all[:, jj]])
    b = data.b
    target = np.concatenate([b.mean(axis=1), 2.0 * (b[ii] * b[jj]).mean(axis=1)])

    def objective(par):
        eta = feats @ par
        log_z = logsumexp(eta)
        return float(par @ target - log_z), np.exp(eta - log_z)

    par = np.zeros(feats.shape[1])
    value, probs = objective(par)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mean = probs @ feats
        grad = target - mean
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        centered = feats - mean
        hess = (centered * probs[:, None]).T @ centered
        step = np.linalg.solve(hess + 1e-12 * np.eye(hess.shape[0]), grad)
        t = 1.0
        while True:
            cand = np.clip(par + t * step, -THETA_CAP, THETA_CAP)
            cand_value, cand_probs = objective(cand)
            if cand_value >= value - 1e-14 or t < 1e-10:
                break
            t *= 0.5
        if cand_value <= value + 1e-15 and np.allclose(cand, par):
            break
        par, value, probs = cand, cand_value, cand_probs
    if not converged:
        warnings.warn(f"exact Ising MLE stopped after {it} iterations", ConvergenceWarning, stacklevel=2)
    theta = np.zeros((n, n))
    theta[ii, jj] = theta[jj, ii] = par[n:]
    params = MrfParams(Family.ISING, theta, par[:n])
    return ExactIsingFit(params, value, converged, it)


# ---------------------------------------------------------------------------
# exhaustive matching
# ---------------------------------------------------------------------------

def exhaustive_argmax(graph: UnipartiteGraph, score: Callable[[np.ndarray], float]) -> tuple[Permutation, float]:
    """Best permutation for ``score(P^T A P)`` over all ``n!`` maps, lexicographic ties.

    Scores are cached by the permuted adjacency, so automorphic images share
    one evaluation and tie exactly.
    """
    adj = graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)
    n = adj.shape[0]
    if n > MAX_BRUTE_N:
        raise CapacityError(f"exhaustive matching is capped at n={MAX_BRUTE_N}, got n={n}")
    cache: dict[bytes, float] = {}
    best_map, best = None, -np.inf
    for perm_map in itertools.permutations(range(n)):
        w = permute_adjacency(adj, np.asarray(perm_map, dtype=np.int64))
        key = w.tobytes()
        value = cache.get(key)
        if value is None:
            value = cache[key] = score(w)
        if best_map is None or value > best + 1e-12 * max(1.0, abs(best)):
            best_map, best = perm_map, value
    return Permutation(np.asarray(best_map)), float(best)


def brute_force_match(graph: UnipartiteGraph, data: BipartiteData, family=None,
                      model: str = "restricted") -> Permutation:
    """Permutation maximizing the profile log-likelihood over all ``n!`` candidates.

    Parameters
    ----------
    graph, data : UnipartiteGraph, BipartiteData
    family : {"ising", "gaussian"}, optional
        Defaults to the family of ``data``.
    model : {"restricted", "full"}
        Ising only.  ``"restricted"`` profiles the one-parameter model
        ``Theta = theta * P^T A P``, ``beta = 0``; ``"full"`` uses the exact
        support-constrained MLE of ``(Theta, beta)``.
    """
    return brute_force_search(graph, data, family, model)[0]


def brute_force_search(graph: UnipartiteGraph, data: BipartiteData, family=None,
                       model: str = "restricted") -> tuple[Permutation, float]:
    """As :func:`brute_force_match`, also returning the optimal score."""
    family = data.family if family is None else Family.parse(family)
    if graph.n != data.n:
        raise DimensionError(f"graph has {graph.n} vertices, data has {data.n} rows")
    if graph.n > MAX_BRUTE_N:
        raise CapacityError(f"exhaustive matching is capped at n={MAX_BRUTE_N}, got n={graph.n}")
    if family is Family.GAUSSIAN:
        from .gauss_fit import constrained_gaussian_mle, gaussian_profile_loss, sample_covariance

        cov = sample_covariance(data)

        def score(w):
            return gaussian_profile_loss(constrained_gaussian_mle(cov, w != 0), cov)
    elif model == "restricted":
        restricted = RestrictedIsing(graph)
        b = data.b

        def score(w):
            stat = float(np.einsum("ik,ij,jk->", b, w, b) / data.m)
            return restricted.profile(stat)[1]
    elif model == "full":
        def score(w):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                return constrained_ising_mle(data, w != 0).loglik
    else:
        raise InvalidParameterError(f"model must be 'restricted' or 'full', got {model!r}")
    return exhaustive_argmax(graph, score)
