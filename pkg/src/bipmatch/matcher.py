"""Joint estimation of the matching permutation and the MRF parameters.

For every ``lam`` on the grid the matcher alternates

1. a penalized fit of ``Theta`` with weights ``omega = max(0, 1 - D^T A D)``
   (weighted graphical lasso for Gaussian data, nodewise logistic lasso for
   Ising data), and
2. a Frank-Wolfe step that moves ``D`` towards agreement between ``D^T A D``
   and ``|Theta|``, followed by projection onto the permutations.  From the
   second iteration on, Frank-Wolfe also runs from the barycenter and the
   better of the two end points is kept.

Every projected permutation becomes a candidate.  Candidates are ranked by the
profile likelihood of the model whose support is fixed to ``P^T A P``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .assign import seeded_faq_step
from .errors import BipmatchError, DimensionError, InvalidParameterError, MatchError, ModelError
from .gauss_fit import (constrained_gaussian_mle, gaussian_profile_loss, sample_covariance,
                        weighted_graphical_lasso)
from .graphs import DoublyStochastic, Permutation, SeedSet, UnipartiteGraph, permute_adjacency
from .ising_fit import constrained_pseudo_mle, fit_pseudo_all_nodes, pseudo_loglik
from .models import BipartiteData, Family

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(float(v) for v in np.logspace(-2.5, -0.5, 10))


@dataclass(frozen=True)
class MatchConfig:
    lambda_grid: tuple[float, ...] = DEFAULT_GRID
    max_outer: int = 20
    fw_max: int = 30
    fw_tol: float = 1e-6
    conv_tol: float = 1e-4
    seeds: SeedSet | None = None
    rng_seed: int = 0

    def __post_init__(self):
        grid = tuple(float(v) for v in np.atleast_1d(self.lambda_grid))
        if not grid:
            raise InvalidParameterError("lambda grid must not be empty")
        if any(not np.isfinite(v) or v <= 0 for v in grid):
            raise InvalidParameterError("lambda grid values must be finite and positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InvalidParameterError("lambda grid must be strictly increasing")
        if self.max_outer < 1 or self.fw_max < 1:
            raise InvalidParameterError("max_outer and fw_max must be positive")
        object.__setattr__(self, "lambda_grid", grid)
        if self.seeds is None:
            object.__setattr__(self, "seeds", SeedSet.empty())


@dataclass
class TraceRecord:
    """One outer iteration ``t`` for grid index ``s``.

    ``objective_fit`` and ``objective_step`` are the penalized objective after
    the parameter half-step and after the assignment half-step.
    """

    s: int
    lam: float
    t: int
    loss: float = float("nan")
    objective_fit: float = float("nan")
    objective_step: float = float("nan")
    perm: Permutation | None = None
    converged: bool = False
    error: str | None = None


@dataclass
class MatchResult:
    p_hat: Permutation
    theta_hat: np.ndarray
    beta_hat: np.ndarray | None
    lambda_star: float
    selection_score: float
    family: Family
    trace: list[TraceRecord] = field(default_factory=list)
    candidates: list[tuple[Permutation, float]] = field(default_factory=list)

    def failed_lambdas(self) -> list[float]:
        return sorted({r.lam for r in self.trace if r.error is not None})


def penalty_weights(graph, d) -> np.ndarray:
    """``max(0, 1 - D^T A D)`` with a zero diagonal."""
    adj = graph.adj if isinstance(graph, UnipartiteGraph) else np.asarray(graph, dtype=float)
    d = d.d if isinstance(d, DoublyStochastic) else np.asarray(d, dtype=float)
    omega = np.maximum(1.0 - d.T @ adj @ d, 0.0)
    omega = (omega + omega.T) / 2
    np.fill_diagonal(omega, 0.0)
    return omega


def _abs_offdiag(theta: np.ndarray) -> np.ndarray:
    out = np.abs(theta)
    out = (out + out.T) / 2
    np.fill_diagonal(out, 0.0)
    return out


def _initial_d(n: int, seeds: SeedSet) -> np.ndarray:
    d = np.zeros((n, n))
    free_a = np.setdiff1d(np.arange(n), seeds.a_indices)
    free_b = np.setdiff1d(np.arange(n), seeds.b_indices)
    if len(seeds):
        d[seeds.a_indices, seeds.b_indices] = 1.0
    if free_a.size:
        d[np.ix_(free_a, free_b)] = 1.0 / free_a.size
    return d


class _Scorer:
    """Constrained profile likelihood of candidate permutations, cached by support."""

    def __init__(self, graph: UnipartiteGraph, data: BipartiteData, family: Family):
        self.adj = graph.adj
        self.data = data
        self.family = family
        self.cov = sample_covariance(data) if family is Family.GAUSSIAN else None
        self.cache: dict[bytes, tuple[float, np.ndarray, np.ndarray | None]] = {}

    def fit(self, perm: Permutation):
        support = permute_adjacency(self.adj, perm.map) != 0
        key = np.packbits(support).tobytes()
        hit = self.cache.get(key)
        if hit is None:
            if self.family is Family.GAUSSIAN:
                est = constrained_gaussian_mle(self.cov, support)
                theta = est.theta_hat
                hit = (gaussian_profile_loss(theta, self.cov), theta, theta @ self.cov.mu_hat)
            else:
                params = constrained_pseudo_mle(self.data, support)
                hit = (pseudo_loglik(self.data, params), params.theta, params.beta)
            self.cache[key] = hit
        return hit

    def score(self, perm: Permutation) -> float:
        return self.fit(perm)[0]


def _check_inputs(graph: UnipartiteGraph, data: BipartiteData, cfg: MatchConfig) -> None:
    if graph.n != data.n:
        raise DimensionError(f"graph has {graph.n} vertices, data has {data.n} rows")
    cfg.seeds.check_size(graph.n)


def evaluate_candidates(graph: UnipartiteGraph, data: BipartiteData, candidates, family=None,
                        _scorer: _Scorer | None = None) -> list[tuple[Permutation, float]]:
    """Deduplicate and score candidates; best first, ties in discovery order."""
    family = data.family if family is None else Family.parse(family)
    candidates = list(candidates)
    if not candidates:
        raise InvalidParameterError("candidate list must not be empty")
    scorer = _scorer or _Scorer(graph, data, family)
    unique: list[Permutation] = []
    seen = set()
    for perm in candidates:
        if perm not in seen:
            seen.add(perm)
            unique.append(perm)
    scored = [(perm, scorer.score(perm), k) for k, perm in enumerate(unique)]
    scored.sort(key=lambda item: (-item[1], item[2]))
    return [(perm, score) for perm, score, _ in scored]


def _d_step(adj, weights, seeds: SeedSet, d: np.ndarray, cfg: MatchConfig, restart: bool):
    """Frank-Wolfe from the current ``D`` and, if ``restart``, from the barycenter; keep the higher objective.

    The warm start alone never lowers the penalized objective but tends to
    stay at the previous permutation; the barycenter start explores.
    """
    step = seeded_faq_step(adj, weights, seeds, d, max_fw=cfg.fw_max, tol=cfg.fw_tol)
    if restart:
        fresh = seeded_faq_step(adj, weights, seeds, None, max_fw=cfg.fw_max, tol=cfg.fw_tol)
        if fresh.objective > step.objective:
            step = fresh
    return step


def _run(graph: UnipartiteGraph, data: BipartiteData, cfg: MatchConfig, family: Family) -> MatchResult:
    _check_inputs(graph, data, cfg)
    adj = graph.adj
    n = graph.n
    seeds = cfg.seeds
    cov = sample_covariance(data) if family is Family.GAUSSIAN else None
    trace: list[TraceRecord] = []
    discovered: list[Permutation] = []
    first_lambda: dict[Permutation, float] = {}

    for s, lam in enumerate(cfg.lambda_grid):
        d = _initial_d(n, seeds)
        prev_loss = None
        theta_prev = None
        pseudo_prev = None
        for t in range(1, cfg.max_outer + 1):
            rec = TraceRecord(s, lam, t)
            trace.append(rec)
            try:
                omega = penalty_weights(adj, d)
                if family is Family.GAUSSIAN:
                    est = weighted_graphical_lasso(cov, omega, lam, theta0=theta_prev)
                    theta = est.theta_hat
                    theta_prev = theta
                    loss = gaussian_profile_loss(theta, cov)
                else:
                    pseudo_prev = fit_pseudo_all_nodes(data, omega, lam, init=pseudo_prev)
                    theta = pseudo_prev.theta
                    loss = pseudo_loglik(data, pseudo_prev)
                weights_abs = _abs_offdiag(theta)
                base = loss if family is Family.GAUSSIAN else loss / data.m
                rec.loss = loss
                rec.objective_fit = base - lam * float(np.sum(omega * weights_abs))
                step = _d_step(adj, weights_abs, seeds, d, cfg, restart=t > 1)
                d = step.d.d
                rec.objective_step = base - lam * float(np.sum(penalty_weights(adj, d) * weights_abs))
                rec.perm = step.projected
                if rec.perm not in first_lambda:
                    first_lambda[rec.perm] = lam
                    discovered.append(rec.perm)
                rec.converged = prev_loss is not None and abs(loss - prev_loss) < cfg.conv_tol
                prev_loss = loss
            except (BipmatchError, np.linalg.LinAlgError, FloatingPointError) as exc:
                rec.error = f"{type(exc).__name__}: {exc}"
                log.warning("lambda=%g failed at iteration %d: %s", lam, t, rec.error)
                break
            if rec.converged:
                break

    if not discovered:
        errors = sorted({r.error for r in trace if r.error})
        raise MatchError("matching failed for every lambda: " + "; ".join(errors))
    scorer = _Scorer(graph, data, family)
    ranked = evaluate_candidates(graph, data, discovered, family, _scorer=scorer)
    p_hat, score = ranked[0]
    _, theta_hat, beta_hat = scorer.fit(p_hat)
    return MatchResult(p_hat, theta_hat, beta_hat, first_lambda[p_hat], score, family, trace, ranked)


def match_invcov(graph: UnipartiteGraph, data: BipartiteData, cfg: MatchConfig | None = None) -> MatchResult:
    """Match through penalized inverse covariance estimation (Gaussian data)."""
    cfg = cfg or MatchConfig()
    if data.m < 2:
        raise DimensionError("inverse covariance matching needs at least two columns")
    return _run(graph, data, cfg, Family.GAUSSIAN)


def match_pseudo(graph: UnipartiteGraph, data: BipartiteData, cfg: MatchConfig | None = None) -> MatchResult:
    """Match through penalized pseudolikelihood (binary data)."""
    cfg = cfg or MatchConfig()
    if data.family is not Family.ISING:
        raise ModelError("pseudolikelihood matching needs binary Ising data")
    return _run(graph, data, cfg, Family.ISING)


def selection_score(graph: UnipartiteGraph, data: BipartiteData, perm: Permutation, family=None) -> float:
    """Profile score of a single permutation, recomputed from scratch."""
    family = data.family if family is None else Family.parse(family)
    return _Scorer(graph, data, family).score(perm)

