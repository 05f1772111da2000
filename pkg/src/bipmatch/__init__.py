"""Matching a unipartite graph to a bipartite network with Markov random field models."""

from .assign import (QapStepResult, faq_step, lap_solve, project_to_permutation, qap_objective,
                     seeded_faq_step)
from .baselines import (CollapsedGraph, brute_force_collapsed, collapse, collapse_and_match,
                        correlation_matrix, covariance_graph, glasso_edges, mb_edges,
                        one_mode_projection)
from .errors import *  # noqa: F401,F403
from .gauss_fit import (CovarianceEstimate, PrecisionEstimate, constrained_gaussian_mle,
                        gaussian_profile_loss, sample_covariance, weighted_graphical_lasso)
from .graphs import (DoublyStochastic, Permutation, SeedSet, UnipartiteGraph, barycenter,
                     chain_graph, compose, direct_sum, er_graph, permute_graph)
from .ising_fit import (NodewiseFit, PseudoParams, constrained_pseudo_mle, fit_pseudo_all_nodes,
                        lasso_logistic_node, pseudo_loglik)
from .matcher import (MatchConfig, MatchResult, evaluate_candidates, match_invcov, match_pseudo,
                      selection_score)
from .metrics import ErrorReport, edge_confusion, edge_error, error_report, vertex_error
from .models import (BipartiteData, Family, MrfParams, brute_force_match, constrained_ising_mle,
                     exact_ising_distribution, exact_loglik, gaussian_sample, ising_gibbs_sample,
                     restricted_profile_loglik, restricted_profile_theta)

__version__ = "0.1.0"
