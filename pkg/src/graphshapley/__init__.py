"""Shapley-value explanations of belief propagation on discrete Markov random fields."""

__version__ = "0.1.0"

from .bp import BpConfig, BpResult, adaptive_bp, compute_belief, run_bp
from .coalitions import (
    Coalition,
    EnumConfig,
    brute_force_coalitions,
    canonical_key,
    coalition_minus,
    coalitions_containing,
    enumerate_coalitions,
)
from .explainer import (
    CoalitionEvaluator,
    ExplanationResult,
    characteristic,
    evaluate_coalition,
    explain,
    marginal_contribution,
)
from .mrf import Mrf, brute_force_marginal, brute_force_marginals, degree_sorted_neighbors, load_mrf, save_mrf, shortest_path_distance

__all__ = [
    "BpConfig", "BpResult", "Coalition", "CoalitionEvaluator", "EnumConfig", "ExplanationResult", "Mrf",
    "adaptive_bp", "brute_force_coalitions", "brute_force_marginal", "canonical_key",
    "brute_force_marginals", "characteristic", "coalition_minus", "coalitions_containing", "compute_belief",
    "degree_sorted_neighbors", "enumerate_coalitions", "evaluate_coalition", "explain",
    "marginal_contribution", "load_mrf", "run_bp",
    "save_mrf", "shortest_path_distance",
]
