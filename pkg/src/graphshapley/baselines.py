"""Competing explainers that rank the same explaining variables."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bp import BpConfig, compute_belief, run_bp
from .coalitions import Coalition, EnumConfig
from .errors import ContractError
from .explainer import CoalitionEvaluator, reference_belief, symmetric_kl
from .mrf import Mrf, bfs_distances


@dataclass
class Ranking:
    target: int
    scores: dict[int, float]
    method: str
    seed: int | None = None
    counts: dict[int, int] = field(default_factory=dict)

    @property
    def order(self) -> list[int]:
        return sorted(self.scores, key=lambda i: (-self.scores[i], i))


def from_explanation(result) -> Ranking:
    """Wrap a GraphShapley :class:`ExplanationResult` as a :class:`Ranking`."""
    return Ranking(result.target, result.values(), "graphshapley", counts=result.counts())


def random_ranking(mrf: Mrf, target: int, seed: int = 0) -> Ranking:
    draws = np.random.default_rng(seed).random(mrf.node_count)
    scores = {i: float(draws[i]) for i in range(mrf.node_count) if i != target}
    return Ranking(target, scores, "random", seed)


def pagerank_scores(mrf: Mrf, damping: float = 0.85, tol: float = 1e-10,
                    max_iterations: int = 10_000) -> np.ndarray:
    """PageRank of the undirected graph by power iteration with uniform teleport.

    Isolated nodes redistribute their mass uniformly.
    """
    n = mrf.node_count
    if not mrf.edges:
        return np.full(n, 1.0 / n)
    rows = [a for a, b in mrf.edges] + [b for a, b in mrf.edges]
    cols = [b for a, b in mrf.edges] + [a for a, b in mrf.edges]
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    dangling = deg == 0
    inv = np.where(dangling, 0.0, 1.0 / np.where(dangling, 1.0, deg))
    walk = (sp.diags(inv) @ adj).T.tocsr()   # column-stochastic on non-dangling columns
    rank = np.full(n, 1.0 / n)
    for _ in range(max_iterations):
        new = damping * (walk @ rank + rank[dangling].sum() / n) + (1 - damping) / n
        new /= new.sum()
        if np.abs(new - rank).sum() < tol:
            return new
        rank = new
    return rank


def pagerank_ranking(mrf: Mrf, target: int, damping: float = 0.85, tol: float = 1e-10) -> Ranking:
    pr = pagerank_scores(mrf, damping, tol)
    scores = {i: float(pr[i]) for i in range(mrf.node_count) if i != target}
    return Ranking(target, scores, "pagerank")


def sensitivity_ranking(mrf: Mrf, target: int, bp_config: BpConfig | None = None,
                        reference=None) -> Ranking:
    """Symmetric KL between the target belief before and after flattening each prior."""
    bp_config = bp_config or BpConfig()
    base = run_bp(mrf, bp_config)
    b_ref = compute_belief(mrf, base.messages, target) if reference is None else reference
    c = mrf.class_count
    flat = np.full(c, 1.0 / c)
    reach = bfs_distances(mrf, target)
    scores = {}
    for i in range(mrf.node_count):
        if i == target:
            continue
        if i not in reach or np.array_equal(mrf.priors[i], flat):
            scores[i] = 0.0
            continue
        priors = mrf.priors.copy()
        priors[i] = flat
        perturbed = mrf.with_priors(priors)
        result = run_bp(perturbed, bp_config, base.messages, stale=(i,))
        scores[i] = symmetric_kl(b_ref, compute_belief(perturbed, result.messages, target))
    return Ranking(target, scores, "sensitivity")


def sample_traversal_tree(mrf: Mrf, target: int, enum_config: EnumConfig,
                          rng: np.random.Generator, allowed: set[int] | None = None) -> Coalition:
    """Randomized traversal tree rooted at the target.

    Repeatedly attaches a uniformly chosen frontier edge until the ball of
    admissible nodes is spanned or the edge budget is spent.
    """
    if allowed is None:
        allowed = {u for u, d in bfs_distances(mrf, target).items() if d < enum_config.max_distance}
    coal = Coalition.target_only(target)
    members = {target}
    frontier = [(target, u) for u in mrf.adjacency[target] if u in allowed]
    while frontier and len(coal.edges) < enum_config.max_complexity:
        v, u = frontier.pop(int(rng.integers(len(frontier))))
        if u in members:
            continue
        coal = coal.extend(v, u)
        members.add(u)
        frontier = [(a, b) for a, b in frontier if b != u]
        frontier.extend((u, w) for w in mrf.adjacency[u] if w in allowed and w not in members)
    return coal


def mc_sampling_shapley(mrf: Mrf, target: int, enum_config: EnumConfig | None = None,
                        bp_config: BpConfig | None = None, num_samples: int = 100,
                        seed: int = 0, reference=None) -> Ranking:
    """Average marginal contributions over randomly sampled traversal trees."""
    if num_samples < 1:
        raise ContractError("num_samples must be >= 1")
    enum_config = enum_config or EnumConfig()
    bp_config = bp_config or BpConfig()
    if reference is None:
        reference, _ = reference_belief(mrf, target, bp_config)
    rng = np.random.default_rng(seed)
    allowed = {u for u, d in bfs_distances(mrf, target).items() if d < enum_config.max_distance}
    ev = CoalitionEvaluator(mrf, target, reference, bp_config)
    totals: dict[int, float] = defaultdict(float)
    counts: dict[int, int] = defaultdict(int)
    seen: dict[bytes, dict[int, float]] = {}
    for _ in range(num_samples):
        tree = sample_traversal_tree(mrf, target, enum_config, rng, allowed)
        if tree.is_target_only:
            continue
        mus = seen.get(tree.key)
        if mus is None:
            # replay the tree edge by edge so every evaluation can warm start
            prefix = Coalition.target_only(target)
            for v, u in tree.edges:
                prefix = prefix.extend(v, u)
                ev.enter(prefix)
            mus = {node: ev.marginal_contribution(node, tree)
                   for node in tree.nodes if node != target}
            seen[tree.key] = mus
        for node, mu in mus.items():
            totals[node] += mu
            counts[node] += 1
    scores = {i: (totals[i] / counts[i] if counts[i] else 0.0)
              for i in range(mrf.node_count) if i != target}
    return Ranking(target, scores, "mc-sampling", seed, dict(counts))


METHODS = ("random", "pagerank", "sensitivity", "mc-sampling")
