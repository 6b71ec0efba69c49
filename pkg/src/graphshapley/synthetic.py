"""Seeded synthetic homophily MRFs for evaluation."""

from __future__ import annotations

from collections import deque

import networkx as nx
import numpy as np

from .errors import ValidationError
from .mrf import Mrf

KINDS = ("tree", "erdos-renyi", "small-world")


def homophily_potential(c: int, strength: float) -> np.ndarray:
    """``strength`` on the diagonal, the remainder spread evenly off it."""
    if not 0 <= strength <= 1:
        raise ValidationError(f"homophily strength must lie in [0, 1], got {strength}")
    mat = np.full((c, c), (1.0 - strength) / (c - 1))
    np.fill_diagonal(mat, strength)
    return mat


def _topology(kind: str, n: int, rng: np.random.Generator, mean_degree: float) -> nx.Graph:
    seed = int(rng.integers(2**31 - 1))
    if kind == "tree":
        g = nx.Graph()
        g.add_nodes_from(range(n))
        # random recursive tree: node i hangs off a uniformly chosen earlier node
        for i in range(1, n):
            g.add_edge(int(rng.integers(i)), i)
        return g
    if kind == "erdos-renyi":
        return nx.gnp_random_graph(n, min(1.0, mean_degree / (n - 1)), seed=seed)
    if kind == "small-world":
        k = max(2, int(round(mean_degree)) // 2 * 2)
        if k >= n:
            raise ValidationError(f"small-world needs n > {k}")
        return nx.watts_strogatz_graph(n, k, 0.1, seed=seed)
    raise ValidationError(f"unknown graph kind {kind!r}; expected one of {KINDS}")


def _planted_labels(g: nx.Graph, c: int, strength: float, rng: np.random.Generator) -> np.ndarray:
    # labels spread along BFS trees so neighbours tend to agree, as in homophilous data
    labels = np.full(g.number_of_nodes(), -1)
    for root in sorted(g.nodes):
        if labels[root] >= 0:
            continue
        labels[root] = rng.integers(c)
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in sorted(g.neighbors(v)):
                if labels[u] < 0:
                    labels[u] = labels[v] if rng.random() < strength else rng.integers(c)
                    queue.append(u)
    return labels


def generate_synthetic(
    kind: str,
    n: int,
    c: int,
    homophily: float = 0.9,
    biased_prior_fraction: float = 0.8,
    seed: int = 0,
    *,
    bias: float = 0.9,
    mean_degree: float = 3.0,
) -> Mrf:
    """Random graph of the given kind with a shared homophily potential.

    ``biased_prior_fraction`` of the nodes get ``bias`` mass on a planted class
    (the rest spread evenly); the others keep the uniform prior.
    """
    if n < 2 or c < 2:
        raise ValidationError(f"need n >= 2 and c >= 2, got n={n}, c={c}")
    if not 0 <= biased_prior_fraction <= 1:
        raise ValidationError("biased_prior_fraction must lie in [0, 1]")
    if not 1.0 / c <= bias <= 1:
        raise ValidationError(f"bias must lie in [1/c, 1], got {bias}")
    rng = np.random.default_rng(seed)
    g = _topology(kind, n, rng, mean_degree)
    psi = homophily_potential(c, homophily)
    labels = _planted_labels(g, c, max(homophily, 1.0 / c), rng)

    priors = np.full((n, c), 1.0 / c)
    n_biased = int(round(biased_prior_fraction * n))
    for i in rng.permutation(n)[:n_biased]:
        priors[i] = (1.0 - bias) / (c - 1)
        priors[i, labels[i]] = bias
    edges = sorted((min(a, b), max(a, b)) for a, b in g.edges)
    return Mrf(priors, edges, psi)


def uniform_prior_nodes(mrf: Mrf) -> list[int]:
    c = mrf.class_count
    return [i for i in range(mrf.node_count) if np.allclose(mrf.priors[i], 1.0 / c, atol=0)]
