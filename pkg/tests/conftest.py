import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphshapley import Mrf

HOMOPHILY = np.array([[0.9, 0.1], [0.1, 0.9]])


def triangle_mrf():
    """Target 0 with one informative neighbour (1) and one uninformative one (2)."""
    priors = [[0.5, 0.5], [0.9, 0.1], [0.5, 0.5]]
    return Mrf(priors, [(0, 1), (0, 2), (1, 2)], HOMOPHILY)


def random_priors(rng, n, c):
    p = rng.random((n, c)) + 0.05
    return p / p.sum(axis=1, keepdims=True)


def random_potentials(rng, m, c):
    return rng.random((m, c, c)) + 0.05


def random_tree(rng, n):
    return [(int(rng.integers(i)), i) for i in range(1, n)]


def random_graph(rng, n, m):
    """Connected-ish random simple graph: a random tree plus extra edges up to ``m``."""
    edges = {tuple(sorted(e)) for e in random_tree(rng, n)}
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges]
    rng.shuffle(pairs)
    extra = max(0, min(len(pairs), m - len(edges)))
    return sorted(edges | set(pairs[:extra]))


def random_tree_mrf(seed, n=None, c=None):
    rng = np.random.default_rng(seed)
    c = c or int(rng.choice([2, 3, 4]))
    # keep the dense joint table under the brute-force limit
    n = n or int(rng.integers(2, 12 if c == 4 else 13))
    edges = random_tree(rng, n)
    return Mrf(random_priors(rng, n, c), edges, random_potentials(rng, len(edges), c))


def random_graph_mrf(seed, n, m, c=2):
    rng = np.random.default_rng(seed)
    edges = random_graph(rng, n, m)
    return Mrf(random_priors(rng, n, c), edges, random_potentials(rng, len(edges), c))


@pytest.fixture
def triangle():
    return triangle_mrf()
