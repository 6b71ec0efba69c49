"""Sum-product loopy belief propagation with warm starts.

Sweeps are synchronous: every message recomputed in sweep ``t`` reads the values
from sweep ``t - 1``. Only messages whose inputs changed are recomputed, which
is what makes warm starts cheap: after one edge is added to a converged graph,
only the messages downstream of that edge ever get touched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .mrf import Edge, Mrf

MESSAGE_FLOOR = 1e-300

MessageSet = dict[Edge, np.ndarray]


@dataclass(frozen=True)
class BpConfig:
    tolerance: float = 1e-6
    max_iterations: int = 200
    damping: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ContractError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ContractError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 <= self.damping < 1:
            raise ContractError(f"damping must lie in [0, 1), got {self.damping}")


@dataclass
class BpResult:
    messages: MessageSet
    converged: bool
    iterations_used: int
    message_updates: int
    max_change: float = 0.0


def _is_forest(nodes: set[int], edges: Sequence[Edge]) -> bool:
    parent = {v: v for v in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def run_bp(
    mrf: Mrf,
    config: BpConfig | None = None,
    warm_start: Mapping[Edge, np.ndarray] | None = None,
    *,
    edges: Sequence[Edge] | None = None,
    stale: Iterable[int] | None = None,
) -> BpResult:
    """Iterate the sum-product message update to a fixed point.

    Parameters
    ----------
    edges
        Restrict message passing to this subset of ``mrf.edges`` (either
        orientation). Defaults to the whole graph.
    warm_start
        Initial messages; any directed edge it lacks starts uniform.
    stale
        Nodes whose outgoing messages must be recomputed in the first sweep even
        though ``warm_start`` provides them (e.g. after changing their prior).
        ``None`` recomputes everything in the first sweep; an empty iterable
        trusts ``warm_start`` and only recomputes the messages it lacks.

    On acyclic graphs without damping the sweep continues until no message
    changes at all, which is reached after at most diameter + 1 sweeps and
    gives exact marginals. Otherwise it stops once the largest per-entry change
    in a sweep is at most ``config.tolerance``.
    """
    config = config or BpConfig()
    active = list(mrf.edges) if edges is None else list(edges)
    nbrs: dict[int, list[int]] = {}
    for a, b in active:
        if not mrf.has_edge(a, b):
            raise ContractError(f"({a},{b}) is not an edge of the model")
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    for v in nbrs:
        nbrs[v].sort()
    keys = sorted([(a, b) for a, b in active] + [(b, a) for a, b in active])
    c = mrf.class_count
    flat = np.full(c, 1.0 / c)

    msgs: MessageSet = {}
    missing = []
    if warm_start:
        extra = set(warm_start) - set(keys)
        if extra:
            raise ContractError(f"warm start has messages on inactive edges: {sorted(extra)[:5]}")
    for key in keys:
        if warm_start is not None and key in warm_start:
            msgs[key] = warm_start[key]
        else:
            msgs[key] = flat
            missing.append(key)

    if stale is None or warm_start is None:
        dirty = set(keys)
    else:
        dirty = set(missing)
        for j in stale:
            for i in nbrs.get(j, ()):
                dirty.add((j, i))

    exact = config.damping == 0 and _is_forest(set(nbrs), active)
    priors = mrf.priors
    psi = mrf._psi
    damping = config.damping
    tolerance = config.tolerance
    iterations = updates = 0
    max_change = 0.0
    converged = not dirty

    while dirty:
        if iterations >= config.max_iterations:
            break
        iterations += 1
        fresh = []
        for key in sorted(dirty):
            j, i = key
            prod = priors[j]
            for k in nbrs[j]:
                if k != i:
                    prod = prod * msgs[(k, j)]
            m = psi[(i, j)].dot(prod)
            np.maximum(m, MESSAGE_FLOOR, out=m)
            total = m.sum()
            if not 0 < total < np.inf:
                raise NumericalError(f"message {j}->{i} is numerically annihilated")
            m /= total
            if damping:
                m = (1 - damping) * m + damping * msgs[key]
            fresh.append((key, m))
        updates += len(fresh)

        changed = []
        max_change = 0.0
        if exact:
            # only "did it move at all" matters here
            for key, m in fresh:
                if (m != msgs[key]).any():
                    changed.append(key)
                msgs[key] = m
        else:
            for key, m in fresh:
                delta = float(np.abs(m - msgs[key]).max())
                if delta > 0:
                    changed.append(key)
                    if delta > max_change:
                        max_change = delta
                msgs[key] = m

        if not exact and max_change <= tolerance:
            converged = True
            break
        dirty = set()
        for j, i in changed:
            for k in nbrs[i]:
                if k != j:
                    dirty.add((i, k))
        if damping:
            dirty.update(changed)
        if not dirty:
            converged = True

    return BpResult(msgs, converged, iterations, updates, max_change)


def compute_belief(mrf: Mrf, messages: Mapping[Edge, np.ndarray], node: int) -> np.ndarray:
    """Belief of ``node``: its prior times every incoming message present, normalized."""
    b = mrf.priors[node].copy()
    for j in mrf.adjacency[node]:
        m = messages.get((j, node))
        if m is not None:
            b *= m
    total = b.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericalError(f"belief of node {node} underflows to zero")
    return b / total


def all_beliefs(mrf: Mrf, messages: Mapping[Edge, np.ndarray]) -> np.ndarray:
    return np.array([compute_belief(mrf, messages, i) for i in range(mrf.node_count)])


def adaptive_bp(
    mrf: Mrf,
    base_edges: Sequence[Edge],
    base_messages: Mapping[Edge, np.ndarray],
    new_edge: Edge,
    config: BpConfig | None = None,
) -> BpResult:
    """Grow a converged subgraph by ``new_edge = (v, u)`` and re-converge.

    Messages converged on ``base_edges`` seed the run; the two new directed
    messages start uniform and only their downstream effects are recomputed.
    """
    v, u = new_edge
    if base_edges:
        touched = {x for e in base_edges for x in e}
        if v not in touched:
            raise ContractError(f"new edge ({v},{u}) does not attach to the subgraph")
    return run_bp(mrf, config, base_messages, edges=[*base_edges, new_edge], stale=())
