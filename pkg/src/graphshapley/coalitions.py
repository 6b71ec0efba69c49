"""Enumeration of connected acyclic subgraphs (coalitions) around a target node."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

from .errors import CapacityError, ContractError
from .mrf import Edge, Mrf, bfs_distances, edge_key

BRUTE_FORCE_MAX_EDGES = 20


def canonical_key(edges: Iterable[Edge]) -> bytes:
    """Byte string identifying an undirected edge set, independent of order."""
    return ";".join(f"{a},{b}" for a, b in sorted(edge_key(*e) for e in edges)).encode()


@dataclass(frozen=True)
class EnumConfig:
    """Search bounds. ``math.inf`` disables either bound.

    A node ``u`` may join a coalition only if ``d(u, target) < max_distance`` in
    the full graph; a coalition grows only while it has fewer than
    ``max_complexity`` edges.
    """

    max_distance: float = 3
    max_complexity: float = 8

    def __post_init__(self):
        for name in ("max_distance", "max_complexity"):
            value = getattr(self, name)
            if not value >= 1:
                raise ContractError(f"{name} must be >= 1, got {value}")
            if value != math.inf and int(value) != value:
                raise ContractError(f"{name} must be an integer or inf, got {value}")


@dataclass(frozen=True)
class Coalition:
    """A tree of edges containing ``target``.

    ``edges`` are kept in insertion order with each edge written ``(v, u)`` where
    ``v`` was already in the tree, so every prefix of ``edges`` is itself a
    coalition. The edge-free coalition is the target on its own.
    """

    target: int
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...] = ()
    parent_key: bytes | None = None
    added_edge: Edge | None = None

    @classmethod
    def target_only(cls, target: int) -> "Coalition":
        return cls(target, (target,))

    @property
    def is_target_only(self) -> bool:
        return not self.edges

    @cached_property
    def key(self) -> bytes:
        return canonical_key(self.edges)

    def extend(self, v: int, u: int) -> "Coalition":
        return Coalition(self.target, self.nodes + (u,), self.edges + ((v, u),), self.key, (v, u))

    def __contains__(self, node: int) -> bool:
        return node in self.nodes


def coalition_minus(coalition: Coalition, node: int) -> Coalition:
    """Drop ``node`` and whatever it disconnects from the target.

    Fragments cut off from the target cannot send messages to it, so only the
    target's component survives.
    """
    if node == coalition.target:
        raise ContractError("the target is never an explaining variable")
    if node not in coalition.nodes:
        raise ContractError(f"node {node} is not in the coalition")
    kept = {coalition.target}
    edges = []
    # insertion order means an edge's first endpoint is always placed before it
    for v, u in coalition.edges:
        if v in kept and u != node:
            kept.add(u)
            edges.append((v, u))
    nodes = tuple(x for x in coalition.nodes if x in kept)
    return Coalition(coalition.target, nodes, tuple(edges))


def enumerate_coalitions(
    mrf: Mrf,
    target: int,
    config: EnumConfig,
    visitor: Callable[[Coalition], None],
) -> int:
    """Visit every coalition around ``target`` exactly once, depth first.

    Each frame extends the current tree by one frontier edge at a time, trying
    edges out of the most recently added node first and then edges out of the
    other tree nodes in insertion order. After an edge's subtree of extensions
    is finished, the edge is forbidden for the rest of that frame, so the
    frames partition the search space and nothing is produced twice. Forbidden
    sets are copied into child frames and never leak back to the parent.

    A coalition is always visited right after an ancestor chain ending in its
    parent (one edge fewer), which is what warm-started evaluation relies on.
    """
    if not 0 <= target < mrf.node_count:
        raise ContractError(f"target {target} out of range")
    dist = bfs_distances(mrf, target)
    max_d, max_c = config.max_distance, config.max_complexity
    allowed = {u for u, d in dist.items() if d < max_d}
    nbrs = mrf.sorted_neighbors()
    count = 0

    def extend(coal: Coalition, members: frozenset, v: int, forbidden: frozenset) -> None:
        nonlocal count
        if len(coal.edges) >= max_c:
            return
        candidates = []
        for w in (v, *(m for m in coal.nodes if m != v)):
            for u in nbrs[w]:
                if u in members or u not in allowed:
                    continue
                if edge_key(w, u) in forbidden:
                    continue
                candidates.append((w, u))
        local = set(forbidden)
        for w, u in candidates:
            child = coal.extend(w, u)
            count += 1
            visitor(child)
            extend(child, members | {u}, u, frozenset(local))
            local.add(edge_key(w, u))

    extend(Coalition.target_only(target), frozenset((target,)), target, frozenset())
    return count


def collect_coalitions(mrf: Mrf, target: int, config: EnumConfig) -> list[Coalition]:
    out: list[Coalition] = []
    enumerate_coalitions(mrf, target, config, out.append)
    return out


def brute_force_coalitions(mrf: Mrf, target: int, config: EnumConfig) -> set[bytes]:
    """Canonical keys of all coalitions, found by checking edge subsets directly."""
    if len(mrf.edges) > BRUTE_FORCE_MAX_EDGES:
        raise CapacityError(f"{len(mrf.edges)} edges exceeds the brute-force limit")
    dist = bfs_distances(mrf, target)
    ok = {u for u, d in dist.items() if d < config.max_distance}
    pool = [e for e in mrf.edges if e[0] in ok and e[1] in ok]
    largest = min(len(pool), len(ok) - 1)
    if config.max_complexity != math.inf:
        largest = min(largest, int(config.max_complexity))
    keys = set()
    for size in range(1, largest + 1):
        for subset in itertools.combinations(pool, size):
            nodes = {x for e in subset for x in e}
            if target not in nodes or len(nodes) != size + 1:
                continue
            # |V| = |E| + 1 plus connectivity means a tree
            parent = {x: x for x in nodes}

            def find(x):
                while parent[x] != x:
                    x = parent[x]
                return x

            for a, b in subset:
                parent[find(a)] = find(b)
            if len({find(x) for x in nodes}) == 1:
                keys.add(canonical_key(subset))
    return keys


def coalitions_containing(coalitions: Iterable[Coalition], node: int) -> list[Coalition]:
    return [c for c in coalitions if node in c.nodes]
