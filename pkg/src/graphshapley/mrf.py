"""Discrete pairwise Markov random fields: data model, file I/O and an exact oracle."""

from __future__ import annotations

import csv
import json
from collections import deque
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ParseError, ValidationError

DIST_ATOL = 1e-9
# priors read from files may carry rounding; anything further off is a user error
_PRIOR_SUM_SLACK = 1e-6
BRUTE_FORCE_MAX_STATES = 10**7

Edge = tuple[int, int]


def edge_key(a: int, b: int) -> Edge:
    """Orientation-free key of an undirected edge."""
    return (a, b) if a < b else (b, a)


def uniform(c: int) -> np.ndarray:
    return np.full(c, 1.0 / c)


def is_distribution(p, atol: float = DIST_ATOL) -> bool:
    p = np.asarray(p, dtype=float)
    return p.ndim == 1 and bool(np.all(p >= 0)) and abs(p.sum() - 1.0) <= atol


def normalize(p, what: str = "distribution") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or not np.all(np.isfinite(p)):
        raise ValidationError(f"{what}: not a finite vector")
    if np.any(p < 0):
        raise ValidationError(f"{what}: negative entry")
    total = p.sum()
    if total <= 0:
        raise ValidationError(f"{what}: all entries are zero")
    return p / total


class Mrf:
    """An undirected graph with a prior per node and a compatibility matrix per edge.

    ``potentials[k][a, b]`` scores ``x_u = a, x_v = b`` for ``edges[k] == (u, v)``,
    in the endpoint order the edge was declared with. Instances are treated as
    immutable once built.
    """

    def __init__(self, priors, edges: Iterable[Sequence[int]] = (), potentials=None):
        priors = np.array(priors, dtype=float)
        if priors.ndim != 2:
            raise ValidationError("priors must be a (nodes, classes) array")
        n, c = priors.shape
        if c < 2:
            raise ValidationError(f"class count must be >= 2, got {c}")
        for i in range(n):
            p = priors[i]
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ValidationError(f"node {i}: prior has a negative or non-finite entry")
            if abs(p.sum() - 1.0) > DIST_ATOL:
                raise ValidationError(f"node {i}: prior sums to {p.sum()!r}, not 1")
        edges = [(int(a), int(b)) for a, b in edges]

        seen = set()
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValidationError(f"edge ({a},{b}): node id out of range [0, {n})")
            if a == b:
                raise ValidationError(f"edge ({a},{b}): self-loop")
            k = edge_key(a, b)
            if k in seen:
                raise ValidationError(f"edge ({a},{b}): duplicate edge")
            seen.add(k)

        m = len(edges)
        if potentials is None:
            if m:
                raise ValidationError("edges given without potentials")
            pots = np.zeros((0, c, c))
        else:
            pots = np.array(potentials, dtype=float)
            if pots.ndim == 2:
                pots = np.broadcast_to(pots, (m, c, c)).copy()
            if pots.shape != (m, c, c):
                raise ValidationError(f"potentials must have shape ({m}, {c}, {c}), got {pots.shape}")
        for k, (a, b) in enumerate(edges):
            check_potential(pots[k], f"edge ({a},{b})")

        self.priors = priors
        self.priors.flags.writeable = False
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.potentials = pots
        self.potentials.flags.writeable = False

        adj: list[list[int]] = [[] for _ in range(n)]
        psi: dict[Edge, np.ndarray] = {}
        index: dict[Edge, int] = {}
        for k, (a, b) in enumerate(self.edges):
            adj[a].append(b)
            adj[b].append(a)
            psi[(a, b)] = pots[k]
            psi[(b, a)] = np.ascontiguousarray(pots[k].T)
            index[edge_key(a, b)] = k
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(x)) for x in adj)
        self._psi = psi
        self._index = index
        self._sorted_nbrs: tuple[tuple[int, ...], ...] | None = None

    @property
    def node_count(self) -> int:
        return self.priors.shape[0]

    @property
    def class_count(self) -> int:
        return self.priors.shape[1]

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def has_edge(self, a: int, b: int) -> bool:
        return edge_key(a, b) in self._index

    def psi(self, i: int, j: int) -> np.ndarray:
        """Compatibility matrix oriented with rows indexed by ``x_i``, columns by ``x_j``."""
        try:
            return self._psi[(i, j)]
        except KeyError:
            raise ValidationError(f"({i},{j}) is not an edge") from None

    def potential(self, a: int, b: int) -> np.ndarray:
        return self.psi(a, b)

    def with_priors(self, priors) -> "Mrf":
        """Same topology and potentials, different priors."""
        return Mrf(priors, self.edges, self.potentials)

    def sorted_neighbors(self) -> tuple[tuple[int, ...], ...]:
        if self._sorted_nbrs is None:
            deg = [len(a) for a in self.adjacency]
            self._sorted_nbrs = tuple(
                tuple(sorted(a, key=lambda u: (deg[u], u))) for a in self.adjacency
            )
        return self._sorted_nbrs

    def __repr__(self) -> str:
        return f"Mrf(nodes={self.node_count}, edges={len(self.edges)}, classes={self.class_count})"


def check_potential(mat: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(mat)) or np.any(mat < 0):
        raise ValidationError(f"{what}: potential has a negative or non-finite entry")
    if np.any(mat.sum(axis=1) <= 0) or np.any(mat.sum(axis=0) <= 0):
        raise ValidationError(f"{what}: potential has an all-zero row or column")


def degree_sorted_neighbors(mrf: Mrf, node: int) -> list[int]:
    """Neighbors in ascending degree, ties broken by ascending node id."""
    return list(mrf.sorted_neighbors()[node])


def bfs_distances(mrf: Mrf, source: int) -> dict[int, int]:
    """Hop distance from ``source`` to every node reachable from it."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for u in mrf.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def shortest_path_distance(mrf: Mrf, a: int, b: int) -> int | None:
    """Hop count between ``a`` and ``b``; ``None`` when they are disconnected."""
    return bfs_distances(mrf, a).get(b)


def _joint_table(mrf: Mrf) -> np.ndarray:
    n, c = mrf.node_count, mrf.class_count
    if float(c) ** n > BRUTE_FORCE_MAX_STATES:
        raise CapacityError(f"joint table has {c}^{n} states, limit is {BRUTE_FORCE_MAX_STATES}")
    if n > 32:
        raise CapacityError("too many nodes for a dense joint table")
    joint = np.ones((c,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = c
        joint *= mrf.priors[i].reshape(shape)
    for k, (a, b) in enumerate(mrf.edges):
        mat = mrf.potentials[k]
        if a > b:
            a, b, mat = b, a, mat.T
        shape = [1] * n
        shape[a] = shape[b] = c
        joint *= mat.reshape(shape)
    return joint


def _marginal_of(joint: np.ndarray, node: int) -> np.ndarray:
    axes = tuple(i for i in range(joint.ndim) if i != node)
    marg = joint.sum(axis=axes) if axes else joint
    total = marg.sum()
    if total <= 0:
        raise ValidationError("joint distribution is identically zero")
    return marg / total


def brute_force_marginal(mrf: Mrf, node: int) -> np.ndarray:
    """Exact marginal of ``node`` by summing the full product-form joint table."""
    return _marginal_of(_joint_table(mrf), node)


def brute_force_marginals(mrf: Mrf) -> np.ndarray:
    """All exact marginals from one joint table, shape (nodes, classes)."""
    joint = _joint_table(mrf)
    return np.array([_marginal_of(joint, i) for i in range(mrf.node_count)])


# ---------------------------------------------------------------- file formats


def _read_graph(path: Path) -> list[Edge]:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'u v', got {text!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"node ids must be integers, got {text!r}") from None
            if u < 0 or v < 0:
                raise ParseError(path, lineno, "node ids must be non-negative")
            edges.append((u, v))
    return edges


def _read_priors(path: Path) -> tuple[int, dict[int, np.ndarray]]:
    rows: dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "missing header")
        header = [h.strip() for h in header]
        c = len(header) - 1
        if header[0] != "node" or c < 2 or header[1:] != [f"p_{k}" for k in range(c)]:
            raise ParseError(path, 1, "header must be node,p_0,...,p_{c-1} with c >= 2")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != c + 1:
                raise ParseError(path, lineno, f"expected {c + 1} fields, got {len(row)}")
            try:
                node = int(row[0])
                probs = np.array([float(x) for x in row[1:]])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if node < 0:
                raise ParseError(path, lineno, "node ids must be non-negative")
            if node in rows:
                raise ValidationError(f"node {node}: prior listed twice")
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise ValidationError(f"node {node}: prior has a negative or non-finite entry")
            if abs(probs.sum() - 1.0) > _PRIOR_SUM_SLACK:
                raise ValidationError(f"node {node}: prior sums to {probs.sum()!r}, not 1")
            rows[node] = probs / probs.sum()
    return c, rows


def _parse_matrix(obj, what: str) -> np.ndarray:
    try:
        mat = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{what}: not a numeric matrix") from None
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"{what}: potential must be a square matrix")
    return mat


def _read_potentials(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(doc, dict) or not ({"global", "edges"} & doc.keys()):
        raise ParseError(path, 1, "expected an object with a 'global' matrix and/or an 'edges' map")
    shared = _parse_matrix(doc["global"], "global") if "global" in doc else None
    per_edge: dict[Edge, np.ndarray] = {}
    for key, mat in (doc.get("edges") or {}).items():
        try:
            u, v = (int(x) for x in key.split(","))
        except ValueError:
            raise ValidationError(f"potential key {key!r}: expected 'u,v'") from None
        per_edge[(u, v)] = _parse_matrix(mat, f"edge ({u},{v})")
    return shared, per_edge


def load_mrf(graph_path, priors_path=None, potentials_path=None) -> Mrf:
    """Read an MRF from an edge list, a priors CSV and a potentials JSON document.

    Nodes without a prior row get the uniform prior. A ``global`` potential applies
    to every edge lacking a per-edge entry.
    """
    graph_path = Path(graph_path)
    edges = _read_graph(graph_path)
    c, rows = (None, {})
    if priors_path is not None:
        c, rows = _read_priors(Path(priors_path))
    shared, per_edge = (None, {})
    if potentials_path is not None:
        shared, per_edge = _read_potentials(Path(potentials_path))

    if c is None:
        mats = ([shared] if shared is not None else []) + list(per_edge.values())
        if not mats:
            raise ValidationError("class count unknown: provide a priors file or potentials")
        c = mats[0].shape[0]

    n = 1 + max([x for e in edges for x in e] + list(rows) + [-1])
    if n == 0:
        raise ValidationError("empty model: no edges and no priors")
    priors = np.tile(uniform(c), (n, 1))
    for node, p in rows.items():
        priors[node] = p

    declared = {edge_key(a, b): (a, b) for a, b in edges}
    for (u, v) in per_edge:
        if edge_key(u, v) not in declared:
            raise ValidationError(f"edge ({u},{v}): potential given for an edge not in the graph")
    pots = np.empty((len(edges), c, c))
    for k, (a, b) in enumerate(edges):
        if (a, b) in per_edge:
            mat = per_edge[(a, b)]
        elif (b, a) in per_edge:
            mat = per_edge[(b, a)].T
        elif shared is not None:
            mat = shared
        else:
            raise ValidationError(f"edge ({a},{b}): no potential and no global potential")
        if mat.shape != (c, c):
            raise ValidationError(f"edge ({a},{b}): potential shape {mat.shape} != ({c}, {c})")
        pots[k] = mat
    return Mrf(priors, edges, pots)


def save_mrf(mrf: Mrf, graph_path, priors_path, potentials_path) -> None:
    """Write ``mrf`` in the formats read by :func:`load_mrf`."""
    with open(graph_path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={mrf.node_count} edges={len(mrf.edges)}\n")
        for a, b in mrf.edges:
            fh.write(f"{a} {b}\n")
    c = mrf.class_count
    with open(priors_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node"] + [f"p_{k}" for k in range(c)])
        for i in range(mrf.node_count):
            writer.writerow([i] + [repr(float(x)) for x in mrf.priors[i]])
    pots = mrf.potentials
    if len(pots) and np.all(pots == pots[0]):
        doc = {"global": pots[0].tolist()}
    else:
        doc = {"edges": {f"{a},{b}": pots[k].tolist() for k, (a, b) in enumerate(mrf.edges)}}
        if not len(pots):
            doc = {"global": np.ones((c, c)).tolist()}
    with open(potentials_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
