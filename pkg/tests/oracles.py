"""Slow, independent reference computations used only by the tests.

Nothing here imports the package's BP, enumeration or explainer code, so a
bug shared by an implementation and its oracle has to be written twice.
"""

import itertools
import math

import numpy as np


def joint_marginal(priors, edges, pots, node):
    """Marginal of ``node`` by summing the full product joint over every assignment."""
    priors = np.asarray(priors, float)
    n, c = priors.shape
    acc = np.zeros(c)
    for x in itertools.product(range(c), repeat=n):
        w = 1.0
        for i in range(n):
            w *= priors[i, x[i]]
        for (a, b), p in zip(edges, pots):
            w *= p[x[a], x[b]]
        acc[x[node]] += w
    return acc / acc.sum()


def sub_marginal(priors, edges, pots, node, keep_edges):
    """Marginal of ``node`` in the MRF restricted to ``keep_edges`` and their endpoints."""
    nodes = sorted({node} | {x for e in keep_edges for x in e})
    idx = {v: k for k, v in enumerate(nodes)}
    lookup = {}
    for (a, b), p in zip(edges, pots):
        lookup[(a, b)] = np.asarray(p)
        lookup[(b, a)] = np.asarray(p).T
    sub_edges = [(idx[a], idx[b]) for a, b in keep_edges]
    sub_pots = [lookup[(a, b)] for a, b in keep_edges]
    return joint_marginal(np.asarray(priors)[nodes], sub_edges, sub_pots, idx[node])


def nu(p, q):
    p = np.clip(np.asarray(p, float), 1e-12, 1.0)
    q = np.clip(np.asarray(q, float), 1e-12, 1.0)
    total = 0.0
    for a, b in zip(p, q):
        total += (a - b) * (math.log(a) - math.log(b))
    return -total


def _is_tree_with(target, subset):
    nodes = {x for e in subset for x in e} | {target}
    if len(nodes) != len(subset) + 1:
        return False
    seen, stack = {target}, [target]
    while stack:
        v = stack.pop()
        for a, b in subset:
            for x, y in ((a, b), (b, a)):
                if x == v and y not in seen:
                    seen.add(y)
                    stack.append(y)
    return seen == nodes


def bfs(n, edges, src):
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for v in frontier:
            for a, b in edges:
                for x, y in ((a, b), (b, a)):
                    if x == v and y not in dist:
                        dist[y] = dist[v] + 1
                        nxt.append(y)
        frontier = nxt
    return dist


def coalitions(n, edges, target, max_d=math.inf, max_c=math.inf):
    """Every non-empty tree edge-set through ``target`` within the bounds."""
    dist = bfs(n, edges, target)
    ok = {v for v, d in dist.items() if d < max_d}
    pool = [e for e in edges if e[0] in ok and e[1] in ok]
    out = []
    top = len(pool) if max_c == math.inf else min(len(pool), int(max_c))
    for size in range(1, top + 1):
        for subset in itertools.combinations(pool, size):
            if _is_tree_with(target, subset):
                out.append(frozenset(tuple(sorted(e)) for e in subset))
    return out


def target_component(edges, target, removed):
    """Edges still connected to ``target`` once ``removed`` is deleted."""
    live = [e for e in edges if removed not in e]
    reach = {target}
    grew = True
    while grew:
        grew = False
        for a, b in live:
            if (a in reach) != (b in reach):
                reach |= {a, b}
                grew = True
    return frozenset(e for e in live if e[0] in reach and e[1] in reach)


def loopy_belief(priors, edges, pots, node, sweeps=2000):
    """Plain flooding sum-product run for a fixed number of sweeps."""
    priors = np.asarray(priors, float)
    c = priors.shape[1]
    psi = {}
    for (a, b), p in zip(edges, pots):
        psi[(a, b)] = np.asarray(p)
        psi[(b, a)] = np.asarray(p).T
    msg = {k: np.full(c, 1.0 / c) for k in psi}
    for _ in range(sweeps):
        new = {}
        for (j, i) in msg:
            h = priors[j].copy()
            for (k, jj) in msg:
                if jj == j and k != i:
                    h = h * msg[(k, j)]
            # psi[(j, i)] has rows indexed by x_j
            m = h @ psi[(j, i)]
            new[(j, i)] = m / m.sum()
        msg = new
    b = priors[node].copy()
    for (k, jj) in msg:
        if jj == node:
            b = b * msg[(k, node)]
    return b / b.sum()


def shapley(priors, edges, pots, target, max_d=math.inf, max_c=math.inf, ref=None):
    """Average marginal contribution of each node over its coalitions, from scratch.

    ``ref`` defaults to the exact marginal, which is what BP gives on trees.
    """
    priors = np.asarray(priors, float)
    n = len(priors)
    if ref is None:
        ref = joint_marginal(priors, edges, pots, target)
    coals = coalitions(n, edges, target, max_d, max_c)

    def value(es):
        if not es:
            b = priors[target] / priors[target].sum()
        else:
            b = sub_marginal(priors, edges, pots, target, sorted(es))
        return nu(ref, b)

    sv = {}
    for i in range(n):
        if i == target:
            continue
        mus = [value(s) - value(target_component(s, target, i))
               for s in coals if any(i in e for e in s)]
        sv[i] = (sum(mus) / len(mus), len(mus)) if mus else (0.0, 0)
    return sv
