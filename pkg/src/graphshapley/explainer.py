"""GraphShapley: Shapley attributions of a target's BP belief over coalitions."""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .bp import BpConfig, BpResult, MessageSet, adaptive_bp, compute_belief, run_bp
from .coalitions import Coalition, EnumConfig, coalition_minus, enumerate_coalitions
from .errors import ContractError, GraphShapleyError
from .mrf import Mrf

LOG_CLAMP = 1e-12


def characteristic(b_ref, b_tilde) -> float:
    """Negative symmetric KL divergence between two beliefs (0 is a perfect match)."""
    p = np.asarray(b_ref, dtype=float)
    q = np.asarray(b_tilde, dtype=float)
    if p.shape != q.shape:
        raise ContractError(f"belief lengths differ: {p.shape} vs {q.shape}")
    lp = np.log(np.clip(p, LOG_CLAMP, 1.0))
    lq = np.log(np.clip(q, LOG_CLAMP, 1.0))
    # -KL(p||q) - KL(q||p) collapses to -sum (p - q)(log p - log q)
    return -float(np.sum((p - q) * (lp - lq)))


def symmetric_kl(p, q) -> float:
    return -characteristic(p, q)


def reference_belief(mrf: Mrf, target: int, config: BpConfig | None = None) -> tuple[np.ndarray, BpResult]:
    result = run_bp(mrf, config)
    return compute_belief(mrf, result.messages, target), result


@dataclass
class _Entry:
    belief: np.ndarray
    nu: float


class CoalitionEvaluator:
    """Caches the characteristic value of every coalition seen for one target.

    Converged messages are kept only for the chain of coalitions on the current
    DFS path; those are the only ones a later warm start can use, because a
    coalition's ancestors are exactly the prefixes of its edge list.
    """

    def __init__(self, mrf: Mrf, target: int, b_ref, bp_config: BpConfig | None = None,
                 adaptive: bool = True):
        self.mrf = mrf
        self.target = target
        self.b_ref = np.asarray(b_ref, dtype=float)
        self.config = bp_config or BpConfig()
        self.adaptive = adaptive
        prior = mrf.priors[target] / mrf.priors[target].sum()
        self.cache: dict[bytes, _Entry] = {b"": _Entry(prior, characteristic(self.b_ref, prior))}
        self.path: list[tuple[bytes, frozenset, MessageSet]] = []
        self.message_updates = 0
        self.bp_runs = 0
        self.unconverged = 0

    def _run(self, edges, warm=None) -> BpResult:
        result = run_bp(self.mrf, self.config, warm, edges=edges, stale=())
        self._account(result)
        return result

    def _account(self, result: BpResult) -> None:
        self.message_updates += result.message_updates
        self.bp_runs += 1
        if not result.converged:
            self.unconverged += 1

    def _store(self, key: bytes, messages: MessageSet) -> float:
        belief = compute_belief(self.mrf, messages, self.target)
        nu = characteristic(self.b_ref, belief)
        self.cache[key] = _Entry(belief, nu)
        return nu

    def enter(self, coalition: Coalition) -> float:
        """Evaluate a coalition that the enumeration just reached and push it on the path."""
        while self.path and self.path[-1][0] != coalition.parent_key:
            self.path.pop()
        key = coalition.key
        try:
            if not self.adaptive:
                result = self._run(coalition.edges)
            elif self.path and coalition.parent_key == self.path[-1][0]:
                result = adaptive_bp(self.mrf, coalition.edges[:-1], self.path[-1][2],
                                     coalition.added_edge, self.config)
                self._account(result)
            else:
                result = self._run(coalition.edges)
        except GraphShapleyError as exc:
            raise type(exc)(f"coalition {key.decode() or '<target>'}: {exc}") from exc
        self.path.append((key, frozenset(coalition.edges), result.messages))
        if key in self.cache:
            return self.cache[key].nu
        return self._store(key, result.messages)

    def nu(self, coalition: Coalition) -> float:
        """Characteristic value of any coalition, warm-started from the DFS path if possible."""
        key = coalition.key
        entry = self.cache.get(key)
        if entry is not None:
            return entry.nu
        warm = None
        if self.adaptive:
            have = set(coalition.edges)
            # path entries are nested prefixes; keep the longest one that fits
            for _, edges, messages in self.path:
                if not edges <= have:
                    break
                warm = messages
        try:
            result = self._run(coalition.edges, warm)
        except GraphShapleyError as exc:
            raise type(exc)(f"coalition {key.decode()}: {exc}") from exc
        return self._store(key, result.messages)

    def marginal_contribution(self, node: int, coalition: Coalition) -> float:
        return self.nu(coalition) - self.nu(coalition_minus(coalition, node))


def evaluate_coalition(evaluator: CoalitionEvaluator, coalition: Coalition) -> float:
    """nu of ``coalition``; the edge-free coalition costs no BP at all."""
    return evaluator.nu(coalition)


def marginal_contribution(evaluator: CoalitionEvaluator, node: int, coalition: Coalition) -> float:
    return evaluator.marginal_contribution(node, coalition)


@dataclass
class NodeRecord:
    node: int
    shapley_value: float
    coalition_count: int


@dataclass
class ExplanationResult:
    target: int
    records: list[NodeRecord]
    diagnostics: dict = field(default_factory=dict)

    @property
    def ranking(self) -> list[int]:
        ordered = sorted(self.records, key=lambda r: (-r.shapley_value, r.node))
        return [r.node for r in ordered]

    def values(self) -> dict[int, float]:
        return {r.node: r.shapley_value for r in self.records}

    def counts(self) -> dict[int, int]:
        return {r.node: r.coalition_count for r in self.records}


def explain(
    mrf: Mrf,
    target: int,
    enum_config: EnumConfig | None = None,
    bp_config: BpConfig | None = None,
    *,
    adaptive: bool = True,
    reference: np.ndarray | None = None,
) -> ExplanationResult:
    """Shapley value of every non-target node for the target's belief.

    Each value is the plain average of the node's marginal contribution over all
    enumerated coalitions containing it. Nodes in no coalition get 0.
    """
    enum_config = enum_config or EnumConfig()
    bp_config = bp_config or BpConfig()
    if not 0 <= target < mrf.node_count:
        raise ContractError(f"target {target} out of range")
    start = time.perf_counter()
    ref_converged = None
    if reference is None:
        reference, ref_result = reference_belief(mrf, target, bp_config)
        ref_converged = ref_result.converged

    ev = CoalitionEvaluator(mrf, target, reference, bp_config, adaptive=adaptive)
    totals: dict[int, float] = defaultdict(float)
    counts: dict[int, int] = defaultdict(int)
    by_size: dict[int, list] = defaultdict(lambda: [0, 0, 0.0])

    def visit(coal: Coalition) -> None:
        t0, u0 = time.perf_counter(), ev.message_updates
        ev.enter(coal)
        for node in coal.nodes:
            if node != target:
                totals[node] += ev.marginal_contribution(node, coal)
                counts[node] += 1
        row = by_size[len(coal.edges)]
        row[0] += 1
        row[1] += ev.message_updates - u0
        row[2] += time.perf_counter() - t0

    n_coal = enumerate_coalitions(mrf, target, enum_config, visit)
    records = [
        NodeRecord(i, totals[i] / counts[i] if counts[i] else 0.0, counts[i])
        for i in range(mrf.node_count)
        if i != target
    ]
    diagnostics = {
        "coalitions": n_coal,
        "bp_runs": ev.bp_runs,
        "message_updates": ev.message_updates,
        "cached_coalitions": len(ev.cache),
        "unconverged_runs": ev.unconverged,
        "reference_belief": [float(x) for x in reference],
        "reference_converged": ref_converged,
        "adaptive": adaptive,
        "max_distance": enum_config.max_distance,
        "max_complexity": enum_config.max_complexity,
        "by_size": {k: {"coalitions": v[0], "message_updates": v[1], "seconds": v[2]}
                    for k, v in sorted(by_size.items())},
        "wall_seconds": time.perf_counter() - start,
    }
    return ExplanationResult(target, records, diagnostics)
