"""Faithfulness protocol, parameter sweeps and the warm-start benchmark."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .baselines import (
    Ranking,
    from_explanation,
    mc_sampling_shapley,
    pagerank_ranking,
    random_ranking,
    sensitivity_ranking,
)
from .bp import BpConfig, compute_belief, run_bp
from .coalitions import EnumConfig
from .errors import ContractError, GraphShapleyError
from .explainer import explain, reference_belief, symmetric_kl
from .mrf import Mrf

LONG_HEADER = ["method", "instance", "target", "fraction", "sym_kl", "wall_ms", "msg_updates", "error"]


def restore_count(fraction: float, n_explaining: int) -> int:
    # round first so 0.1 * 30 does not become 4 through float noise
    return min(n_explaining, math.ceil(round(fraction * n_explaining, 9)))


def masked_mrf(mrf: Mrf, target: int, keep: Sequence[int]) -> Mrf:
    """All priors flattened except the target's and those of ``keep``."""
    c = mrf.class_count
    priors = np.full((mrf.node_count, c), 1.0 / c)
    for i in (target, *keep):
        priors[i] = mrf.priors[i]
    return mrf.with_priors(priors)


def masked_fidelity(mrf: Mrf, target: int, ranking: Ranking, fraction: float,
                    bp_config: BpConfig | None = None, reference=None) -> tuple[float, int]:
    """Symmetric KL at the target after restoring only the top-ranked priors.

    Returns the divergence and the number of BP message updates spent.
    """
    if not 0 < fraction <= 1:
        raise ContractError(f"fraction must lie in (0, 1], got {fraction}")
    bp_config = bp_config or BpConfig()
    if reference is None:
        reference, _ = reference_belief(mrf, target, bp_config)
    order = [i for i in ranking.order if i != target]
    k = restore_count(fraction, mrf.node_count - 1)
    masked = masked_mrf(mrf, target, order[:k])
    result = run_bp(masked, bp_config)
    return symmetric_kl(reference, compute_belief(masked, result.messages, target)), result.message_updates


@dataclass
class EvalConfig:
    restore_fraction: float = 0.25
    fractions: tuple[float, ...] = (0.1, 0.25, 0.5, 0.75, 1.0)
    seed: int = 0
    mc_samples: int = 100
    biased_prior_fraction: float = 0.8
    bias: float = 0.9
    enum: EnumConfig = field(default_factory=EnumConfig)
    bp: BpConfig = field(default_factory=BpConfig)

    def __post_init__(self):
        fr = tuple(self.fractions)
        if list(fr) != sorted(fr) or any(not 0 < f <= 1 for f in fr):
            raise ContractError("fractions must be ascending and lie in (0, 1]")
        if not 0 < self.restore_fraction <= 1:
            raise ContractError("restore_fraction must lie in (0, 1]")
        self.fractions = fr


RankFn = Callable[[Mrf, int, np.ndarray], Ranking]


def method_table(cfg: EvalConfig) -> dict[str, RankFn]:
    """Ranking functions keyed by method name, all sharing ``cfg``."""
    return {
        "graphshapley": lambda m, t, ref: from_explanation(
            explain(m, t, cfg.enum, cfg.bp, reference=ref)),
        "random": lambda m, t, ref: random_ranking(m, t, cfg.seed + t),
        "pagerank": lambda m, t, ref: pagerank_ranking(m, t),
        "sensitivity": lambda m, t, ref: sensitivity_ranking(m, t, cfg.bp, reference=ref),
        "mc-sampling": lambda m, t, ref: mc_sampling_shapley(
            m, t, cfg.enum, cfg.bp, cfg.mc_samples, cfg.seed + t, reference=ref),
    }


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def ok_rows(self):
        return [r for r in self.rows if not r.get("error")]

    def values(self, method: str, fraction: float | None = None, key: str = "fraction") -> list[float]:
        return [r["sym_kl"] for r in self.ok_rows()
                if r["method"] == method and (fraction is None or r[key] == fraction)]

    def mean(self, method: str, fraction: float | None = None, key: str = "fraction") -> float:
        vals = self.values(method, fraction, key)
        return float(np.mean(vals)) if vals else float("nan")

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r["method"] for r in self.rows))

    def fractions(self, key: str = "fraction") -> list[float]:
        return sorted({r[key] for r in self.ok_rows()})

    def paired(self, a: str, b: str, fraction: float, key: str = "fraction",
               by: str = "cell") -> tuple[np.ndarray, np.ndarray]:
        """Aligned KL values of two methods, per (instance, target) cell or per instance."""
        def collect(method):
            out: dict = {}
            for r in self.ok_rows():
                if r["method"] == method and r[key] == fraction:
                    k = r["instance"] if by == "instance" else (r["instance"], r["target"])
                    out.setdefault(k, []).append(r["sym_kl"])
            return {k: float(np.mean(v)) for k, v in out.items()}
        xa, xb = collect(a), collect(b)
        common = sorted(set(xa) & set(xb))
        return np.array([xa[k] for k in common]), np.array([xb[k] for k in common])

    def t_statistic(self, a: str, b: str, fraction: float, key: str = "fraction") -> tuple[float, float]:
        xa, xb = self.paired(a, b, fraction, key)
        if len(xa) < 2 or np.allclose(xa, xb):
            return float("nan"), float("nan")
        res = stats.ttest_rel(xa, xb)
        return float(res.statistic), float(res.pvalue)

    def long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, LONG_HEADER, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in self.rows:
            w.writerow({**r, "sym_kl": _fmt(r.get("sym_kl")), "wall_ms": _fmt(r.get("wall_ms"))})
        return buf.getvalue()

    def sweep_csv(self, key: str = "fraction") -> str:
        """One row per x value, one column of mean KL per method."""
        methods = self.methods()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([key] + methods)
        for f in self.fractions(key):
            w.writerow([f] + [_fmt(self.mean(m, f, key)) for m in methods])
        return buf.getvalue()

    def summary(self, key: str = "fraction", reference_method: str = "graphshapley") -> str:
        methods = self.methods()
        lines = [f"{key:>10} " + " ".join(f"{m:>14}" for m in methods)]
        for f in self.fractions(key):
            lines.append(f"{f:>10} " + " ".join(f"{self.mean(m, f, key):>14.6f}" for m in methods))
        if reference_method in methods:
            lines.append("")
            lines.append(f"paired t statistic vs {reference_method} (negative favours {reference_method})")
            for m in methods:
                if m == reference_method:
                    continue
                for f in self.fractions(key):
                    t, p = self.t_statistic(reference_method, m, f, key)
                    lines.append(f"  {m:>14} {key}={f}: t={t:.3f} p={p:.3g}")
        failures = [r for r in self.rows if r.get("error")]
        if failures:
            lines.append("")
            lines.append(f"{len(failures)} failed cells")
        for k, v in self.meta.items():
            lines.append(f"# {k}: {v}")
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    return repr(float(x))


Instance = tuple[str, Mrf, Sequence[int]]


def _run_cell(args) -> list[dict]:
    name, mrf, target, method, fractions, cfg = args
    fn = method_table(cfg)[method]
    rows = []
    try:
        reference, _ = reference_belief(mrf, target, cfg.bp)
        t0 = time.perf_counter()
        ranking = fn(mrf, target, reference)
        wall = (time.perf_counter() - t0) * 1000
        for f in fractions:
            kl, updates = masked_fidelity(mrf, target, ranking, f, cfg.bp, reference)
            rows.append(dict(method=method, instance=name, target=target, fraction=f,
                             sym_kl=kl, wall_ms=wall, msg_updates=updates, error=""))
    except GraphShapleyError as exc:
        rows.append(dict(method=method, instance=name, target=target, fraction="",
                         sym_kl="", wall_ms="", msg_updates="", error=str(exc)))
    return rows


def sweep_fractions(instances: Sequence[Instance], methods: Sequence[str], cfg: EvalConfig,
                    fractions: Sequence[float] | None = None, workers: int = 1) -> EvalReport:
    """Masked fidelity for every (method, instance, target, fraction) cell.

    A failing cell is recorded with its error message; the sweep carries on.
    """
    fractions = tuple(fractions or cfg.fractions)
    unknown = set(methods) - set(method_table(cfg))
    if unknown:
        raise ContractError(f"unknown methods: {sorted(unknown)}")
    jobs = [(name, mrf, t, m, fractions, cfg) for name, mrf, targets in instances
            for t in targets for m in methods]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(_run_cell, jobs))
    else:
        chunks = [_run_cell(j) for j in jobs]
    report = EvalReport([r for chunk in chunks for r in chunk])
    report.meta = {"methods": list(methods), "fractions": list(fractions),
                   "mc_samples": cfg.mc_samples, "seed": cfg.seed,
                   "max_distance": cfg.enum.max_distance, "max_complexity": cfg.enum.max_complexity}
    return report


def d_sensitivity(instances: Sequence[Instance], d_values: Sequence[float], max_complexity: float,
                  cfg: EvalConfig, fraction: float | None = None) -> EvalReport:
    """Masked fidelity of GraphShapley rankings computed under each distance bound."""
    if list(d_values) != sorted(d_values):
        raise ContractError("D values must be ascending")
    fraction = fraction or cfg.restore_fraction
    rows = []
    for name, mrf, targets in instances:
        for t in targets:
            try:
                reference, _ = reference_belief(mrf, t, cfg.bp)
            except GraphShapleyError as exc:
                rows.append(dict(method="graphshapley", instance=name, target=t, max_distance="",
                                 fraction=fraction, sym_kl="", error=str(exc)))
                continue
            for d in d_values:
                try:
                    t0 = time.perf_counter()
                    res = explain(mrf, t, EnumConfig(d, max_complexity), cfg.bp, reference=reference)
                    wall = (time.perf_counter() - t0) * 1000
                    kl, updates = masked_fidelity(mrf, t, from_explanation(res), fraction, cfg.bp, reference)
                    rows.append(dict(method="graphshapley", instance=name, target=t, max_distance=d,
                                     fraction=fraction, sym_kl=kl, wall_ms=wall,
                                     msg_updates=updates, coalitions=res.diagnostics["coalitions"],
                                     error=""))
                except GraphShapleyError as exc:
                    rows.append(dict(method="graphshapley", instance=name, target=t, max_distance=d,
                                     fraction=fraction, sym_kl="", error=str(exc)))
    report = EvalReport(rows)
    report.meta = {"fraction": fraction, "max_complexity": max_complexity}
    return report


@dataclass
class SpeedupReport:
    rows: list[dict]
    sv_max_abs_diff: float
    adaptive_total: int
    scratch_total: int

    def csv(self) -> str:
        buf = io.StringIO()
        header = ["coalition_edges", "coalitions", "adaptive_updates_cum", "scratch_updates_cum",
                  "adaptive_ms_cum", "scratch_ms_cum"]
        w = csv.DictWriter(buf, header, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()


def speedup_benchmark(mrf: Mrf, target: int, enum_config: EnumConfig | None = None,
                      bp_config: BpConfig | None = None) -> SpeedupReport:
    """Explain the target twice, with and without warm starts, and tabulate the cost."""
    reference, _ = reference_belief(mrf, target, bp_config)
    fast = explain(mrf, target, enum_config, bp_config, adaptive=True, reference=reference)
    slow = explain(mrf, target, enum_config, bp_config, adaptive=False, reference=reference)
    va, vs = fast.values(), slow.values()
    diff = max((abs(va[i] - vs[i]) for i in va), default=0.0)
    rows = []
    acc = [0, 0, 0.0, 0.0, 0]
    sizes = sorted(set(fast.diagnostics["by_size"]) | set(slow.diagnostics["by_size"]))
    for s in sizes:
        a = fast.diagnostics["by_size"].get(s, {"coalitions": 0, "message_updates": 0, "seconds": 0.0})
        b = slow.diagnostics["by_size"].get(s, {"coalitions": 0, "message_updates": 0, "seconds": 0.0})
        acc[0] += a["message_updates"]
        acc[1] += b["message_updates"]
        acc[2] += a["seconds"] * 1000
        acc[3] += b["seconds"] * 1000
        acc[4] += a["coalitions"]
        rows.append(dict(coalition_edges=s, coalitions=acc[4], adaptive_updates_cum=acc[0],
                         scratch_updates_cum=acc[1], adaptive_ms_cum=round(acc[2], 3),
                         scratch_ms_cum=round(acc[3], 3)))
    return SpeedupReport(rows, diff, fast.diagnostics["message_updates"],
                         slow.diagnostics["message_updates"])
