"""Command line entry point: ``graphshapley <command> [options]``.

Every run writes ``config.json`` (all options, defaults included) into its output
directory; ``--config`` replays such a file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    METHODS,
    Ranking,
    mc_sampling_shapley,
    pagerank_ranking,
    random_ranking,
    sensitivity_ranking,
)
from .bp import BpConfig, all_beliefs, run_bp
from .coalitions import EnumConfig
from .errors import GraphShapleyError, NumericalError
from .evaluation import EvalConfig, d_sensitivity, speedup_benchmark, sweep_fractions
from .explainer import ExplanationResult, explain
from .mrf import Mrf, load_mrf, save_mrf
from .synthetic import KINDS, generate_synthetic, uniform_prior_nodes

log = logging.getLogger("graphshapley")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
COMMANDS = ("infer", "explain", "baseline", "eval", "bench", "generate")


def _bound(text: str) -> float:
    if str(text).lower() in ("inf", "infinity", "none"):
        return math.inf
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1 or 'inf'")
    return value


def _fractions(text) -> list[float]:
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="edge list, one 'u v' pair per line")
    p.add_argument("--priors", help="CSV node,p_0,...,p_{c-1}; omitted nodes are uniform")
    p.add_argument("--potentials", help="JSON with a 'global' matrix and/or per-edge 'edges' map")


def _add_bp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bp-tol", type=float, default=1e-6)
    p.add_argument("--bp-max-iters", type=int, default=200)
    p.add_argument("--damping", type=float, default=0.0)


def _add_enum_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-distance", type=_bound, default=3,
                   help="nodes join only if their distance to the target is below this ('inf' for none)")
    p.add_argument("--max-complexity", type=_bound, default=8,
                   help="largest coalition size in edges ('inf' for none)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=False, default="out", help="output directory")
    p.add_argument("--config", help="replay a config.json written by an earlier run")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="graphshapley",
                                     description="Shapley explanations of belief propagation on MRFs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["infer"] = sub.add_parser("infer", help="run BP and write every node's belief")
    _add_model_args(p)
    _add_bp_args(p)
    _add_common(p)

    p = subs["explain"] = sub.add_parser("explain", help="GraphShapley values for target nodes")
    _add_model_args(p)
    _add_bp_args(p)
    _add_enum_args(p)
    p.add_argument("--targets", default="uniform",
                   help="comma-separated node ids, 'uniform' (uniform-prior nodes) or 'all'")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common(p)

    p = subs["baseline"] = sub.add_parser("baseline", help="rank explaining variables with a baseline")
    _add_model_args(p)
    _add_bp_args(p)
    _add_enum_args(p)
    p.add_argument("--targets", default="uniform")
    p.add_argument("--method", choices=METHODS, required=False, default="random")
    p.add_argument("--samples", type=int, default=100, help="MC-sampling tree count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common(p)

    p = subs["eval"] = sub.add_parser("eval", help="masked-prior fidelity of each method")
    _add_model_args(p)
    _add_bp_args(p)
    _add_enum_args(p)
    _add_synthetic_args(p)
    p.add_argument("--synthetic", type=int, default=0,
                   help="evaluate on this many seeded synthetic graphs instead of --graph")
    p.add_argument("--targets", default="uniform")
    p.add_argument("--max-targets", type=int, default=0, help="cap targets per graph (0: no cap)")
    p.add_argument("--method", default="graphshapley,random,pagerank,sensitivity,mc-sampling",
                   help="comma-separated methods")
    p.add_argument("--fraction", type=float, default=0.25)
    p.add_argument("--fractions", type=_fractions, default=[0.1, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--d-values", type=str, default="",
                   help="comma-separated distance bounds for the D sweep (empty: skip)")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)

    p = subs["bench"] = sub.add_parser("bench", help="message updates with and without warm starts")
    _add_model_args(p)
    _add_bp_args(p)
    _add_enum_args(p)
    p.add_argument("--path-length", type=int, default=0,
                   help="benchmark a synthetic path of this many nodes instead of --graph")
    p.add_argument("--targets", default="0")
    _add_common(p)

    p = subs["generate"] = sub.add_parser("generate", help="write a synthetic homophily MRF")
    _add_synthetic_args(p)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    return parser, subs


def _add_synthetic_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=KINDS, default="erdos-renyi")
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--homophily", type=float, default=0.9)
    p.add_argument("--biased-fraction", type=float, default=0.8)
    p.add_argument("--bias", type=float, default=0.9)
    p.add_argument("--mean-degree", type=float, default=3.0)


# ---------------------------------------------------------------- helpers


def _bp_config(args) -> BpConfig:
    return BpConfig(args.bp_tol, args.bp_max_iters, args.damping)


def _enum_config(args) -> EnumConfig:
    return EnumConfig(args.max_distance, args.max_complexity)


def _load(args) -> Mrf:
    if not args.graph:
        raise GraphShapleyError("--graph is required")
    for name in ("graph", "priors", "potentials"):
        path = getattr(args, name, None)
        if path and not Path(path).exists():
            raise FileNotFoundError(path)
    return load_mrf(args.graph, args.priors, args.potentials)


def _targets(spec: str, mrf: Mrf) -> list[int]:
    spec = str(spec).strip()
    if spec == "all":
        return list(range(mrf.node_count))
    if spec == "uniform":
        return uniform_prior_nodes(mrf)
    out = []
    for tok in spec.split(","):
        t = int(tok)
        if not 0 <= t < mrf.node_count:
            raise GraphShapleyError(f"target {t} out of range [0, {mrf.node_count})")
        out.append(t)
    return out


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_config(args, out: Path) -> None:
    resolved = {k: _jsonable(v) for k, v in sorted(vars(args).items())
                if k not in ("config", "verbose")}
    (out / "config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_explanation(res: ExplanationResult, out: Path, fmt: str) -> None:
    stem = out / f"explain_target{res.target}"
    records = sorted(res.records, key=lambda r: (-r.shapley_value, r.node))
    diag = {k: _jsonable(v) for k, v in res.diagnostics.items()}
    if fmt == "json":
        doc = {"target": res.target,
               "records": [{"node": r.node, "shapley_value": r.shapley_value,
                            "coalition_count": r.coalition_count} for r in records],
               "diagnostics": diag}
        stem.with_suffix(".json").write_text(json.dumps(doc, indent=1) + "\n")
        return
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "shapley_value", "coalition_count"])
        for r in records:
            w.writerow([r.node, _fmt(r.shapley_value), r.coalition_count])
    stem.with_suffix(".json").write_text(json.dumps({"target": res.target, "diagnostics": diag},
                                                    indent=1) + "\n")


def _write_ranking(rk: Ranking, out: Path, fmt: str) -> None:
    stem = out / f"baseline_{rk.method}_target{rk.target}"
    rows = [(i, rk.scores[i], rk.counts.get(i, "")) for i in rk.order]
    if fmt == "json":
        doc = {"method": rk.method, "target": rk.target, "seed": rk.seed,
               "records": [{"node": i, "score": s, "coalition_count": c or None} for i, s, c in rows]}
        stem.with_suffix(".json").write_text(json.dumps(doc, indent=1) + "\n")
        return
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "node", "score", "coalition_count"])
        for i, s, c in rows:
            w.writerow([rk.method, i, _fmt(s), c])


def _explain_job(job):
    mrf, target, enum_cfg, bp_cfg = job
    try:
        return explain(mrf, target, enum_cfg, bp_cfg), None
    except GraphShapleyError as exc:
        return target, exc


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------- commands


def cmd_infer(args, out: Path) -> int:
    mrf = _load(args)
    result = run_bp(mrf, _bp_config(args))
    beliefs = all_beliefs(mrf, result.messages)
    with open(out / "beliefs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node"] + [f"b_{k}" for k in range(mrf.class_count)])
        for i, b in enumerate(beliefs):
            w.writerow([i] + [_fmt(x) for x in b])
    report = {"converged": result.converged, "iterations": result.iterations_used,
              "message_updates": result.message_updates, "max_change": result.max_change}
    (out / "convergence.json").write_text(json.dumps(report, indent=1) + "\n")
    if not result.converged:
        log.warning("BP did not converge within %d iterations", args.bp_max_iters)
    return EXIT_OK


def cmd_explain(args, out: Path) -> int:
    mrf = _load(args)
    jobs = [(mrf, t, _enum_config(args), _bp_config(args)) for t in _targets(args.targets, mrf)]
    failed = 0
    for res, err in _map(_explain_job, jobs, args.workers):
        if err is not None:
            failed += 1
            log.error("target %s failed: %s", res, err)
            continue
        _write_explanation(res, out, args.format)
    if failed:
        return EXIT_PARTIAL if failed < len(jobs) else EXIT_NUMERICAL
    return EXIT_OK


def _baseline_job(job):
    method, mrf, target, enum_cfg, bp_cfg, samples, seed = job
    try:
        if method == "random":
            return random_ranking(mrf, target, seed), None
        if method == "pagerank":
            return pagerank_ranking(mrf, target), None
        if method == "sensitivity":
            return sensitivity_ranking(mrf, target, bp_cfg), None
        return mc_sampling_shapley(mrf, target, enum_cfg, bp_cfg, samples, seed), None
    except GraphShapleyError as exc:
        return target, exc


def cmd_baseline(args, out: Path) -> int:
    mrf = _load(args)
    jobs = [(args.method, mrf, t, _enum_config(args), _bp_config(args), args.samples, args.seed)
            for t in _targets(args.targets, mrf)]
    failed = 0
    for rk, err in _map(_baseline_job, jobs, args.workers):
        if err is not None:
            failed += 1
            log.error("target %s failed: %s", rk, err)
            continue
        _write_ranking(rk, out, args.format)
    if failed:
        return EXIT_PARTIAL if failed < len(jobs) else EXIT_NUMERICAL
    return EXIT_OK


def _instances(args) -> list:
    if args.synthetic:
        mrfs = [(f"synthetic{s}", generate_synthetic(
            args.kind, args.nodes, args.classes, args.homophily, args.biased_fraction,
            args.seed + s, bias=args.bias, mean_degree=args.mean_degree))
            for s in range(args.synthetic)]
    else:
        if not args.graph:
            raise GraphShapleyError("eval needs --graph or --synthetic N")
        mrfs = [(Path(args.graph).stem, _load(args))]
    instances = []
    for name, mrf in mrfs:
        targets = [t for t in _targets(args.targets, mrf) if mrf.degree(t) > 0]
        if args.max_targets:
            targets = targets[: args.max_targets]
        instances.append((name, mrf, targets))
    return instances


def cmd_eval(args, out: Path) -> int:
    instances = _instances(args)
    fractions = sorted(set(args.fractions) | {args.fraction})
    cfg = EvalConfig(args.fraction, tuple(fractions), args.seed, args.samples,
                     args.biased_fraction, args.bias, _enum_config(args), _bp_config(args))
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    report = sweep_fractions(instances, methods, cfg, workers=args.workers)
    (out / "fidelity_long.csv").write_text(report.long_csv())
    (out / "fraction_sweep.csv").write_text(report.sweep_csv())
    summary = report.summary()
    if args.d_values:
        ds = sorted(_bound(x) for x in args.d_values.split(","))
        drep = d_sensitivity(instances, ds, cfg.enum.max_complexity, cfg)
        (out / "d_sensitivity.csv").write_text(drep.sweep_csv("max_distance"))
        summary += "\nD sensitivity\n" + drep.summary("max_distance")
        report.rows += [r for r in drep.rows if r.get("error")]
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    failures = sum(1 for r in report.rows if r.get("error"))
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_bench(args, out: Path) -> int:
    if args.path_length:
        n = args.path_length
        rng = np.random.default_rng(0)
        priors = rng.dirichlet(np.ones(2), size=n)
        psi = np.array([[0.9, 0.1], [0.1, 0.9]])
        mrf = Mrf(priors, [(i, i + 1) for i in range(n - 1)], psi)
    else:
        mrf = _load(args)
    enum_cfg, bp_cfg = _enum_config(args), _bp_config(args)
    lines = []
    for t in _targets(args.targets, mrf):
        rep = speedup_benchmark(mrf, t, enum_cfg, bp_cfg)
        (out / f"speedup_target{t}.csv").write_text(rep.csv())
        lines.append(f"target {t}: adaptive {rep.adaptive_total} updates, scratch {rep.scratch_total}"
                     f" updates, max |SV diff| {rep.sv_max_abs_diff:.3g}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args, out: Path) -> int:
    mrf = generate_synthetic(args.kind, args.nodes, args.classes, args.homophily,
                             args.biased_fraction, args.seed, bias=args.bias,
                             mean_degree=args.mean_degree)
    save_mrf(mrf, out / "graph.txt", out / "priors.csv", out / "potentials.json")
    return EXIT_OK


HANDLERS = {"infer": cmd_infer, "explain": cmd_explain, "baseline": cmd_baseline,
            "eval": cmd_eval, "bench": cmd_bench, "generate": cmd_generate}


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        saved = json.loads(Path(args.config).read_text())
        saved.pop("command", None)
        # the file only replaces defaults, so flags given explicitly still win
        subs[args.command].set_defaults(**saved)
        args = parser.parse_args(argv)
        for key in ("max_distance", "max_complexity"):
            if hasattr(args, key):
                setattr(args, key, _bound(getattr(args, key)))
        if hasattr(args, "fractions"):
            args.fractions = _fractions(args.fractions)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_config(args, out)
        return HANDLERS[args.command](args, out)
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (GraphShapleyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
