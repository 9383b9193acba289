"""Command-line front end: ``espp <command> [flags]``.

Exit codes: 0 success, 1 bad flags or unreadable input, 2 no feasible path.
All randomness comes from ``--seed`` (default 0).
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path as FsPath
from typing import Optional, Sequence

from . import bench
from .exact import (
    DEFAULT_MAX_LABELS,
    DEFAULT_TIME_BUDGET,
    NegativeCycleFlag,
    NoPathError,
    bellman_ford_to_sink,
    brute_force_solve,
    extract_path,
    labeling_solve,
)
from .graph import GeneratorSpec, generate, read_graph, write_graph
from .loss import PENALTY_PRESETS, LossConfig, slack
from .model import edge_probabilities, read_values, write_values
from .search import DEFAULT_BEAM_WIDTH, DecodeConfig, PathResult, sample_decode
from .solver import SolverConfig, solve_espp

FAMILY_ALIASES = {
    "er": "erdos-renyi",
    "erdos-renyi": "erdos-renyi",
    "grid": "grid",
    "ba": "barabasi-albert",
    "barabasi-albert": "barabasi-albert",
}
ARROW = " → "


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2; 2 means infeasible here
        raise UsageError(message)


def _fmt(x: float) -> str:
    return f"{x:.6f}" if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def format_path(nodes: Sequence[int]) -> str:
    return ARROW.join(str(v) for v in nodes) if nodes else "-"


def format_result(res: PathResult) -> str:
    lines = [
        f"solver: {res.solver}",
        f"feasible: {'true' if res.feasible else 'false'}",
        f"path: {format_path(res.nodes)}",
        f"cost: {_fmt(res.cost)}",
        f"samples_used: {res.samples_used}",
        f"wall_time_s: {res.wall_time:.3f}",
    ]
    for k in sorted(res.extra):
        v = res.extra[k]
        lines.append(f"{k}: {_fmt(v) if isinstance(v, float) else v}")
    return "\n".join(lines)


def _solver_config(args) -> SolverConfig:
    lam_flow, lam_ncc = PENALTY_PRESETS[args.preset]
    loss = LossConfig(lam_flow=lam_flow, lam_ncc=lam_ncc, tau=args.tau)
    return SolverConfig(loss=loss, step_size=args.lr, max_iters=args.max_iters, seed=args.seed)


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    spec = GeneratorSpec(
        family=FAMILY_ALIASES[args.family],
        node_count=args.nodes,
        edge_probability=args.edge_prob,
        attachment_count=args.attach,
        weight_distribution=args.weights,
        flip_probability=args.flip_prob,
        seed=args.seed,
    )
    out = FsPath(args.out)
    if out.suffix == ".json":
        if args.count != 1:
            raise UsageError("--out FILE.json writes a single graph; use --count 1 or a directory")
        write_graph(generate(spec), str(out))
        print(f"wrote {out}")
        return 0
    written = bench.build_dataset(out, spec, args.count, args.seed)
    print(" ".join(f"{k}={len(v)}" for k, v in written.items()) + f" -> {out}")
    return 0


def cmd_solve(args) -> int:
    g = read_graph(args.graph)
    trace: list = []
    res = solve_espp(
        g,
        _solver_config(args),
        n_samples=args.samples,
        beam_width=args.beam_width,
        fallback=not args.no_fallback,
        trace=trace,
    )
    print(format_result(res))
    run = trace[0]
    if args.values_out:
        write_values(run.values, args.values_out)
    if args.trace_out:
        bench.write_text(args.trace_out, bench.table_csv(run.rows(), ["iteration", *run.losses[0].columns()]))
    return 0 if res.feasible else 2


def cmd_exact(args) -> int:
    g = read_graph(args.graph)
    if args.method == "bf":
        vals = bellman_ford_to_sink(g)
        if isinstance(vals, NegativeCycleFlag):
            print("method: bellman-ford")
            print("negative_cycle: true")
            print(f"iterations: {vals.iterations}")
            return 2
        path = extract_path(g, vals)
        print("method: bellman-ford")
        print("negative_cycle: false")
        print(f"convergence_iteration: {vals.convergence_iteration}")
        print(f"path: {format_path(path.nodes if path else ())}")
        print(f"optimum: {_fmt(float(vals.values[g.source]))}")
        return 0 if path is not None else 2
    if args.method == "bruteforce":
        res = brute_force_solve(g)
    else:
        res = labeling_solve(g, args.max_labels, args.time_budget)
    print(f"method: {res.method}")
    print(f"path: {format_path(res.nodes or ())}")
    print(f"optimum: {_fmt(res.optimum)}")
    print(f"expanded_labels: {res.expanded_labels}")
    print(f"truncated: {'true' if res.truncated else 'false'}")
    print(f"wall_time_s: {res.wall_time:.3f}")
    return 0 if res.path is not None else 2


def cmd_decode(args) -> int:
    g = read_graph(args.graph)
    values = read_values(args.values, g.node_count)
    cfg = DecodeConfig(n_trials=args.samples, seed=args.seed, mode=args.mode, elementary=not args.no_elementary)
    res = sample_decode(g, edge_probabilities(g, values), cfg)
    print(format_result(res))
    return 0 if res.feasible else 2


def _print_summary(rows: Sequence[dict]) -> None:
    print(f"{'method':<14} {'mean_gap':>10} {'std_gap':>10} {'mean_time':>10} {'infeasible':>10}")
    for r in rows:
        print(
            f"{r['method']:<14} {r['mean_gap']:>10.2f} {r['std_gap']:>10.2f} "
            f"{r['mean_time']:>10.3f} {r['infeasible']:>10d}"
        )


def _summary_path(args) -> str:
    if args.summary_out:
        return args.summary_out
    out = FsPath(args.out)
    return str(out.with_name(out.stem + ".summary.csv"))


def _check_dataset(args) -> None:
    if not FsPath(args.dataset).is_dir():
        raise FileNotFoundError(f"dataset directory {args.dataset} not found")


def cmd_bench(args) -> int:
    _check_dataset(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    spec = bench.ExperimentSpec(
        dataset=args.dataset,
        methods=methods,
        solver=_solver_config(args),
        n_samples=args.samples,
        beam_width=args.beam_width,
        max_labels=args.max_labels,
        time_budget=args.time_budget,
        seed=args.seed,
        split=args.split,
        jobs=args.jobs,
    )
    bench.load_dataset(args.dataset, args.split)  # fail early on an empty split
    timing = not args.no_timing
    FsPath(args.out).unlink(missing_ok=True)
    with bench.RecordWriter(args.out, timing) as writer:
        _, summary = bench.run_experiment(spec, writer)
    bench.write_text(_summary_path(args), bench.summary_csv(summary, timing))
    _print_summary(summary)
    return 0


def cmd_ablate(args) -> int:
    _check_dataset(args)
    drops = []
    for item in args.drop or ["da,dpa,ab,adv,phi"]:
        drops += [c.strip() for c in item.split(",") if c.strip()]
    bad = [c for c in drops if c not in bench.ABLATIONS]
    if bad:
        raise UsageError(f"--drop expects components from {','.join(bench.ABLATIONS)}; got {','.join(bad)}")
    graphs = [g for _, g in bench.load_dataset(args.dataset, args.split)]
    records, summary = bench.ablation_study(
        graphs, drops, _solver_config(args), args.samples, args.seed, args.beam_width, args.jobs
    )
    timing = not args.no_timing
    bench.write_text(args.out, bench.records_csv(records, timing))
    bench.write_text(_summary_path(args), bench.summary_csv(summary, timing))
    _print_summary(summary)
    return 0


def cmd_inspect(args) -> int:
    g = read_graph(args.graph)
    values = read_values(args.values, g.node_count)
    d = values.values
    delta = slack(g, values)
    p = edge_probabilities(g, values).probs
    print(f"{'u':>4} {'v':>4} {'w':>12} {'d(u)':>12} {'d(v)':>12} {'slack':>12} {'p':>10}")
    for e in range(g.edge_count):
        u, v = int(g.src[e]), int(g.dst[e])
        print(f"{u:>4} {v:>4} {g.weight[e]:>12.6f} {d[u]:>12.6f} {d[v]:>12.6f} {delta[e]:>12.6f} {p[e]:>10.6f}")
    return 0


# --------------------------------------------------------------------------
# parser


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def _add_solver_flags(p) -> None:
    p.add_argument("--samples", type=_positive_int, default=100, help="decoding trials per instance (default 100)")
    p.add_argument(
        "--preset", choices=sorted(PENALTY_PRESETS), default="medium", help="penalty weights (default medium)"
    )
    p.add_argument("--tau", type=float, default=0.5, help="softmin/softmax temperature (default 0.5)")
    p.add_argument("--lr", type=float, default=1e-2, help="Adam step size (default 0.01)")
    p.add_argument("--max-iters", type=_positive_int, default=2000, help="optimizer iterations (default 2000)")
    p.add_argument(
        "--beam-width", type=_positive_int, default=DEFAULT_BEAM_WIDTH, help="reference beam width (default 200)"
    )
    _add_seed(p)


def _add_bench_io(p) -> None:
    p.add_argument("--dataset", required=True, help="dataset directory with train/test/val splits")
    p.add_argument("--split", default="test", help="split to evaluate (default test)")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--summary-out", help="summary CSV path (default <out>.summary.csv)")
    p.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")
    p.add_argument("--no-timing", action="store_true", help="leave wall-time columns blank (byte-stable CSVs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="espp", description="Elementary shortest paths with negative cycles.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--family", choices=sorted(FAMILY_ALIASES), default="er", help="graph family (default er)")
    p.add_argument("--nodes", type=_positive_int, default=30, help="node count (default 30)")
    p.add_argument("--edge-prob", type=float, default=0.2, help="Erdos-Renyi edge probability (default 0.2)")
    p.add_argument("--attach", type=_positive_int, default=2, help="Barabasi-Albert attachments (default 2)")
    p.add_argument(
        "--weights", choices=["uniform", "normal", "lognormal"], default="uniform", help="weight law (default uniform)"
    )
    p.add_argument(
        "--flip-prob", type=float, default=0.5, help="sign-flip probability for normal/lognormal (default 0.5)"
    )
    p.add_argument("--count", type=_positive_int, default=1, help="instances to generate (default 1)")
    p.add_argument("--out", required=True, help="output directory, or FILE.json with --count 1")
    _add_seed(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="train node values and decode a path")
    p.add_argument("--graph", required=True, help="graph JSON file")
    _add_solver_flags(p)
    p.add_argument("--no-fallback", action="store_true", help="report the decoded path even if beam is cheaper")
    p.add_argument("--values-out", help="write trained node values to this JSON file")
    p.add_argument("--trace-out", help="write the per-iteration loss trace to this CSV file")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact", help="exact or classical solver")
    p.add_argument("--graph", required=True, help="graph JSON file")
    p.add_argument("--method", choices=["labeling", "bruteforce", "bf"], default="labeling", help="(default labeling)")
    p.add_argument("--max-labels", type=_positive_int, default=DEFAULT_MAX_LABELS, help="labeling label budget")
    p.add_argument("--time-budget", type=float, default=DEFAULT_TIME_BUDGET, help="labeling time budget in seconds")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("decode", help="sample paths from stored node values")
    p.add_argument("--graph", required=True, help="graph JSON file")
    p.add_argument("--values", required=True, help="node values JSON file")
    p.add_argument("--samples", type=_positive_int, default=100, help="decoding trials (default 100)")
    p.add_argument("--mode", choices=["sample", "greedy"], default="sample", help="(default sample)")
    p.add_argument("--no-elementary", action="store_true", help="allow revisits during the walk")
    _add_seed(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="run methods over a dataset split")
    _add_bench_io(p)
    p.add_argument(
        "--methods", default="espp-nnaa,beam", help=f"comma list from {','.join(bench.METHODS)} (default espp-nnaa,beam)"
    )
    p.add_argument("--max-labels", type=_positive_int, default=DEFAULT_MAX_LABELS, help="labeling label budget")
    p.add_argument("--time-budget", type=float, default=DEFAULT_TIME_BUDGET, help="labeling time budget in seconds")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="leave-one-out over loss components")
    _add_bench_io(p)
    p.add_argument(
        "--drop", action="append", help="component(s) to drop: da,dpa,ab,adv,phi (repeatable; default all)"
    )
    _add_solver_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="per-edge table of weights, values, slack and probability")
    p.add_argument("--graph", required=True, help="graph JSON file")
    p.add_argument("--values", required=True, help="node values JSON file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except NoPathError as exc:
        print("feasible: false")
        print(f"reason: {exc}")
        return 2
    except UsageError as exc:
        print(f"espp: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"espp: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
