"""Experiment harness: datasets, method roster, gap metric, studies, CSV output.

Gaps are signed percentages against the beam-search cost (negative means
cheaper than beam).  Every run is a pure function of the graphs and seeds;
per-instance seeds are derived from ``(master seed, instance index)`` so
serial and parallel runs agree.
"""
from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Iterable, Optional, Sequence, Union

import numpy as np

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
from .graph import GeneratorSpec, Graph, generate, instance_seed, read_graph, write_graph
from .loss import PENALTY_PRESETS, LossConfig
from .search import DecodeConfig, PathResult, beam_search, randomized_decode, sample_decode
from .solver import SolverConfig, optimize, solve_espp

METHODS = (
    "espp-nnaa",
    "espp-aa",
    "espp-nn",
    "spp-noelem",
    "beam",
    "randomized",
    "labeling",
    "bellman-ford",
)
RESULT_COLUMNS = ["instance", "method", "cost", "gap_percent", "feasible", "wall_time_s", "samples_used"]
SUMMARY_COLUMNS = ["method", "mean_gap", "std_gap", "mean_time"]
SPLITS = (("train", 0.7), ("test", 0.2), ("val", 0.1))

Dataset = Union[str, os.PathLike, Sequence[Graph]]


# --------------------------------------------------------------------------
# gap metric


def gap_percent(cost: float, beam_cost: float) -> float:
    """100 * (cost - beam) / |beam|; with beam = 0 falls back to 100 * (cost - beam)."""
    if not math.isfinite(beam_cost):
        raise ValueError("beam cost must be finite")
    if not math.isfinite(cost):
        return math.inf
    if beam_cost == 0:
        return 100.0 * (cost - beam_cost)
    return 100.0 * (cost - beam_cost) / abs(beam_cost)


def gap_uses_fallback(beam_cost: float) -> bool:
    return beam_cost == 0


# --------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class ExperimentRecord:
    instance: str
    method: str
    cost: float
    gap_percent: float
    feasible: bool
    wall_time: float
    samples_used: int
    gap_fallback: bool = False
    truncated: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    def row(self, timing: bool = True) -> list[str]:
        return [
            self.instance,
            self.method,
            _num(self.cost),
            _num(self.gap_percent),
            "true" if self.feasible else "false",
            _num(self.wall_time) if timing else "",
            str(self.samples_used),
        ]


def _num(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: Dataset
    methods: tuple[str, ...] = ("espp-nnaa", "beam")
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_samples: int = 100
    beam_width: int = 200
    max_labels: int = DEFAULT_MAX_LABELS
    time_budget: float = DEFAULT_TIME_BUDGET
    seed: int = 0
    split: str = "test"
    jobs: int = 1
    method_configs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS and m not in self.method_configs]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; expected a subset of {METHODS}")
        if isinstance(self.dataset, (str, os.PathLike)) and not FsPath(self.dataset).is_dir():
            raise FileNotFoundError(f"dataset directory {self.dataset} not found")

    def config_for(self, method: str) -> SolverConfig:
        """Solver config behind an ``espp-*`` method name."""
        if method in self.method_configs:
            return self.method_configs[method]
        if method == "espp-aa":
            return replace(self.solver, loss=self.solver.loss.without("phi"))
        if method == "espp-nn":
            loss = self.solver.loss
            return replace(
                self.solver,
                loss=LossConfig.baseline(
                    lam_flow=loss.lam_flow, lam_ncc=loss.lam_ncc, tau=loss.tau, direction=loss.direction
                ),
            )
        return self.solver


# --------------------------------------------------------------------------
# datasets


def build_dataset(
    out_dir: str | os.PathLike,
    template: GeneratorSpec,
    count: int,
    seed: int = 0,
) -> dict[str, list[FsPath]]:
    """Write ``count`` instances into ``out_dir/{train,test,val}/<index>.json`` (70/20/10)."""
    out = FsPath(out_dir)
    n_train = int(round(count * SPLITS[0][1]))
    n_test = int(round(count * SPLITS[1][1]))
    bounds = {"train": (0, n_train), "test": (n_train, n_train + n_test), "val": (n_train + n_test, count)}
    written: dict[str, list[FsPath]] = {}
    for split, (lo, hi) in bounds.items():
        (out / split).mkdir(parents=True, exist_ok=True)
        written[split] = []
        for i in range(lo, hi):
            g = generate(replace(template, seed=instance_seed(seed, i)))
            path = out / split / f"{i}.json"
            write_graph(g, path)
            written[split].append(path)
    return written


def load_dataset(path: str | os.PathLike, split: str = "test") -> list[tuple[str, Graph]]:
    root = FsPath(path)
    folder = root / split if (root / split).is_dir() else root
    files = sorted(folder.glob("*.json"), key=lambda p: (len(p.stem), p.stem))
    if not files:
        raise FileNotFoundError(f"no instances under {folder}")
    return [(f"{split}/{f.stem}" if folder != root else f.stem, read_graph(f)) for f in files]


def generate_cell(template: GeneratorSpec, count: int, seed: int = 0) -> list[Graph]:
    """In-memory instances with per-index seeds (same draws as build_dataset)."""
    return [generate(replace(template, seed=instance_seed(seed, i))) for i in range(count)]


def _instances(spec: ExperimentSpec) -> list[tuple[str, Graph]]:
    if isinstance(spec.dataset, (str, os.PathLike)):
        return load_dataset(spec.dataset, spec.split)
    return [(str(i), g) for i, g in enumerate(spec.dataset)]


# --------------------------------------------------------------------------
# running


def _espp_method(method: str) -> bool:
    return method.startswith("espp") or method == "spp-noelem"


def run_method(
    method: str, g: Graph, spec: ExperimentSpec, seed: int, beam: PathResult
) -> tuple[PathResult, bool]:
    """One method on one graph; returns (result, truncated)."""
    if method == "beam":
        return beam, False
    if method == "randomized":
        return randomized_decode(g, DecodeConfig(n_trials=spec.n_samples, seed=seed)), False
    if method == "labeling":
        ex = labeling_solve(g, spec.max_labels, spec.time_budget)
        if ex.path is None:
            return PathResult.infeasible("labeling", 0, ex.wall_time), ex.truncated
        return PathResult(ex.path, ex.optimum, "labeling", 0, ex.wall_time), ex.truncated
    if method == "bellman-ford":
        t0 = time.perf_counter()
        vals = bellman_ford_to_sink(g)
        path = None if isinstance(vals, NegativeCycleFlag) else extract_path(g, vals)
        wall = time.perf_counter() - t0
        if path is None:
            return PathResult.infeasible("bellman-ford", 0, wall), False
        return PathResult(path, path.cost, "bellman-ford", 0, wall), False
    cfg = replace(spec.config_for(method), seed=seed)
    res = solve_espp(
        g,
        cfg,
        n_samples=spec.n_samples,
        beam_width=spec.beam_width,
        solver=method,
        elementary=method != "spp-noelem",
        beam=beam,
    )
    return res, False


def evaluate_instance(name: str, g: Graph, spec: ExperimentSpec, index: int) -> list[ExperimentRecord]:
    """All methods on one instance.  Failures become infeasible rows."""
    seed = instance_seed(spec.seed, index)
    try:
        beam = beam_search(g, spec.beam_width)
    except NoPathError:
        beam = None
    records = []
    for method in spec.methods:
        truncated = False
        try:
            if beam is None:
                raise NoPathError("beam search found no path; no gap reference")
            res, truncated = run_method(method, g, spec, seed, beam)
        except Exception as exc:  # per-instance failures never abort a run
            res = PathResult.infeasible(method)
            res.extra["error"] = f"{type(exc).__name__}: {exc}"
        ref = beam.cost if beam is not None else math.nan
        gap = gap_percent(res.cost, ref) if beam is not None else math.nan
        records.append(
            ExperimentRecord(
                instance=name,
                method=method,
                cost=res.cost,
                gap_percent=gap,
                feasible=res.feasible,
                wall_time=res.wall_time,
                samples_used=res.samples_used,
                gap_fallback=beam is not None and gap_uses_fallback(ref),
                truncated=truncated,
                extra=dict(res.extra),
            )
        )
    return records


def _evaluate_packed(args):
    return evaluate_instance(*args)


def run_experiment(
    spec: ExperimentSpec, writer: Optional["RecordWriter"] = None
) -> tuple[list[ExperimentRecord], list[dict]]:
    """Evaluate every method on every instance; returns (records, summary)."""
    items = [(name, g, spec, i) for i, (name, g) in enumerate(_instances(spec))]
    records: list[ExperimentRecord] = []
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            batches = pool.map(_evaluate_packed, items)
            for batch in batches:
                records.extend(batch)
                if writer is not None:
                    writer.write_all(batch)
    else:
        for item in items:
            batch = evaluate_instance(*item)
            records.extend(batch)
            if writer is not None:
                writer.write_all(batch)
    return records, summarize(records, spec.methods)


def _mean(xs: Sequence[float]) -> float:
    if not xs or any(math.isnan(x) for x in xs):
        return math.nan
    if any(math.isinf(x) for x in xs):
        return math.inf
    return math.fsum(xs) / len(xs)


def _std(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    if not all(math.isfinite(x) for x in xs):
        return math.nan
    return statistics.pstdev(xs)


def summarize(records: Iterable[ExperimentRecord], methods: Optional[Sequence[str]] = None) -> list[dict]:
    by_method: dict[str, list[ExperimentRecord]] = {}
    for r in records:
        by_method.setdefault(r.method, []).append(r)
    order = list(methods) if methods else list(by_method)
    rows = []
    for m in order:
        rs = by_method.get(m, [])
        gaps = [r.gap_percent for r in rs]
        rows.append(
            {
                "method": m,
                "mean_gap": _mean(gaps),
                "std_gap": _std(gaps),
                "mean_time": _mean([r.wall_time for r in rs]),
                "mean_cost": _mean([r.cost for r in rs]),
                "infeasible": sum(not r.feasible for r in rs),
                "count": len(rs),
            }
        )
    return rows


# --------------------------------------------------------------------------
# CSV persistence


class RecordWriter:
    """Append-only results CSV; every row is flushed so partial files stay parseable."""

    def __init__(self, path: str | os.PathLike, timing: bool = True):
        self.path = FsPath(path)
        self.timing = timing
        new = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "a", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        if new:
            self._csv.writerow(RESULT_COLUMNS)
            self._fh.flush()

    def write(self, record: ExperimentRecord) -> None:
        self._csv.writerow(record.row(self.timing))
        self._fh.flush()

    def write_all(self, records: Iterable[ExperimentRecord]) -> None:
        for r in records:
            self.write(r)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RecordWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def records_csv(records: Iterable[ExperimentRecord], timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in records:
        w.writerow(r.row(timing))
    return buf.getvalue()


def table_csv(rows: Sequence[dict], columns: Sequence[str], timing: bool = True) -> str:
    """Summary-style CSV; with ``timing=False`` any ``*time*`` column is left blank."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row[c]
            if "time" in c and not timing:
                out.append("")
            elif isinstance(v, float):
                out.append(_num(v))
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def summary_csv(summary: Sequence[dict], timing: bool = True) -> str:
    return table_csv(summary, SUMMARY_COLUMNS, timing)


def write_text(path: str | os.PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# studies


def _graphs(dataset: Dataset, split: str = "test") -> list[Graph]:
    if isinstance(dataset, (str, os.PathLike)):
        return [g for _, g in load_dataset(dataset, split)]
    return list(dataset)


def _reference_cost(g: Graph, reference: str, beam_width: int) -> float:
    if reference == "beam":
        return beam_search(g, beam_width).cost
    if reference == "exact":
        return (brute_force_solve(g) if g.node_count <= 12 else labeling_solve(g)).optimum
    raise ValueError(f"unknown reference {reference!r}")


def sampling_study(
    dataset: Dataset,
    n_grid: Sequence[int] = (50, 100, 200),
    solver: SolverConfig = SolverConfig(),
    reference: str = "beam",
    seed: int = 0,
    beam_width: int = 200,
) -> list[dict]:
    """Train once per instance, then decode with each N (nested sample streams).

    Reports the decoded cost alone, without the beam fallback, so the effect
    of N is visible.  ``optimal_fraction`` counts decodes matching the
    reference within 1e-9.
    """
    graphs = _graphs(dataset)
    n_grid = sorted(n_grid)
    per_n: dict[int, dict[str, list]] = {n: {"gap": [], "time": [], "hit": []} for n in n_grid}
    for i, g in enumerate(graphs):
        s = instance_seed(seed, i)
        ref = _reference_cost(g, reference, beam_width)
        cfg = replace(solver, seed=s)
        if cfg.loss.use_adv:
            cfg = cfg.with_loss(advantage_reference=beam_search(g, beam_width).cost)
        run = optimize(g, cfg)
        for n in n_grid:
            res = sample_decode(g, run.probabilities, DecodeConfig(n_trials=n, seed=s))
            cell = per_n[n]
            cell["gap"].append(gap_percent(res.cost, ref))
            cell["time"].append(run.wall_time + res.wall_time)
            cell["hit"].append(res.feasible and abs(res.cost - ref) <= 1e-9)
    return [
        {
            "n_samples": n,
            "mean_gap": _mean(per_n[n]["gap"]),
            "mean_time": _mean(per_n[n]["time"]),
            "optimal_fraction": float(np.mean(per_n[n]["hit"])) if graphs else math.nan,
        }
        for n in n_grid
    ]


def penalty_sweep(
    dataset: Dataset,
    presets: Sequence[str] = ("low", "medium", "high"),
    solver: SolverConfig = SolverConfig(),
    n_samples: int = 100,
    seed: int = 0,
    beam_width: int = 200,
) -> list[dict]:
    """Per (lam_flow, lam_ncc) preset: gap, time, edge-probability entropy and phi."""
    graphs = _graphs(dataset)
    rows = []
    for name in presets:
        lam_flow, lam_ncc = PENALTY_PRESETS[name]
        cfg = solver.with_loss(lam_flow=lam_flow, lam_ncc=lam_ncc)
        gaps, times, ents, phis = [], [], [], []
        for i, g in enumerate(graphs):
            beam = beam_search(g, beam_width)
            tr: list = []
            res = solve_espp(
                g, replace(cfg, seed=instance_seed(seed, i)), n_samples, beam_width, trace=tr, beam=beam
            )
            gaps.append(gap_percent(res.cost, beam.cost))
            times.append(res.wall_time)
            ents.append(tr[0].probabilities.entropy())
            phis.append(tr[0].final.phi)
        rows.append(
            {
                "preset": name,
                "lam_flow": lam_flow,
                "lam_ncc": lam_ncc,
                "mean_gap": _mean(gaps),
                "mean_time": _mean(times),
                "median_entropy": float(np.median(ents)),
                "mean_entropy": _mean(ents),
                "mean_phi": _mean(phis),
            }
        )
    return rows


ABLATIONS = ("da", "dpa", "ab", "adv", "phi")


def ablation_study(
    dataset: Dataset,
    drops: Sequence[str] = ABLATIONS,
    solver: SolverConfig = SolverConfig(),
    n_samples: int = 100,
    seed: int = 0,
    beam_width: int = 200,
    jobs: int = 1,
) -> tuple[list[ExperimentRecord], list[dict]]:
    """Leave-one-out over loss components; method names are ``full`` and ``w/o <c>``."""
    configs = {"full": solver}
    for c in drops:
        configs[f"w/o {c}"] = replace(solver, loss=solver.loss.without(c))
    spec = ExperimentSpec(
        dataset=dataset,
        methods=tuple(configs),
        solver=solver,
        n_samples=n_samples,
        beam_width=beam_width,
        seed=seed,
        jobs=jobs,
        method_configs=configs,
    )
    return run_experiment(spec)


def _cell_study(
    templates: Sequence[tuple[str, GeneratorSpec]],
    count: int,
    methods: Sequence[str],
    solver: SolverConfig,
    n_samples: int,
    seed: int,
    jobs: int,
) -> list[dict]:
    rows = []
    for label, template in templates:
        graphs = generate_cell(template, count, seed)
        spec = ExperimentSpec(
            dataset=graphs, methods=tuple(methods), solver=solver, n_samples=n_samples, seed=seed, jobs=jobs
        )
        _, summary = run_experiment(spec)
        rows += [{"cell": label, **row} for row in summary]
    return rows


def density_study(
    node_count: int = 30,
    densities: Sequence[float] = (0.1, 0.2, 0.5),
    count: int = 100,
    methods: Sequence[str] = ("espp-nnaa", "randomized", "beam"),
    solver: SolverConfig = SolverConfig(),
    n_samples: int = 100,
    seed: int = 0,
    jobs: int = 1,
) -> list[dict]:
    templates = [
        (f"p={p}", GeneratorSpec(node_count=node_count, edge_probability=p)) for p in densities
    ]
    return _cell_study(templates, count, methods, solver, n_samples, seed, jobs)


def distribution_study(
    node_count: int = 30,
    distributions: Sequence[str] = ("uniform", "normal", "lognormal"),
    count: int = 100,
    methods: Sequence[str] = ("espp-nnaa", "randomized", "beam"),
    solver: SolverConfig = SolverConfig(),
    n_samples: int = 100,
    seed: int = 0,
    jobs: int = 1,
) -> list[dict]:
    templates = [
        (dist, GeneratorSpec(node_count=node_count, weight_distribution=dist)) for dist in distributions
    ]
    return _cell_study(templates, count, methods, solver, n_samples, seed, jobs)
