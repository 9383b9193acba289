"""Path decoders and classical heuristics.

``sample_decode`` turns edge probabilities into an elementary s-t path: each
trial walks from the source, choosing among not-yet-visited successors in
proportion to their probability, and the cheapest successful trial wins.
``beam_search`` is the level-synchronous baseline every gap is measured
against; ``randomized_decode`` is the sampler with uninformative
probabilities.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exact import NoPathError
from .graph import Graph, Path, path_cost
from .model import EdgeProbabilities

DEFAULT_BEAM_WIDTH = 200


@dataclass(frozen=True)
class DecodeConfig:
    n_trials: int = 100
    max_steps: Optional[int] = None  # defaults to node_count
    seed: int = 0
    mode: str = "sample"
    elementary: bool = True

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.mode not in ("sample", "greedy"):
            raise ValueError(f"unknown decode mode {self.mode!r}")


@dataclass(frozen=True)
class PathResult:
    path: Optional[Path]
    cost: float
    solver: str
    samples_used: int = 0
    wall_time: float = field(default=0.0, compare=False)
    feasible: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def nodes(self) -> tuple[int, ...]:
        return () if self.path is None else self.path.nodes

    @classmethod
    def infeasible(cls, solver: str, samples_used: int = 0, wall_time: float = 0.0) -> "PathResult":
        return cls(None, math.inf, solver, samples_used, wall_time, feasible=False)


def _better(a: Optional[tuple[float, tuple]], b: tuple[float, tuple]) -> bool:
    return a is None or b < a


def trial_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    # child i depends only on (seed, i): the first k trials of an n-trial run
    # are exactly the trials of a k-trial run
    return np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(n)


def _successor_table(g: Graph, p: np.ndarray) -> list[tuple[list[int], np.ndarray]]:
    table = []
    for u in range(g.node_count):
        es = sorted(g.out_edges[u], key=lambda e: g.dst[e])
        table.append(([int(g.dst[e]) for e in es], np.array([p[e] for e in es], dtype=np.float64)))
    return table


def _walk(
    g: Graph,
    table: list[tuple[list[int], np.ndarray]],
    rng: np.random.Generator,
    max_steps: int,
    greedy: bool,
    elementary: bool,
) -> Optional[list[int]]:
    s, t = g.source, g.sink
    nodes = [s]
    visited = {s}
    u = s
    for _ in range(max_steps):
        succ, probs = table[u]
        if elementary:
            keep = [i for i, v in enumerate(succ) if v not in visited]
        else:
            keep = list(range(len(succ)))
        if not keep:
            return None
        cand = [succ[i] for i in keep]
        weights = probs[keep]
        if greedy:
            v = cand[int(np.argmax(weights))]  # argmax takes the first, i.e. lowest id
        else:
            total = weights.sum()
            if total > 0 and math.isfinite(total):
                cdf = np.cumsum(weights / total)
                i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
                v = cand[min(i, len(cand) - 1)]
            else:
                v = cand[int(rng.integers(len(cand)))]
        nodes.append(v)
        visited.add(v)
        u = v
        if u == t:
            return nodes
    return None


def sample_decode(
    g: Graph,
    p: EdgeProbabilities | np.ndarray,
    cfg: DecodeConfig = DecodeConfig(),
    solver: str = "sample-decode",
) -> PathResult:
    """Best of ``cfg.n_trials`` probability-guided walks from s to t.

    Trials that dead-end or exceed ``max_steps`` are discarded.  With
    ``cfg.elementary=False`` walks may revisit nodes; those walks are still
    discarded at the end if they are not elementary.
    """
    t0 = time.perf_counter()
    probs = p.probs if isinstance(p, EdgeProbabilities) else np.asarray(p, dtype=np.float64)
    if len(probs) != g.edge_count:
        raise ValueError("edge probabilities do not cover the graph")
    table = _successor_table(g, probs)
    max_steps = cfg.max_steps or g.node_count
    greedy = cfg.mode == "greedy"
    n_trials = 1 if greedy else cfg.n_trials

    best: Optional[tuple[float, tuple]] = None
    successes = 0
    for ss in trial_seeds(cfg.seed, n_trials):
        rng = np.random.default_rng(ss)
        nodes = _walk(g, table, rng, max_steps, greedy, cfg.elementary)
        if nodes is None or len(set(nodes)) != len(nodes):
            continue
        successes += 1
        cand = (path_cost(g, nodes), tuple(nodes))
        if _better(best, cand):
            best = cand
    wall = time.perf_counter() - t0
    if best is None:
        return PathResult.infeasible(solver, n_trials, wall)
    cost, nodes = best
    return PathResult(Path(nodes, cost), cost, solver, n_trials, wall, True, {"successes": successes})


def randomized_decode(g: Graph, cfg: DecodeConfig = DecodeConfig()) -> PathResult:
    return sample_decode(g, np.ones(g.edge_count), cfg, solver="randomized")


def beam_search(g: Graph, beam_width: int = DEFAULT_BEAM_WIDTH) -> PathResult:
    """Level-synchronous beam over elementary partial paths.

    Each level keeps the ``beam_width`` cheapest partial paths (ties broken by
    the node sequence); completed s-t paths are collected along the way.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    t0 = time.perf_counter()
    s, t = g.source, g.sink
    succ = [
        sorted((int(g.dst[e]), float(g.weight[e])) for e in g.out_edges[u])
        for u in range(g.node_count)
    ]
    beam: list[tuple[float, tuple[int, ...]]] = [(0.0, (s,))]
    best: Optional[tuple[float, tuple]] = None
    for _ in range(g.node_count - 1):
        children = []
        for cost, nodes in beam:
            u = nodes[-1]
            for v, w in succ[u]:
                if v in nodes:
                    continue
                child = (cost + w, nodes + (v,))
                if v == t:
                    if _better(best, child):
                        best = child
                else:
                    children.append(child)
        if not children:
            break
        beam = heapq.nsmallest(beam_width, children) if len(children) > beam_width else children
    wall = time.perf_counter() - t0
    if best is None:
        raise NoPathError(f"beam search found no path from {s} to {t}")
    # re-evaluate the cost left to right so it matches path_cost bit for bit
    cost = path_cost(g, best[1])
    return PathResult(Path(best[1], cost), cost, "beam", 0, wall, True, {"beam_width": beam_width})


def greedy_decode(g: Graph, p: EdgeProbabilities | np.ndarray) -> PathResult:
    return sample_decode(g, p, DecodeConfig(n_trials=1, mode="greedy"), solver="greedy")


def best_of(results: Sequence[PathResult], solver: str) -> PathResult:
    feasible = [r for r in results if r.feasible]
    if not feasible:
        return PathResult.infeasible(solver, sum(r.samples_used for r in results))
    win = min(feasible, key=lambda r: (r.cost, r.nodes))
    return PathResult(
        win.path,
        win.cost,
        solver,
        sum(r.samples_used for r in results),
        sum(r.wall_time for r in results),
        True,
        {"winner": win.solver},
    )
