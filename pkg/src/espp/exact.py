"""Exact reference solvers for the elementary shortest path problem.

``labeling_solve`` is a monodirectional labeling algorithm over
(node, visited set, cost) states with subset dominance.  ``brute_force_solve``
enumerates every elementary s-t path and is only meant as a test oracle.
``bellman_ford_to_sink`` returns exact cost-to-sink values on graphs without a
negative cycle that can reach the sink.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .graph import Graph, Path, path_cost
from .model import ValueAssignment

DEFAULT_MAX_LABELS = 5_000_000
DEFAULT_TIME_BUDGET = 300.0
BRUTE_FORCE_MAX_NODES = 12


class NoPathError(RuntimeError):
    """The sink cannot be reached from the source."""


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class ExactResult:
    path: Optional[Path]
    optimum: Optional[float]
    expanded_labels: int
    wall_time: float
    truncated: bool = False
    method: str = "labeling"

    @property
    def nodes(self) -> Optional[tuple[int, ...]]:
        return None if self.path is None else self.path.nodes


class Label:
    __slots__ = ("node", "cost", "visited", "pred", "alive")

    def __init__(self, node: int, cost: float, visited: int, pred: Optional["Label"]):
        self.node = node
        self.cost = cost
        self.visited = visited
        self.pred = pred
        self.alive = True

    def dominates(self, other: "Label") -> bool:
        return self.cost <= other.cost and (self.visited | other.visited) == other.visited

    def nodes(self) -> list[int]:
        out = []
        lab: Optional[Label] = self
        while lab is not None:
            out.append(lab.node)
            lab = lab.pred
        return out[::-1]


def _reaches_sink(g: Graph) -> list[bool]:
    seen = [False] * g.node_count
    seen[g.sink] = True
    stack = [g.sink]
    while stack:
        v = stack.pop()
        for u in g.predecessors(v):
            if not seen[u]:
                seen[u] = True
                stack.append(u)
    return seen


def labeling_solve(
    g: Graph,
    max_labels: int = DEFAULT_MAX_LABELS,
    time_budget: float = DEFAULT_TIME_BUDGET,
    dominance: bool = True,
) -> ExactResult:
    """Best-first labeling with subset dominance.

    Costs may be negative, so no bound pruning is possible: every
    non-dominated label is extended, and the optimum is the cheapest label that
    reaches the sink.  If ``max_labels`` or ``time_budget`` is hit the best
    incumbent is returned with ``truncated=True``.
    """
    t0 = time.perf_counter()
    s, t = g.source, g.sink
    useful = _reaches_sink(g)
    if not useful[s]:
        raise NoPathError(f"sink {t} is unreachable from source {s}")

    succ = [
        [(int(g.dst[e]), float(g.weight[e])) for e in g.out_edges[u] if useful[g.dst[e]]]
        for u in range(g.node_count)
    ]
    buckets: list[list[Label]] = [[] for _ in range(g.node_count)]
    root = Label(s, 0.0, 1 << s, None)
    buckets[s].append(root)
    heap = [(0.0, 1, s, 0, root)]
    counter = 1
    expanded = 0
    best: Optional[Label] = None
    truncated = False

    while heap:
        _, _, _, _, lab = heapq.heappop(heap)
        if not lab.alive:
            continue
        expanded += 1
        if expanded >= max_labels or (
            expanded % 2048 == 0 and time.perf_counter() - t0 > time_budget
        ):
            truncated = True
            break
        for v, w in succ[lab.node]:
            bit = 1 << v
            if lab.visited & bit:
                continue
            new = Label(v, lab.cost + w, lab.visited | bit, lab)
            if v == t:
                if best is None or new.cost < best.cost:
                    best = new
                continue
            if dominance:
                bucket = buckets[v]
                if any(old.dominates(new) for old in bucket):
                    continue
                for old in bucket:
                    if new.dominates(old):
                        old.alive = False
                buckets[v] = [old for old in bucket if old.alive]
                buckets[v].append(new)
            counter += 1
            heapq.heappush(heap, (new.cost, new.visited.bit_count(), v, counter, new))

    wall = time.perf_counter() - t0
    if best is None:
        if truncated:
            return ExactResult(None, None, expanded, wall, truncated=True)
        raise NoPathError(f"no elementary path from {s} to {t}")
    nodes = tuple(best.nodes())
    return ExactResult(Path(nodes, path_cost(g, nodes)), best.cost, expanded, wall, truncated)


def brute_force_solve(g: Graph) -> ExactResult:
    """Depth-first enumeration of all elementary s-t paths (n <= 12)."""
    if g.node_count > BRUTE_FORCE_MAX_NODES:
        raise SizeGuardError(
            f"brute force refuses graphs above {BRUTE_FORCE_MAX_NODES} nodes (got {g.node_count})"
        )
    t0 = time.perf_counter()
    s, t = g.source, g.sink
    succ = [[(int(g.dst[e]), float(g.weight[e])) for e in g.out_edges[u]] for u in range(g.node_count)]
    best_cost = math.inf
    best_nodes: Optional[list[int]] = None
    visited = [False] * g.node_count
    stack_nodes = [s]
    count = 0

    def dfs(u: int, cost: float) -> None:
        nonlocal best_cost, best_nodes, count
        count += 1
        for v, w in succ[u]:
            if visited[v]:
                continue
            if v == t:
                c = cost + w
                cand = stack_nodes + [t]
                if c < best_cost or (c == best_cost and cand < best_nodes):
                    best_cost, best_nodes = c, cand
                continue
            visited[v] = True
            stack_nodes.append(v)
            dfs(v, cost + w)
            stack_nodes.pop()
            visited[v] = False

    visited[s] = True
    dfs(s, 0.0)
    if best_nodes is None:
        raise NoPathError(f"no elementary path from {s} to {t}")
    nodes = tuple(best_nodes)
    return ExactResult(
        Path(nodes, path_cost(g, nodes)),
        path_cost(g, nodes),
        count,
        time.perf_counter() - t0,
        method="bruteforce",
    )


@dataclass(frozen=True)
class NegativeCycleFlag:
    """Values were still changing after ``node_count`` rounds."""

    iterations: int

    def __bool__(self) -> bool:
        return False


def bellman_ford_to_sink(
    g: Graph, max_iters: Optional[int] = None
) -> Union[ValueAssignment, NegativeCycleFlag]:
    """Synchronous backward Bellman update d(u) <- min_v w_uv + d(v), d(t) = 0.

    Nodes that cannot reach t keep +inf.  ``convergence_iteration`` is the
    last round that changed a value (k*); a change in round ``node_count``
    means a negative cycle reaches the sink.
    """
    n = g.node_count
    limit = n if max_iters is None else min(max_iters, n)
    d = np.full(n, math.inf)
    d[g.sink] = 0.0
    src, dst, w = g.src, g.dst, g.weight
    k_star = 0
    for k in range(1, limit + 1):
        cand = np.full(n, math.inf)
        np.minimum.at(cand, src, w + d[dst])
        cand[g.sink] = 0.0
        new = np.minimum(d, cand)
        if np.array_equal(new, d):
            return ValueAssignment(d, convergence_iteration=k_star)
        d = new
        k_star = k
    if limit < n:
        # caller capped the rounds before convergence could be decided
        return ValueAssignment(d, convergence_iteration=None)
    return NegativeCycleFlag(iterations=limit)


def extract_path(g: Graph, values: ValueAssignment, tol: float = 1e-9) -> Optional[Path]:
    """Depth-first search over tight edges (d(u) = w_uv + d(v)) from s to t."""
    d = values.values

    def tight(e: int) -> bool:
        u, v = g.src[e], g.dst[e]
        return math.isfinite(d[v]) and abs(d[u] - g.weight[e] - d[v]) <= tol * max(1.0, abs(d[u]))

    seen = {g.source}
    stack = [(g.source, [g.source])]
    while stack:
        u, nodes = stack.pop()
        if u == g.sink:
            return Path(tuple(nodes), path_cost(g, nodes))
        # reversed so the lowest node id is explored first
        for e in sorted(g.out_edges[u], key=lambda e: -g.dst[e]):
            v = int(g.dst[e])
            if v not in seen and tight(e):
                seen.add(v)
                stack.append((v, nodes + [v]))
    return None
