"""Directed weighted graphs with a designated source and sink.

Also home to the synthetic instance generators (Erdős–Rényi, grid,
Barabási–Albert), negative-cycle detection and the JSON file format.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import networkx as nx
import numpy as np

FAMILIES = ("erdos-renyi", "grid", "barabasi-albert")
WEIGHT_DISTRIBUTIONS = ("uniform", "normal", "lognormal")
MAX_GENERATION_RETRIES = 100


class GraphError(ValueError):
    """A Graph invariant is violated."""


class GraphFormatError(ValueError):
    """A graph document could not be parsed."""


class MissingEdgeError(KeyError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable directed graph G = (V, E, w) with source ``s`` and sink ``t``.

    Edges are kept in insertion order; ``src``, ``dst`` and ``weight`` are
    parallel numpy arrays indexed by edge id.  ``out_edges[u]`` and
    ``in_edges[u]`` list edge ids leaving / entering ``u``.
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    source: int
    sink: int
    out_edges: tuple = field(repr=False)
    in_edges: tuple = field(repr=False)
    _index: dict = field(repr=False)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int, float]],
        source: int,
        sink: int,
    ) -> "Graph":
        edges = list(edges)
        n = int(node_count)
        if n < 2:
            raise GraphError(f"node_count must be at least 2, got {node_count}")
        for name, x in (("source", source), ("sink", sink)):
            if not 0 <= x < n:
                raise GraphError(f"{name} {x} out of range [0, {n})")
        if source == sink:
            raise GraphError("source and sink must differ")

        index: dict[tuple[int, int], int] = {}
        out_edges: list[list[int]] = [[] for _ in range(n)]
        in_edges: list[list[int]] = [[] for _ in range(n)]
        src = np.empty(len(edges), dtype=np.int64)
        dst = np.empty(len(edges), dtype=np.int64)
        weight = np.empty(len(edges), dtype=np.float64)
        for k, (u, v, w) in enumerate(edges):
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) has a node id outside [0, {n})")
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if (u, v) in index:
                raise GraphError(f"parallel edge ({u}, {v})")
            if not math.isfinite(w):
                raise GraphError(f"edge ({u}, {v}) has non-finite weight {w}")
            index[(u, v)] = k
            out_edges[u].append(k)
            in_edges[v].append(k)
            src[k], dst[k], weight[k] = u, v, w
        for arr in (src, dst, weight):
            arr.setflags(write=False)
        return cls(
            node_count=n,
            src=src,
            dst=dst,
            weight=weight,
            source=int(source),
            sink=int(sink),
            out_edges=tuple(tuple(e) for e in out_edges),
            in_edges=tuple(tuple(e) for e in in_edges),
            _index=index,
        )

    @property
    def edge_count(self) -> int:
        return len(self.src)

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(u), int(v), float(w)) for u, v, w in zip(self.src, self.dst, self.weight)]

    def edge_id(self, u: int, v: int) -> Optional[int]:
        return self._index.get((u, v))

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._index

    def successors(self, u: int) -> list[int]:
        return [int(self.dst[e]) for e in self.out_edges[u]]

    def predecessors(self, v: int) -> list[int]:
        return [int(self.src[e]) for e in self.in_edges[v]]

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.node_count)

    def with_edges(self, edges: Iterable[tuple[int, int, float]]) -> "Graph":
        return Graph.from_edges(self.node_count, edges, self.source, self.sink)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the isomorphic graph where node ``u`` becomes ``perm[u]``."""
        perm = list(perm)
        return Graph.from_edges(
            self.node_count,
            [(perm[u], perm[v], w) for u, v, w in self.edges()],
            perm[self.source],
            perm[self.sink],
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.source == other.source
            and self.sink == other.sink
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
        )

    def __hash__(self) -> int:
        return hash((self.node_count, self.source, self.sink, self.edge_count))


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    cost: float

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Cycle:
    """Closed walk; the edge ``nodes[-1] -> nodes[0]`` is implied."""

    nodes: tuple[int, ...]
    cost: float

    def edge_pairs(self) -> list[tuple[int, int]]:
        k = len(self.nodes)
        return [(self.nodes[i], self.nodes[(i + 1) % k]) for i in range(k)]


def path_cost(g: Graph, nodes: Sequence[int]) -> float:
    total = 0.0
    for u, v in zip(nodes[:-1], nodes[1:]):
        e = g.edge_id(u, v)
        if e is None:
            raise MissingEdgeError(f"({u}, {v}) is not an edge")
        total += g.weight[e]
    return float(total)


def is_elementary_st_path(g: Graph, nodes: Sequence[int]) -> bool:
    if len(nodes) < 2 or nodes[0] != g.source or nodes[-1] != g.sink:
        return False
    if len(set(nodes)) != len(nodes):
        return False
    return all(g.has_edge(u, v) for u, v in zip(nodes[:-1], nodes[1:]))


# --------------------------------------------------------------------------
# negative cycles


def detect_negative_cycle(g: Graph) -> Optional[Cycle]:
    """Bellman-Ford from a virtual super-source; returns one negative cycle or None."""
    n = g.node_count
    dist = [0.0] * n
    pred = [-1] * n
    edges = g.edges()
    last = -1
    for _ in range(n):
        last = -1
        for u, v, w in edges:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
                pred[v] = u
                last = v
        if last == -1:
            return None
    # ``last`` was relaxed in round n, so walking back n predecessors lands on a cycle.
    x = last
    for _ in range(n):
        x = pred[x]
    cyc = [x]
    y = pred[x]
    while y != x:
        cyc.append(y)
        y = pred[y]
    cyc.reverse()
    return Cycle(tuple(cyc), path_cost(g, cyc + [cyc[0]]))


# --------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GeneratorSpec:
    family: str = "erdos-renyi"
    node_count: int = 30
    edge_probability: float = 0.2
    attachment_count: int = 2
    weight_distribution: str = "uniform"
    weight_params: tuple[float, float] = (0.0, 1.0)
    flip_probability: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.weight_distribution not in WEIGHT_DISTRIBUTIONS:
            raise ValueError(f"unknown weight distribution {self.weight_distribution!r}")
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if self.family == "erdos-renyi" and not 0.0 < self.edge_probability <= 1.0:
            raise ValueError("edge_probability must lie in (0, 1]")
        if self.family == "barabasi-albert" and not 1 <= self.attachment_count < self.node_count:
            raise ValueError("attachment_count must lie in [1, node_count)")
        if self.weight_params[1] <= 0 and self.weight_distribution != "uniform":
            raise ValueError("scale parameter must be positive")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")


def _draw_weights(spec: GeneratorSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    if spec.weight_distribution == "uniform":
        return rng.uniform(-1.0, 1.0, size)
    mu, sigma = spec.weight_params
    if spec.weight_distribution == "normal":
        w = rng.normal(mu, sigma, size)
    else:
        w = rng.lognormal(mu, sigma, size)
    flip = rng.random(size) < spec.flip_probability
    return np.where(flip, -w, w)


def _er_pairs(n: int, p: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    us, vs = np.nonzero(mask)
    return list(zip(us.tolist(), vs.tolist()))


def grid_shape(n: int) -> tuple[int, int]:
    rows = max(1, math.isqrt(n))
    return rows, -(-n // rows)


def _grid_pairs(n: int) -> list[tuple[int, int]]:
    # row-major lattice, last row may be partial
    _, cols = grid_shape(n)
    pairs = []
    for u in range(n):
        r, c = divmod(u, cols)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= cc < cols and rr >= 0:
                v = rr * cols + cc
                if v < n:
                    pairs.append((u, v))
    return pairs


def _ba_pairs(n: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    ug = nx.barabasi_albert_graph(n, m, seed=int(rng.integers(2**32)))
    pairs = []
    for a, b in sorted(ug.edges()):
        pairs.append((a, b))
        pairs.append((b, a))
    return pairs


def bfs_depths(g_succ: Sequence[Sequence[int]], start: int) -> list[int]:
    depth = [-1] * len(g_succ)
    depth[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g_succ[u]:
            if depth[v] < 0:
                depth[v] = depth[u] + 1
                queue.append(v)
    return depth


def generate(spec: GeneratorSpec) -> Graph:
    """Draw a seeded instance; s = 0 and t is the deepest BFS node from s."""
    rng = np.random.default_rng(spec.seed)
    n = spec.node_count
    for _ in range(MAX_GENERATION_RETRIES):
        if spec.family == "erdos-renyi":
            pairs = _er_pairs(n, spec.edge_probability, rng)
        elif spec.family == "grid":
            pairs = _grid_pairs(n)
        else:
            pairs = _ba_pairs(n, spec.attachment_count, rng)
        weights = _draw_weights(spec, rng, len(pairs))

        succ: list[list[int]] = [[] for _ in range(n)]
        for u, v in pairs:
            succ[u].append(v)
        depth = bfs_depths(succ, 0)
        best = max(depth)
        if best <= 0:
            continue
        sink = depth.index(best)  # lowest id among the deepest
        return Graph.from_edges(
            n, [(u, v, w) for (u, v), w in zip(pairs, weights.tolist())], 0, sink
        )
    raise GenerationError(
        f"no s-t path after {MAX_GENERATION_RETRIES} draws for {spec}; "
        "edge_probability is probably too low"
    )


def instance_seed(master_seed: int, index: int) -> int:
    """Per-instance seed derived from (master seed, index), independent of execution order."""
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# file format


def _fmt(w: float) -> str:
    return format(w, ".17g") if math.isfinite(w) else ('"inf"' if w > 0 else '"-inf"')


def dumps_graph(g: Graph) -> str:
    lines = [
        "{",
        f'  "node_count": {g.node_count},',
        f'  "source": {g.source},',
        f'  "sink": {g.sink},',
        '  "edges": [',
    ]
    body = [f"    [{u}, {v}, {_fmt(w)}]" for u, v, w in g.edges()]
    if body:
        lines.append(",\n".join(body))
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def write_graph(g: Graph, sink: IO[str] | str) -> None:
    text = dumps_graph(g)
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def loads_graph(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("top-level value must be an object")
    missing = {"node_count", "source", "sink", "edges"} - set(doc)
    if missing:
        raise GraphFormatError(f"missing field(s): {', '.join(sorted(missing))}")
    edges = []
    for k, item in enumerate(doc["edges"]):
        if not (isinstance(item, list) and len(item) == 3):
            raise GraphFormatError(f"edges[{k}] must be a [u, v, w] triple")
        u, v, w = item
        if not (isinstance(u, int) and isinstance(v, int)):
            raise GraphFormatError(f"edges[{k}] endpoints must be integers")
        try:
            edges.append((u, v, float(w)))
        except (TypeError, ValueError) as exc:
            raise GraphFormatError(f"edges[{k}] weight {w!r} is not a number") from exc
    return Graph.from_edges(doc["node_count"], edges, doc["source"], doc["sink"])


def read_graph(source: IO[str] | IO[bytes] | str) -> Graph:
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            return loads_graph(fh.read())
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return loads_graph(data)


def to_networkx(g: Graph) -> nx.DiGraph:
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.node_count))
    dg.add_weighted_edges_from(g.edges())
    return dg


__all__ = [
    "Cycle",
    "GenerationError",
    "GeneratorSpec",
    "Graph",
    "GraphError",
    "GraphFormatError",
    "MissingEdgeError",
    "Path",
    "detect_negative_cycle",
    "dumps_graph",
    "generate",
    "instance_seed",
    "is_elementary_st_path",
    "loads_graph",
    "path_cost",
    "read_graph",
    "write_graph",
]
