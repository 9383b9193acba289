"""Elementary shortest paths on directed graphs with negative-cost cycles.

Exact solvers (labeling, brute force, Bellman-Ford), a per-instance learned
value heuristic with sampling-based decoding, and a benchmark harness.
"""
from .exact import (
    ExactResult,
    NegativeCycleFlag,
    NoPathError,
    bellman_ford_to_sink,
    brute_force_solve,
    labeling_solve,
)
from .graph import (
    Cycle,
    GeneratorSpec,
    Graph,
    Path,
    detect_negative_cycle,
    generate,
    path_cost,
    read_graph,
    write_graph,
)
from .loss import LossConfig, evaluate, total_loss
from .model import EdgeProbabilities, ValueAssignment, edge_probabilities, init_values
from .search import DecodeConfig, PathResult, beam_search, randomized_decode, sample_decode
from .solver import SolverConfig, optimize, solve_espp

__all__ = [
    "Cycle",
    "DecodeConfig",
    "EdgeProbabilities",
    "ExactResult",
    "GeneratorSpec",
    "Graph",
    "LossConfig",
    "NegativeCycleFlag",
    "NoPathError",
    "Path",
    "PathResult",
    "SolverConfig",
    "ValueAssignment",
    "beam_search",
    "bellman_ford_to_sink",
    "brute_force_solve",
    "detect_negative_cycle",
    "edge_probabilities",
    "evaluate",
    "generate",
    "init_values",
    "labeling_solve",
    "optimize",
    "path_cost",
    "randomized_decode",
    "read_graph",
    "sample_decode",
    "solve_espp",
    "total_loss",
    "write_graph",
]
