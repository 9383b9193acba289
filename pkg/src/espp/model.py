"""Per-node value estimates and the edge probabilities they induce.

The node values d(v) are the free parameters of the method: one scalar per
node, trained directly on a single instance.  Edge probabilities are the
sigmoid of value differences, ``p_uv = sigmoid(d(v) - d(u))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Optional

import numpy as np

from .graph import Graph, bfs_depths

INIT_SCHEMES = ("zeros", "hop-distance", "random")


def sigmoid(x):
    """Overflow-free logistic function on scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class ValueAssignment:
    values: np.ndarray
    convergence_iteration: Optional[int] = None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, v: int) -> float:
        return float(self.values[v])

    def shifted(self, c: float) -> "ValueAssignment":
        return ValueAssignment(self.values + c, self.convergence_iteration)

    def to_dict(self) -> dict:
        vals = {
            str(v): (format(x, ".17g") if math.isfinite(x) else ("inf" if x > 0 else "-inf"))
            for v, x in enumerate(self.values.tolist())
        }
        doc: dict = {"values": vals}
        if self.convergence_iteration is not None:
            doc["convergence_iteration"] = self.convergence_iteration
        return doc

    @classmethod
    def from_dict(cls, doc: dict, node_count: Optional[int] = None) -> "ValueAssignment":
        raw = doc["values"] if "values" in doc else doc
        n = node_count if node_count is not None else len(raw)
        vals = np.full(n, np.nan)
        for k, x in raw.items():
            vals[int(k)] = float(x)
        if np.isnan(vals).any():
            missing = np.flatnonzero(np.isnan(vals)).tolist()
            raise ValueError(f"no value for node(s) {missing}")
        return cls(vals, doc.get("convergence_iteration"))


def write_values(d: ValueAssignment, sink: IO[str] | str) -> None:
    text = json.dumps(d.to_dict(), indent=2) + "\n"
    if isinstance(sink, str) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sink.write(text)


def read_values(source: IO[str] | str, node_count: Optional[int] = None) -> ValueAssignment:
    if isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = json.load(source)
    return ValueAssignment.from_dict(doc, node_count)


@dataclass(frozen=True, eq=False)
class EdgeProbabilities:
    """``probs[e]`` is the selection probability of edge id ``e``."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, e: int) -> float:
        return float(self.probs[e])

    def entropy(self) -> float:
        """Mean binary entropy (nats) over edges."""
        p = np.clip(self.probs, 1e-300, 1.0)
        q = np.clip(1.0 - self.probs, 1e-300, 1.0)
        h = -(self.probs * np.log(p) + (1.0 - self.probs) * np.log(q))
        return float(h.mean()) if len(h) else 0.0


def edge_probabilities(g: Graph, d: ValueAssignment | np.ndarray) -> EdgeProbabilities:
    vals = d.values if isinstance(d, ValueAssignment) else np.asarray(d, dtype=np.float64)
    if len(vals) != g.node_count:
        raise ValueError(f"value assignment has {len(vals)} entries for {g.node_count} nodes")
    return EdgeProbabilities(sigmoid(value_differences(vals[g.dst], vals[g.src])))


def value_differences(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a - b`` with inf - inf taken as 0 (both ends unable to reach the sink)."""
    with np.errstate(invalid="ignore"):
        diff = a - b
    both = np.isinf(a) & np.isinf(b) & (np.sign(a) == np.sign(b))
    return np.where(both, 0.0, diff)


def init_values(g: Graph, scheme: str = "hop-distance", seed: int = 0) -> ValueAssignment:
    if scheme == "zeros":
        return ValueAssignment(np.zeros(g.node_count))
    if scheme == "hop-distance":
        preds = [g.predecessors(v) for v in range(g.node_count)]
        depth = bfs_depths(preds, g.sink)
        return ValueAssignment(
            np.array([x if x >= 0 else g.node_count for x in depth], dtype=np.float64)
        )
    if scheme == "random":
        rng = np.random.default_rng(seed)
        return ValueAssignment(rng.uniform(-1.0, 1.0, g.node_count))
    raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
