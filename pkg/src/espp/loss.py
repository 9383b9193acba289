"""Surrogate loss for learning node values on one ESPP instance.

Components, all built on an autodiff tape from the node values ``d``:

* objective  ``sum w_uv p_uv`` and its advantage form (minus a reference cost)
* flow       squared residual of flow conservation with +1 at s, -1 at t
* phi        negative-cycle surrogate from the Bellman slack
               ``delta_uv = max(0, d(u) - w_uv - d(v))``
* da         1 - cosine(p, q) per node, q a softmax over successors
* dpa        squared gap between d and one soft Bellman backup
* ab         squared displacement of d after T unrolled soft Bellman steps

All recursions use cost-to-sink (outgoing neighbourhoods) unless
``LossConfig.direction == "in"``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Segments, Tape, Var
from .graph import Graph
from .model import ValueAssignment, value_differences

COMPONENTS = ("da", "dpa", "ab", "adv", "flow", "phi")

PENALTY_PRESETS = {
    "low": (1.0, 1.0),
    "medium": (10.0, 10.0),
    "high": (100.0, 100.0),
}


@dataclass(frozen=True)
class LossConfig:
    lam_flow: float = 10.0
    lam_ncc: float = 10.0
    lam_bias: float = 1.0
    tau: float = 0.5
    unroll_depth: Optional[int] = None  # None -> ceil(node_count / 2)
    advantage_reference: float = 0.0
    use_da: bool = True
    use_dpa: bool = True
    use_ab: bool = True
    use_adv: bool = True
    use_flow: bool = True
    use_phi: bool = True
    direction: str = "out"

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.unroll_depth is not None and self.unroll_depth < 1:
            raise ValueError("unroll_depth must be >= 1")
        for name in ("lam_flow", "lam_ncc", "lam_bias", "advantage_reference"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite")
        for name in ("lam_flow", "lam_ncc", "lam_bias"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.direction not in ("out", "in"):
            raise ValueError("direction must be 'out' or 'in'")

    def depth(self, node_count: int) -> int:
        return self.unroll_depth if self.unroll_depth is not None else -(-node_count // 2)

    def without(self, *components: str) -> "LossConfig":
        """Copy with the named components toggled off (ablation)."""
        bad = set(components) - set(COMPONENTS)
        if bad:
            raise ValueError(f"unknown component(s) {sorted(bad)}; expected {COMPONENTS}")
        return replace(self, **{f"use_{c}": False for c in components})

    @classmethod
    def preset(cls, name: str, **kw) -> "LossConfig":
        lam_flow, lam_ncc = PENALTY_PRESETS[name]
        return cls(lam_flow=lam_flow, lam_ncc=lam_ncc, **kw)

    @classmethod
    def baseline(cls, **kw) -> "LossConfig":
        """Objective + flow + phi only: the plain penalty loss."""
        return cls(use_da=False, use_dpa=False, use_ab=False, use_adv=False, **kw)


@dataclass(frozen=True)
class LossBreakdown:
    """Itemised loss.  ``adv`` holds the leading objective term: the raw
    objective when the advantage is off, objective minus reference when on."""

    objective: float
    flow: float
    phi: float
    da: float
    dpa: float
    ab: float
    adv: float
    total: float

    def as_row(self) -> dict:
        return asdict(self)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class LossContext:
    """Per-graph constants shared by every loss evaluation."""

    def __init__(self, g: Graph, cfg: LossConfig):
        self.graph = g
        self.cfg = cfg
        n = g.node_count
        self.n = n
        self.src = np.asarray(g.src)
        self.dst = np.asarray(g.dst)
        self.w = np.asarray(g.weight)
        self.out_seg = Segments(self.src, n)
        self.in_seg = Segments(self.dst, n)
        self.supply = np.zeros(n)
        self.supply[g.source] = 1.0
        self.supply[g.sink] = -1.0
        self.has_out = self.out_seg.nonempty
        max_w = float(np.max(np.abs(self.w))) if len(self.w) else 1.0
        self.sentinel = n * max_w

        # recursion layout: which nodes are backed up, anchored, or pinned
        if cfg.direction == "out":
            self.rec_seg, self.rec_from, self.rec_to = self.out_seg, self.dst, self.src
            anchor = g.sink
        else:
            self.rec_seg, self.rec_from, self.rec_to = self.in_seg, self.src, self.dst
            anchor = g.source
        is_anchor = np.zeros(n, dtype=bool)
        is_anchor[anchor] = True
        self.backed_up = self.rec_seg.nonempty & ~is_anchor
        dead = ~self.rec_seg.nonempty & ~is_anchor
        self.pinned = np.where(dead, self.sentinel, 0.0)
        self.backed_mask = self.backed_up.astype(np.float64)
        self.depth = cfg.depth(n)

    def soft_backup(self, d: Var) -> Var:
        """One softened Bellman step; anchor -> 0, dead ends -> sentinel."""
        return ad.soft_bellman(
            d, self.w, self.rec_from, self.rec_seg, self.cfg.tau, self.backed_mask, self.pinned
        )


def build_loss(tape: Tape, d: Var, ctx: LossContext) -> tuple[Var, dict[str, Var]]:
    """Assemble the configured loss on ``tape``; returns (total, components)."""
    cfg = ctx.cfg
    zero = ad.Var(0.0)
    d_src, d_dst = d[ctx.src], d[ctx.dst]
    p = ad.sigmoid(d_dst - d_src)
    objective = ad.sum(p * ctx.w)
    parts = {"objective": objective}

    parts["adv"] = objective - cfg.advantage_reference if cfg.use_adv else objective
    parts["flow"] = flow_term(p, ctx) if cfg.use_flow else zero
    parts["phi"] = phi_term(d_src, d_dst, p, ctx) if cfg.use_phi else zero
    parts["da"] = da_term(d_dst, p, ctx) if cfg.use_da else zero
    parts["dpa"] = dpa_term(d, ctx) if cfg.use_dpa else zero
    parts["ab"] = ab_term(d, ctx) if cfg.use_ab else zero

    total = parts["adv"]
    if cfg.use_flow:
        total = total + cfg.lam_flow * parts["flow"]
    if cfg.use_phi:
        total = total + cfg.lam_ncc * parts["phi"]
    bias = [parts[k] for k in ("da", "dpa", "ab") if getattr(cfg, f"use_{k}")]
    if bias:
        acc = bias[0]
        for term in bias[1:]:
            acc = acc + term
        total = total + cfg.lam_bias * acc
    parts["total"] = total
    return total, parts


def flow_term(p: Var, ctx: LossContext) -> Var:
    net = ad.segment_sum(p, ctx.out_seg) - ad.segment_sum(p, ctx.in_seg)
    return ad.sum(ad.square(net - ctx.supply))


def phi_term(d_src: Var, d_dst: Var, p: Var, ctx: LossContext) -> Var:
    m = len(ctx.w)
    if m == 0:
        return ad.Var(0.0)
    slack = ad.max0(d_src - ctx.w - d_dst)
    return (ad.sum(slack) + ad.sum(p * slack)) / float(m)


def da_term(d_dst: Var, p: Var, ctx: LossContext) -> Var:
    q = ad.softmax(-(ctx.w + d_dst), ctx.cfg.tau, ctx.out_seg)
    cos = ad.cosine_similarity(p, q, ctx.out_seg)
    return ad.mean(1.0 - cos, ctx.has_out)


def dpa_term(d: Var, ctx: LossContext) -> Var:
    return ad.mean(ad.square(d - ctx.soft_backup(d)))


def ab_term(d: Var, ctx: LossContext) -> Var:
    cur = d
    for _ in range(ctx.depth):
        cur = ctx.soft_backup(cur)
    return ad.mean(ad.square(cur - d))


def evaluate(
    g: Graph, d: ValueAssignment | np.ndarray, cfg: LossConfig, ctx: Optional[LossContext] = None
) -> tuple[LossBreakdown, np.ndarray]:
    """Loss breakdown and its gradient with respect to the node values."""
    ctx = ctx if ctx is not None and ctx.cfg == cfg else LossContext(g, cfg)
    vals = d.values if isinstance(d, ValueAssignment) else np.asarray(d, dtype=np.float64)
    tape = Tape()
    dv = tape.variable(vals)
    total, parts = build_loss(tape, dv, ctx)
    (grad,) = tape.gradient(total, [dv])
    return breakdown(parts), grad


def breakdown(parts: dict[str, Var]) -> LossBreakdown:
    return LossBreakdown(**{k: float(parts[k].value) for k in LossBreakdown.columns()})


def total_loss(g: Graph, d: ValueAssignment | np.ndarray, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    return evaluate(g, d, cfg)[0]


# plain-array helpers, used by inspection and tests ---------------------------------


def slack(g: Graph, d: ValueAssignment | np.ndarray) -> np.ndarray:
    vals = d.values if isinstance(d, ValueAssignment) else np.asarray(d, dtype=np.float64)
    du, dv = vals[g.src], vals[g.dst]
    # inf <= w + inf holds, so edges between nodes that cannot reach t carry no slack
    both = np.isinf(du) & np.isinf(dv) & (np.sign(du) == np.sign(dv))
    return np.where(both, 0.0, np.maximum(0.0, value_differences(du, dv) - g.weight))


def phi(g: Graph, d: ValueAssignment | np.ndarray, p) -> float:
    probs = getattr(p, "probs", p)
    delta = slack(g, d)
    if len(delta) == 0:
        return 0.0
    return float((delta.sum() + (np.asarray(probs) * delta).sum()) / len(delta))


def flow_loss(g: Graph, p) -> float:
    probs = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    net = np.bincount(g.src, probs, g.node_count) - np.bincount(g.dst, probs, g.node_count)
    b = np.zeros(g.node_count)
    b[g.source], b[g.sink] = 1.0, -1.0
    return float(np.sum((net - b) ** 2))


def adv_loss(g: Graph, p, reference: float) -> float:
    probs = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    return float(np.dot(g.weight, probs) - reference)
