"""Per-instance training of node values and the end-to-end ESPP pipeline."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .graph import Graph
from .loss import LossBreakdown, LossConfig, LossContext, breakdown, build_loss
from .model import EdgeProbabilities, ValueAssignment, edge_probabilities, init_values
from .search import DecodeConfig, PathResult, beam_search, best_of, sample_decode


class NonFiniteLossError(FloatingPointError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"loss became {value} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    loss: LossConfig = field(default_factory=LossConfig)
    step_size: float = 1e-2
    max_iters: int = 2000
    patience: int = 100
    plateau_tol: float = 1e-6
    seed: int = 0
    init_scheme: str = "hop-distance"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def with_loss(self, **kw) -> "SolverConfig":
        return replace(self, loss=replace(self.loss, **kw))


@dataclass
class SolveTrace:
    losses: list[LossBreakdown]
    values: ValueAssignment
    probabilities: EdgeProbabilities
    wall_time: float

    @property
    def final(self) -> LossBreakdown:
        return self.losses[-1]

    def rows(self) -> list[dict]:
        return [{"iteration": i, **b.as_row()} for i, b in enumerate(self.losses)]


def optimize(g: Graph, cfg: SolverConfig = SolverConfig()) -> SolveTrace:
    """Adam on the node values against the configured surrogate loss.

    Stops after ``max_iters`` or once the total loss has failed to improve
    by ``plateau_tol`` for ``patience`` consecutive iterations.  The returned
    values are the last evaluated iterate.
    """
    t0 = time.perf_counter()
    ctx = LossContext(g, cfg.loss)
    d = init_values(g, cfg.init_scheme, cfg.seed).values.copy()
    m = np.zeros_like(d)
    v = np.zeros_like(d)
    trace: list[LossBreakdown] = []
    best = math.inf
    stall = 0
    for it in range(1, cfg.max_iters + 1):
        tape = ad.Tape()
        dv = tape.variable(d)
        total, parts = build_loss(tape, dv, ctx)
        value = float(total.value)
        if not math.isfinite(value):
            raise NonFiniteLossError(it, value)
        trace.append(breakdown(parts))

        if best - value < cfg.plateau_tol:
            stall += 1
            if stall >= cfg.patience:
                break
        else:
            stall = 0
        best = min(best, value)
        if it == cfg.max_iters:
            break

        (grad,) = tape.gradient(total, [dv])
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
        m_hat = m / (1 - cfg.beta1**it)
        v_hat = v / (1 - cfg.beta2**it)
        d = d - cfg.step_size * m_hat / (np.sqrt(v_hat) + cfg.eps)

    values = ValueAssignment(d)
    return SolveTrace(trace, values, edge_probabilities(g, values), time.perf_counter() - t0)


def solve_espp(
    g: Graph,
    cfg: SolverConfig = SolverConfig(),
    n_samples: int = 100,
    beam_width: int = 200,
    solver: str = "espp-nnaa",
    elementary: bool = True,
    fallback: bool = True,
    trace: Optional[list] = None,
    beam: Optional[PathResult] = None,
) -> PathResult:
    """Beam reference -> train values -> sample decode; best path wins.

    The beam path doubles as the advantage reference and, with
    ``fallback=True``, as a candidate, so the result never costs more than
    the beam path.  Pass a list as ``trace`` to receive the SolveTrace; pass
    a precomputed ``beam`` result to skip the search.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    t0 = time.perf_counter()
    if beam is None:
        beam = beam_search(g, beam_width)
    cfg = cfg.with_loss(advantage_reference=beam.cost)
    run = optimize(g, cfg)
    if trace is not None:
        trace.append(run)
    decoded = sample_decode(
        g,
        run.probabilities,
        DecodeConfig(n_trials=n_samples, seed=cfg.seed, elementary=elementary),
        solver=solver,
    )
    candidates = [decoded, beam] if fallback else [decoded]
    res = best_of(candidates, solver)
    extra = {
        **res.extra,
        "beam_cost": beam.cost,
        "decoded_cost": decoded.cost,
        "phi": run.final.phi,
        "entropy": run.probabilities.entropy(),
        "iterations": len(run.losses),
    }
    return replace(res, samples_used=n_samples, wall_time=time.perf_counter() - t0, extra=extra)
