"""
Learning node values and sampling paths
=======================================

One free value d(v) per node is trained against a penalty loss; edge
probabilities are sigmoid(d(v) - d(u)).  Paths are decoded by walking from
the source and sampling unvisited successors in proportion to p.
"""

import numpy as np

from espp.graph import GeneratorSpec, generate
from espp.loss import LossConfig
from espp.search import DecodeConfig, beam_search, randomized_decode, sample_decode
from espp.solver import SolverConfig, optimize, solve_espp

g = generate(GeneratorSpec(node_count=30, seed=11))
beam = beam_search(g, 200)
print(f"beam search (width 200): cost {beam.cost:.3f}, {len(beam.nodes)} nodes")

# %%
# Train with the full loss and watch the components settle.
cfg = SolverConfig(loss=LossConfig(advantage_reference=beam.cost))
run = optimize(g, cfg)
for i in (0, 100, 500, len(run.losses) - 1):
    b = run.losses[i]
    print(f"iter {i:>4}: total {b.total:9.3f}  flow {b.flow:7.3f}  phi {b.phi:6.3f}  ab {b.ab:8.3f}")
print("mean edge entropy:", round(run.probabilities.entropy(), 4), "(max", round(np.log(2), 4), ")")

# %%
# Decode with more and more samples; the sample streams are nested, so the
# best cost can only improve.
for n in (10, 50, 200):
    res = sample_decode(g, run.probabilities, DecodeConfig(n_trials=n, seed=0))
    print(f"{n:>4} samples: cost {res.cost:.3f}")
print("uniform sampling, 200 trials:", round(randomized_decode(g, DecodeConfig(n_trials=200)).cost, 3))

# %%
# The end-to-end solver keeps the beam path as a fallback candidate.
res = solve_espp(g, SolverConfig(), n_samples=100)
print(res.solver, "cost", round(res.cost, 3), "won by", res.extra["winner"])
