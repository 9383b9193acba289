"""
A small benchmark run
=====================

Build a dataset on disk, run several methods over its test split and print
the mean gap against beam search (negative is better than beam).
"""

import tempfile
from pathlib import Path

from espp.bench import ExperimentSpec, build_dataset, generate_cell, run_experiment, sampling_study, summary_csv
from espp.graph import GeneratorSpec
from espp.solver import SolverConfig

root = Path(tempfile.mkdtemp())
build_dataset(root / "er20", GeneratorSpec(node_count=20), count=20, seed=1)

spec = ExperimentSpec(
    dataset=root / "er20",
    methods=("espp-nnaa", "espp-nn", "randomized", "beam", "labeling"),
    solver=SolverConfig(max_iters=500),
    max_labels=200_000,
    time_budget=20,
)
records, summary = run_experiment(spec)
print(summary_csv(summary))

for r in records[:5]:
    print(r.instance, r.method, round(r.cost, 4), f"{r.gap_percent:+.2f}%", "truncated" if r.truncated else "")

# %%
# Sampling budget on 9-node graphs, measured against the exact optimum.
# The decoded path is reported without the beam fallback, so an instance
# where every walk dead-ends shows up as an infinite mean gap.
rows = sampling_study(
    generate_cell(GeneratorSpec(node_count=9), 10, 5),
    n_grid=(10, 50, 200),
    solver=SolverConfig(max_iters=500),
    reference="exact",
)
for row in rows:
    print(f"N={row['n_samples']:>3}: mean gap {row['mean_gap']:.2f}%, optimal on {row['optimal_fraction']:.0%}")
