"""
Penalty strength and edge-probability entropy
=============================================

Larger flow and cycle penalties push the edge probabilities away from 1/2.
The sweep reports the entropy of the trained probabilities and the cycle
surrogate phi for three preset strengths.
"""

from espp.bench import generate_cell, penalty_sweep
from espp.graph import GeneratorSpec
from espp.solver import SolverConfig

graphs = generate_cell(GeneratorSpec(node_count=30), 5, seed=3)
for row in penalty_sweep(graphs, solver=SolverConfig(max_iters=1000)):
    print(
        f"{row['preset']:>6} (flow {row['lam_flow']:>5}, cycle {row['lam_ncc']:>5}): "
        f"median entropy {row['median_entropy']:.4f}, mean phi {row['mean_phi']:.4f}, "
        f"gap {row['mean_gap']:+.2f}%"
    )

# Entropy falls as the penalties grow, but phi does not: on 30-node graphs
# with many negative cycles the trained probabilities stay close to 1/2 and
# the cycle term stays well above zero at every strength.
