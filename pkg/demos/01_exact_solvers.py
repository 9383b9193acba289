"""
Exact solvers on a small graph with negative cycles
===================================================

Negative cycles make the plain shortest-path problem unbounded, so only
elementary paths (no repeated node) are meaningful.  On small graphs the
labeling search and plain enumeration both find the optimum; Bellman-Ford
only works once the negative cycles are gone.
"""

import numpy as np

from espp.exact import bellman_ford_to_sink, brute_force_solve, labeling_solve
from espp.graph import GeneratorSpec, Graph, detect_negative_cycle, generate

g = generate(GeneratorSpec(node_count=9, edge_probability=0.3, seed=4))
print(f"{g.node_count} nodes, {g.edge_count} edges, s={g.source}, t={g.sink}")

cycle = detect_negative_cycle(g)
print("a negative cycle:", cycle.nodes, f"cost {cycle.cost:.3f}")

# Bellman-Ford notices the cycle and gives up
print("Bellman-Ford on this graph:", bellman_ford_to_sink(g))

# the two exact methods agree; dominance pruning saves work
lab = labeling_solve(g)
bf = brute_force_solve(g)
print(f"labeling    {lab.nodes} cost {lab.optimum:.4f}  ({lab.expanded_labels} labels)")
print(f"brute force {bf.nodes} cost {bf.optimum:.4f}  ({bf.expanded_labels} partial paths)")

# %%
# Remove the negative weights and Bellman-Ford gives the same answer,
# together with a full cost-to-sink value for every node.
h = Graph.from_edges(g.node_count, [(u, v, abs(w)) for u, v, w in g.edges()], g.source, g.sink)
d = bellman_ford_to_sink(h)
print("cost-to-sink:", np.round(d.values, 3), "converged after", d.convergence_iteration, "rounds")
print("d(s) =", round(d[h.source], 6), " labeling:", round(labeling_solve(h).optimum, 6))
