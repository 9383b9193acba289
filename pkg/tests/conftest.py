import numpy as np
import pytest
from hypothesis import strategies as st

from espp.graph import GeneratorSpec, Graph, generate


def small_er(seed, n=None, p=0.35):
    rng = np.random.default_rng(seed)
    n = n if n is not None else int(rng.integers(4, 10))
    return generate(GeneratorSpec(node_count=n, edge_probability=p, seed=seed))


def random_digraph(seed, n, p=0.4):
    """Plain ER digraph with uniform(-1, 1) weights; s = 0, t = n - 1, no reachability guarantee."""
    rng = np.random.default_rng(seed)
    edges = [
        (u, v, float(rng.uniform(-1, 1)))
        for u in range(n)
        for v in range(n)
        if u != v and rng.random() < p
    ]
    return Graph.from_edges(n, edges, 0, n - 1)


@st.composite
def graphs(draw, min_nodes=3, max_nodes=7):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    ws = draw(
        st.lists(
            st.floats(-1, 1, allow_nan=False, allow_infinity=False), min_size=len(pairs), max_size=len(pairs)
        )
    )
    edges = [(u, v, w) for (u, v), keep, w in zip(pairs, mask, ws) if keep]
    if not any(u == 0 and v == n - 1 for u, v, _ in edges):
        edges.append((0, n - 1, draw(st.floats(-1, 1, allow_nan=False))))
    return Graph.from_edges(n, edges, 0, n - 1)


@pytest.fixture
def single_edge():
    return Graph.from_edges(2, [(0, 1, 0.7)], 0, 1)


@pytest.fixture
def triangle_ncc():
    # s=0, a=1, t=2; 0 <-> 1 is a negative 2-cycle
    return Graph.from_edges(3, [(0, 1, -1.0), (1, 0, -1.0), (0, 2, 1.0), (1, 2, 1.0)], 0, 2)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
