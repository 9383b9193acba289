import io
import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings

from espp.graph import (
    GenerationError,
    GeneratorSpec,
    Graph,
    GraphError,
    GraphFormatError,
    MissingEdgeError,
    bfs_depths,
    detect_negative_cycle,
    dumps_graph,
    generate,
    grid_shape,
    instance_seed,
    is_elementary_st_path,
    loads_graph,
    path_cost,
    read_graph,
    to_networkx,
    write_graph,
)

from conftest import graphs, random_digraph


# construction ------------------------------------------------------------


def test_adjacency_consistent_with_edges():
    g = Graph.from_edges(4, [(0, 1, 1.0), (1, 2, -0.5), (2, 3, 0.25), (0, 2, 2.0)], 0, 3)
    assert g.edge_count == 4
    for e in range(g.edge_count):
        assert e in g.out_edges[g.src[e]]
        assert e in g.in_edges[g.dst[e]]
    assert sorted(sum(g.out_edges, ())) == list(range(4))
    assert sorted(sum(g.in_edges, ())) == list(range(4))
    assert g.successors(0) == [1, 2]
    assert g.predecessors(2) == [1, 0]
    assert g.edge_id(1, 2) == 1 and g.edge_id(2, 1) is None


@pytest.mark.parametrize(
    "edges, s, t, msg",
    [
        ([(0, 0, 1.0)], 0, 1, "self-loop"),
        ([(0, 1, 1.0), (0, 1, 2.0)], 0, 1, "parallel"),
        ([(0, 5, 1.0)], 0, 1, "outside"),
        ([(0, 1, float("nan"))], 0, 1, "non-finite"),
        ([(0, 1, 1.0)], 0, 0, "differ"),
        ([(0, 1, 1.0)], 0, 7, "out of range"),
    ],
)
def test_invalid_graphs_rejected(edges, s, t, msg):
    with pytest.raises(GraphError, match=msg):
        Graph.from_edges(3, edges, s, t)


def test_arrays_are_read_only():
    g = Graph.from_edges(2, [(0, 1, 1.0)], 0, 1)
    with pytest.raises(ValueError):
        g.weight[0] = 3.0


def test_relabel_preserves_structure():
    g = random_digraph(3, 6)
    perm = [5, 3, 1, 0, 2, 4]
    h = g.relabel(perm)
    assert h.source == perm[g.source] and h.sink == perm[g.sink]
    for u, v, w in g.edges():
        assert h.weight[h.edge_id(perm[u], perm[v])] == w


# paths -------------------------------------------------------------------


def test_path_cost_single_edge(single_edge):
    assert path_cost(single_edge, [0, 1]) == pytest.approx(0.7)
    assert is_elementary_st_path(single_edge, [0, 1])


def test_repeat_is_not_elementary(triangle_ncc):
    assert not is_elementary_st_path(triangle_ncc, [0, 1, 0, 2])
    assert is_elementary_st_path(triangle_ncc, [0, 1, 2])
    assert not is_elementary_st_path(triangle_ncc, [1, 2])


def test_path_cost_missing_edge(single_edge):
    with pytest.raises(MissingEdgeError):
        path_cost(single_edge, [1, 0])


def constraint_evaluator(g, nodes):
    """Flow conservation, per-node in/out bounds and subtour checks on the 0/1 edge indicator."""
    n = g.node_count
    x = {}
    for u, v in zip(nodes[:-1], nodes[1:]):
        if not g.has_edge(u, v):
            return False
        x[(u, v)] = x.get((u, v), 0) + 1
    if any(c > 1 for c in x.values()):
        return False
    out = [0] * n
    inn = [0] * n
    for (u, v), c in x.items():
        out[u] += c
        inn[v] += c
    b = [0] * n
    b[g.source], b[g.sink] = 1, -1
    # flow conservation with supply +1 at s and -1 at t
    if any(out[u] - inn[u] != b[u] for u in range(n)):
        return False
    # each node left and entered at most once; nothing leaves t or enters s
    if any(out[u] > 1 or inn[u] > 1 for u in range(n)):
        return False
    if out[g.sink] != 0 or inn[g.source] != 0:
        return False
    # no detached cycles: every used edge is reachable from s along used edges
    reach, frontier = {g.source}, [g.source]
    while frontier:
        u = frontier.pop()
        for (a, b2) in x:
            if a == u and b2 not in reach:
                reach.add(b2)
                frontier.append(b2)
    return all(u in reach for (u, _) in x)


@pytest.mark.parametrize("seed", range(6))
def test_elementary_check_matches_constraint_evaluator(seed):
    rng = np.random.default_rng(seed)
    g = random_digraph(seed, 9, p=0.35)
    for _ in range(400):
        k = int(rng.integers(2, 11))
        nodes = [g.source] + list(rng.integers(0, 9, size=k - 2)) + [g.sink]
        if rng.random() < 0.5:
            # bias towards actual walks so positives occur
            nodes = [g.source]
            for _ in range(k):
                succ = g.successors(nodes[-1])
                if not succ:
                    break
                nodes.append(int(rng.choice(succ)))
                if nodes[-1] == g.sink:
                    break
        nodes = [int(v) for v in nodes]
        assert is_elementary_st_path(g, nodes) == constraint_evaluator(g, nodes), nodes


# negative cycles ---------------------------------------------------------


def test_two_node_cycle_detected():
    g = Graph.from_edges(3, [(0, 1, -1.0), (1, 0, 0.5), (1, 2, 1.0)], 0, 2)
    cyc = detect_negative_cycle(g)
    assert cyc is not None
    assert set(cyc.nodes) == {0, 1}
    assert cyc.cost == pytest.approx(-0.5)


def test_dag_grid_has_no_cycle():
    rows, cols = 4, 4
    idx = lambda r, c: r * cols + c  # noqa: E731
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1), 1.0))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c), 1.0))
    g = Graph.from_edges(16, edges, 0, 15)
    assert detect_negative_cycle(g) is None


def test_negative_cycle_agrees_with_enumeration():
    found = 0
    for seed in range(500):
        g = random_digraph(seed, 8, p=0.25)
        cyc = detect_negative_cycle(g)
        dg = to_networkx(g)
        exhaustive = any(
            sum(dg[c[i]][c[(i + 1) % len(c)]]["weight"] for i in range(len(c))) < 0
            for c in nx.simple_cycles(dg)
        )
        assert (cyc is not None) == exhaustive, seed
        if cyc is not None:
            found += 1
            assert cyc.cost < 0
            assert len(set(cyc.nodes)) == len(cyc.nodes)
            assert cyc.cost == pytest.approx(sum(g.weight[g.edge_id(u, v)] for u, v in cyc.edge_pairs()))
    assert 50 < found < 500  # both outcomes exercised


# generators --------------------------------------------------------------


def test_generation_deterministic():
    spec = GeneratorSpec(node_count=30, edge_probability=0.2, seed=7)
    a, b = generate(spec), generate(spec)
    assert a == b
    assert dumps_graph(a) == dumps_graph(b)
    assert generate(GeneratorSpec(node_count=30, seed=8)) != a


@pytest.mark.parametrize("n", [16, 17, 30])
def test_grid_axis_neighbours_only(n):
    g = generate(GeneratorSpec(family="grid", node_count=n, seed=1))
    rows, cols = grid_shape(n)
    assert g.out_degree().max() <= 4
    for u, v, _ in g.edges():
        ru, cu = divmod(u, cols)
        rv, cv = divmod(v, cols)
        assert abs(ru - rv) + abs(cu - cv) == 1
        assert g.has_edge(v, u)


def test_er_edge_count_matches_expectation():
    counts = [generate(GeneratorSpec(node_count=100, edge_probability=0.2, seed=s)).edge_count for s in range(200)]
    assert abs(np.mean(counts) - 1980) / 1980 < 0.05


def test_ba_is_symmetric_and_seeded():
    g = generate(GeneratorSpec(family="barabasi-albert", node_count=30, attachment_count=2, seed=4))
    for u, v, _ in g.edges():
        assert g.has_edge(v, u)
    assert g == generate(GeneratorSpec(family="barabasi-albert", node_count=30, attachment_count=2, seed=4))


@pytest.mark.parametrize("dist", ["normal", "lognormal"])
def test_signed_distributions_have_both_signs(dist):
    g = generate(GeneratorSpec(node_count=30, weight_distribution=dist, seed=2))
    assert (g.weight < 0).any() and (g.weight > 0).any()


def test_uniform_weights_in_range():
    g = generate(GeneratorSpec(node_count=30, seed=5))
    assert np.all(np.abs(g.weight) <= 1)


def test_source_sink_rule():
    for seed in range(20):
        g = generate(GeneratorSpec(node_count=20, seed=seed))
        depth = bfs_depths([g.successors(u) for u in range(g.node_count)], 0)
        reach = [d for d in depth if d >= 0]
        assert g.source == 0
        assert depth[g.sink] == max(reach)
        assert g.sink == min(v for v, d in enumerate(depth) if d == max(reach))


def test_generation_failure_after_retries():
    with pytest.raises(GenerationError):
        generate(GeneratorSpec(node_count=40, edge_probability=1e-6, seed=0))


def test_invalid_specs():
    with pytest.raises(ValueError):
        GeneratorSpec(family="ring")
    with pytest.raises(ValueError):
        GeneratorSpec(edge_probability=0.0)
    with pytest.raises(ValueError):
        GeneratorSpec(family="barabasi-albert", node_count=5, attachment_count=5)


def test_instance_seed_stable():
    assert instance_seed(3, 4) == instance_seed(3, 4)
    assert len({instance_seed(3, i) for i in range(100)}) == 100


# file format -------------------------------------------------------------


def test_minimal_document():
    g = loads_graph('{"node_count": 2, "source": 0, "sink": 1, "edges": [[0, 1, 0.5]]}')
    assert g.edges() == [(0, 1, 0.5)]


def test_duplicate_edge_document():
    with pytest.raises(GraphError, match="parallel"):
        loads_graph('{"node_count": 2, "source": 0, "sink": 1, "edges": [[0, 1, 0.5], [0, 1, 1]]}')


def test_parse_error_reports_position():
    with pytest.raises(GraphFormatError, match=r"line 2, column"):
        loads_graph('{"node_count": 2,\n "source": }')


@pytest.mark.parametrize(
    "doc",
    [
        "[1, 2]",
        '{"node_count": 2, "source": 0, "sink": 1}',
        '{"node_count": 2, "source": 0, "sink": 1, "edges": [[0, 1]]}',
        '{"node_count": 2, "source": 0, "sink": 1, "edges": [[0.5, 1, 1]]}',
        '{"node_count": 2, "source": 0, "sink": 1, "edges": [[0, 1, "x"]]}',
    ],
)
def test_malformed_documents(doc):
    with pytest.raises(GraphFormatError):
        loads_graph(doc)


def test_round_trip_byte_identical(tmp_path):
    for seed in range(100):
        g = generate(GeneratorSpec(node_count=12, seed=seed, weight_distribution="lognormal"))
        text = dumps_graph(g)
        h = loads_graph(text)
        assert h == g
        assert np.array_equal(h.weight, g.weight)
        assert dumps_graph(h) == text
    path = tmp_path / "g.json"
    write_graph(g, str(path))
    assert read_graph(str(path)) == g
    buf = io.StringIO()
    write_graph(g, buf)
    assert read_graph(io.BytesIO(buf.getvalue().encode())) == g


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_round_trip_property(g):
    assert loads_graph(dumps_graph(g)) == g
