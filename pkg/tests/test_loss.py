import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from espp import autodiff as ad
from espp.exact import bellman_ford_to_sink
from espp.graph import GeneratorSpec, Graph, detect_negative_cycle, generate
from espp.loss import (
    COMPONENTS,
    PENALTY_PRESETS,
    LossBreakdown,
    LossConfig,
    LossContext,
    adv_loss,
    build_loss,
    evaluate,
    flow_loss,
    phi,
    slack,
    total_loss,
)
from espp.model import edge_probabilities, sigmoid

from conftest import graphs, random_digraph

ONLY = {c: LossConfig(**{f"use_{o}": o == c for o in COMPONENTS}) for c in COMPONENTS}


# independent per-node evaluators -------------------------------------------


def softmin_ref(xs, tau):
    lo = min(xs)
    return lo - tau * math.log(sum(math.exp(-(x - lo) / tau) for x in xs))


def backup_ref(g, d, tau):
    n = g.node_count
    sentinel = n * max(abs(w) for _, _, w in g.edges())
    out = []
    for u in range(n):
        if u == g.sink:
            out.append(0.0)
        elif not g.successors(u):
            out.append(sentinel)
        else:
            out.append(softmin_ref([g.weight[g.edge_id(u, v)] + d[v] for v in g.successors(u)], tau))
    return out


def dpa_ref(g, d, tau):
    m = backup_ref(g, d, tau)
    return sum((d[u] - m[u]) ** 2 for u in range(g.node_count)) / g.node_count


def ab_ref(g, d, tau, depth):
    cur = list(d)
    for _ in range(depth):
        cur = backup_ref(g, cur, tau)
    return sum((a - b) ** 2 for a, b in zip(cur, d)) / g.node_count


def da_ref(g, d, tau):
    total, count = 0.0, 0
    for u in range(g.node_count):
        succ = g.successors(u)
        if not succ:
            continue
        p = [sigmoid(d[v] - d[u]) for v in succ]
        logits = [-(g.weight[g.edge_id(u, v)] + d[v]) / tau for v in succ]
        top = max(logits)
        z = sum(math.exp(x - top) for x in logits)
        q = [math.exp(x - top) / z for x in logits]
        dot = sum(a * b for a, b in zip(p, q))
        total += 1 - dot / (math.sqrt(sum(a * a for a in p)) * math.sqrt(sum(b * b for b in q)))
        count += 1
    return total / count


def flow_ref(g, p):
    res = 0.0
    for u in range(g.node_count):
        net = sum(p[e] for e in g.out_edges[u]) - sum(p[e] for e in g.in_edges[u])
        b = 1.0 if u == g.source else (-1.0 if u == g.sink else 0.0)
        res += (net - b) ** 2
    return res


# closed-form examples --------------------------------------------------------


def test_phi_example():
    g = Graph.from_edges(3, [(0, 1, 0.0), (1, 2, 0.0)], 0, 2)
    d = np.array([1.0, 0.0, 0.0])  # slack (1, 0)
    assert slack(g, d).tolist() == [1.0, 0.0]
    assert phi(g, d, np.array([0.5, 0.9])) == pytest.approx(0.75)


def test_flow_zero_probabilities():
    g = random_digraph(0, 6)
    assert flow_loss(g, np.zeros(g.edge_count)) == 2.0


def test_flow_path_indicator_is_zero():
    g = Graph.from_edges(4, [(0, 1, 1.0), (1, 3, 1.0), (0, 2, 1.0), (2, 3, 1.0), (1, 2, 1.0)], 0, 3)
    p = np.zeros(g.edge_count)
    for u, v in [(0, 1), (1, 2), (2, 3)]:
        p[g.edge_id(u, v)] = 1.0
    assert flow_loss(g, p) == 0.0


def test_da_example():
    # node 0 has two successors with equal targets, p = (1, 0) approximately via a hand-set vector
    seg = ad.Segments(np.array([0, 0]), 1)
    q = ad.softmax(np.array([0.0, 0.0]), 1.0, seg)
    cos = ad.cosine_similarity(np.array([1.0, 0.0]), q, seg)
    assert 1 - float(cos.value[0]) == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-12)


def test_da_single_successor_contributes_zero():
    g = Graph.from_edges(2, [(0, 1, 0.3)], 0, 1)
    b, _ = evaluate(g, np.array([0.4, -2.0]), ONLY["da"])
    assert b.da == pytest.approx(0.0, abs=1e-15)


def test_dpa_single_edge():
    g = Graph.from_edges(2, [(0, 1, 0.7)], 0, 1)
    b, _ = evaluate(g, np.array([0.7, 0.0]), ONLY["dpa"])
    assert b.dpa == pytest.approx(0.0, abs=1e-15)


def test_ab_single_edge_example():
    g = Graph.from_edges(2, [(0, 1, 1.0)], 0, 1)
    cfg = replace_cfg(ONLY["ab"], unroll_depth=1)
    b, _ = evaluate(g, np.array([5.0, 0.0]), cfg)
    assert b.ab == pytest.approx(8.0)


def replace_cfg(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def test_ab_zero_at_soft_fixed_point():
    g = Graph.from_edges(4, [(0, 1, 0.5), (0, 2, -0.2), (1, 3, 0.3), (2, 3, 0.1), (1, 2, 0.4)], 0, 3)
    d = np.zeros(4)
    for _ in range(10):
        d = np.array(backup_ref(g, d, 0.5))
    b, _ = evaluate(g, d, ONLY["ab"])
    assert b.ab == pytest.approx(0.0, abs=1e-24)


def test_ab_depth_one_equals_dpa_backup():
    g = random_digraph(4, 7)
    d = np.random.default_rng(4).normal(size=7)
    ctx = LossContext(g, ONLY["ab"])
    one = ctx.soft_backup(ad.Var(d)).value
    assert np.allclose(one, backup_ref(g, d, 0.5), atol=1e-12)


def test_adv_examples():
    g = random_digraph(1, 6)
    assert adv_loss(g, np.zeros(g.edge_count), -2.0) == 2.0
    path = Graph.from_edges(3, [(0, 1, 0.5), (1, 2, -1.0), (0, 2, 3.0)], 0, 2)
    assert adv_loss(path, np.array([1.0, 1.0, 0.0]), -0.5) == 0.0
    p = np.random.default_rng(1).random(g.edge_count)
    assert adv_loss(g, p, 0.25) == pytest.approx(math.fsum(w * q for w, q in zip(g.weight, p)) - 0.25)


def test_all_off_is_objective():
    g = random_digraph(2, 6)
    d = np.random.default_rng(2).normal(size=6)
    cfg = LossConfig(lam_flow=0, lam_ncc=0, use_da=False, use_dpa=False, use_ab=False, use_adv=False,
                     use_flow=False, use_phi=False)
    b = total_loss(g, d, cfg)
    p = edge_probabilities(g, d).probs
    assert b.total == pytest.approx(float(np.dot(g.weight, p)))
    assert b.flow == b.phi == b.da == b.dpa == b.ab == 0.0


# oracle agreement --------------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_components_match_independent_evaluators(seed):
    rng = np.random.default_rng(seed)
    g = random_digraph(seed, 6, p=0.45)
    d = rng.normal(size=6)
    tau = float(rng.choice([0.2, 0.5, 1.0]))
    cfg = LossConfig(tau=tau, advantage_reference=-0.3)
    b = total_loss(g, d, cfg)
    p = edge_probabilities(g, d).probs
    assert b.objective == pytest.approx(float(np.dot(g.weight, p)), abs=1e-12)
    assert b.flow == pytest.approx(flow_ref(g, p), abs=1e-12)
    assert b.phi == pytest.approx(phi(g, d, p), abs=1e-12)
    assert b.da == pytest.approx(da_ref(g, d, tau), abs=1e-12)
    assert b.dpa == pytest.approx(dpa_ref(g, d, tau), rel=1e-12, abs=1e-12)
    assert b.ab == pytest.approx(ab_ref(g, d, tau, 3), rel=1e-12, abs=1e-12)
    assert b.adv == pytest.approx(b.objective + 0.3, abs=1e-12)


def test_baseline_terms_with_zero_values():
    g = random_digraph(11, 5, p=0.5)
    d = np.zeros(5)
    cfg = LossConfig.baseline()
    b = total_loss(g, d, cfg)
    p = np.full(g.edge_count, 0.5)
    assert b.objective == pytest.approx(0.5 * g.weight.sum())
    assert b.flow == pytest.approx(flow_ref(g, p))
    assert b.phi == pytest.approx(phi(g, d, p))
    assert b.da == b.dpa == b.ab == 0.0
    assert b.total == pytest.approx(b.objective + 10 * b.flow + 10 * b.phi)


@settings(max_examples=60, deadline=None)
@given(graphs(), st.integers(0, 2**32 - 1))
def test_breakdown_invariants(g, seed):
    d = np.random.default_rng(seed).normal(scale=2, size=g.node_count)
    cfg = LossConfig(lam_flow=3.0, lam_ncc=2.0, lam_bias=0.5)
    b = total_loss(g, d, cfg)
    assert b.phi >= 0 and b.flow >= 0 and b.dpa >= 0 and b.ab >= 0
    assert 0 <= b.da <= 2
    assert b.total == pytest.approx(b.adv + 3.0 * b.flow + 2.0 * b.phi + 0.5 * (b.da + b.dpa + b.ab))


def test_toggled_off_terms_are_zero():
    g = random_digraph(5, 6)
    d = np.ones(6)
    for c in COMPONENTS:
        b = total_loss(g, d, LossConfig().without(c))
        if c != "adv":
            assert getattr(b, c) == 0.0


def test_every_negative_cycle_has_a_slack_edge():
    rng = np.random.default_rng(0)
    checked = 0
    seed = 0
    while checked < 1000:
        g = random_digraph(seed, 7, p=0.35)
        seed += 1
        cyc = detect_negative_cycle(g)
        if cyc is None:
            continue
        d = rng.normal(scale=float(rng.choice([0.1, 1, 10])), size=7)
        delta = slack(g, d)
        assert max(delta[g.edge_id(u, v)] for u, v in cyc.edge_pairs()) > 0
        checked += 1


def test_zero_slack_cycles_are_nonnegative():
    # d(u) <= w + d(v) on every edge => every cycle has nonnegative cost
    for seed in range(100):
        g = random_digraph(seed, 7, p=0.35)
        if detect_negative_cycle(g) is not None:
            continue
        d = bellman_ford_to_sink(g).values
        assert slack(g, d).max(initial=0.0) <= 1e-12


def test_phi_zero_at_exact_values():
    count = 0
    for seed in range(1000):
        g = generate(GeneratorSpec(node_count=10, edge_probability=0.15, seed=seed))
        if detect_negative_cycle(g) is not None:
            continue
        vals = bellman_ford_to_sink(g)
        assert phi(g, vals, edge_probabilities(g, vals)) <= 1e-12
        count += 1
    assert count >= 100


def test_permutation_invariance():
    for seed in range(20):
        g = random_digraph(seed, 7, p=0.4)
        rng = np.random.default_rng(seed)
        d = rng.normal(size=7)
        perm = rng.permutation(7)
        h = g.relabel(perm)
        dh = np.empty(7)
        dh[perm] = d
        a, b = total_loss(g, d, LossConfig()), total_loss(h, dh, LossConfig())
        for name in LossBreakdown.columns():
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("component", list(COMPONENTS) + ["full", "baseline", "in"])
def test_gradients(component):
    cfg = {"full": LossConfig(), "baseline": LossConfig.baseline(), "in": LossConfig(direction="in")}.get(
        component, ONLY.get(component)
    )
    worst = 0.0
    for seed in range(20):
        g = generate(GeneratorSpec(node_count=8, edge_probability=0.35, seed=seed))
        d = np.random.default_rng(seed).normal(size=8)
        ctx = LossContext(g, cfg)
        worst = max(worst, ad.gradient_check(lambda t, x: build_loss(t, x, ctx)[0], d))
    assert worst <= 1e-4


def test_evaluate_gradient_matches_tape():
    g = generate(GeneratorSpec(node_count=10, seed=3))
    d = np.random.default_rng(3).normal(size=10)
    b, grad = evaluate(g, d, LossConfig())
    h = 1e-6
    e = np.zeros(10)
    e[4] = h
    fd = (total_loss(g, d + e).total - total_loss(g, d - e).total) / (2 * h)
    assert grad[4] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(tau=0)
    with pytest.raises(ValueError):
        LossConfig(unroll_depth=0)
    with pytest.raises(ValueError):
        LossConfig(lam_flow=-1)
    with pytest.raises(ValueError):
        LossConfig(advantage_reference=math.inf)
    with pytest.raises(ValueError):
        LossConfig().without("bogus")
    assert LossConfig().depth(31) == 16
    assert LossConfig.preset("high").lam_flow == PENALTY_PRESETS["high"][0] == 100.0
