import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from navlab import geometry as G
from navlab import measure as M
from navlab import routing as R
from navlab import sampler as SA


def substrate_only(g):
    return R.build_nav_graph(g, G.build_substrate(g), None)


def complete(g, with_substrate=True):
    iu, ju = np.triu_indices(g.n, 1)
    e = SA.make_edge_set(g, iu, ju, 0)
    return R.build_nav_graph(g, G.build_substrate(g) if with_substrate else None, e)


@pytest.fixture(scope="module")
def ba_graph():
    g = G.cycle(1024)
    cg = M.build_cost_geometry(g, "logdensity:alpha=1")
    sol = M.solve_profile(cg, M.budget_ba(cg))
    return R.build_nav_graph(g, G.build_substrate(g), SA.sample_product(cg, sol.q_star, 3))


def test_trivial_route():
    r = R.greedy_route(substrate_only(G.cycle(8)), 4, 4, budget=5)
    assert r.success and r.hops == 0 and r.path == [4]


def test_substrate_route_cycle8():
    r = R.greedy_route(substrate_only(G.cycle(8)), 0, 3, budget=10)
    assert r.success and r.hops == 3 and r.path == [0, 1, 2, 3]
    assert r.long_edges_used == 0


def test_complete_graph_one_hop():
    ng = complete(G.cycle(12))
    for s in range(12):
        for t in range(12):
            if s != t:
                r = R.greedy_route(ng, s, t, budget=3)
                assert r.success and r.hops == 1


def test_budget_exhaustion():
    r = R.greedy_route(substrate_only(G.cycle(64)), 0, 32, budget=5)
    assert not r.success
    assert r.hops == 5 == len(r.path) - 1
    with pytest.raises(ValueError):
        R.greedy_route(substrate_only(G.cycle(8)), 0, 3, budget=0)


def test_pure_greedy_stalls_without_substrate():
    g = G.cycle(16)
    e = SA.make_edge_set(g, [0], [8], 0)
    ng = R.build_nav_graph(g, None, e)
    r = R.greedy_route(ng, 0, 3, budget=50)
    assert not r.success and r.hops == 0
    r2 = R.greedy_route(ng, 0, 9, budget=50)
    assert not r2.success and r2.path == [0, 8]


def test_nav_graph_symmetric_and_contains_substrate(ba_graph):
    ng = ba_graph
    n = ng.n
    src = np.repeat(np.arange(n), np.diff(ng.indptr))
    pairs = set(zip(src.tolist(), ng.indices.tolist()))
    assert all((b, a) in pairs for a, b in pairs)
    for v in range(n):
        for u in ng.substrate.neighbors[v]:
            assert (v, int(u)) in pairs
    assert len(pairs) == len(src)


def test_long_flags_exclude_substrate_duplicates():
    g = G.cycle(10)
    e = SA.make_edge_set(g, [0, 0], [1, 5], 0)
    ng = R.build_nav_graph(g, G.build_substrate(g), e)
    nb = ng.neighbors(0).tolist()
    flags = ng.is_long[ng.indptr[0] : ng.indptr[1]].tolist()
    assert dict(zip(nb, flags)) == {1: False, 5: True, 9: False}


def test_nav_graph_rejects_bad_edges():
    g = G.cycle(10)
    e = SA.make_edge_set(g, [0], [5], 0)
    e.edges = np.array([[0, 10]])
    with pytest.raises(ValueError):
        R.build_nav_graph(g, G.build_substrate(g), e)


@settings(max_examples=40, deadline=None)
@given(s=st.integers(0, 1023), t=st.integers(0, 1023))
def test_route_invariants(ba_graph, s, t):
    ng = ba_graph
    g = ng.geometry
    r = R.greedy_route(ng, s, t, budget=R.default_budget(g.n))
    assert r.success
    assert r.path[-1] == t and r.hops == len(r.path) - 1
    d = g.dist(np.array(r.path), t)
    assert np.all(np.diff(d) < 0)
    assert r.hops <= g.dist(s, t)
    again = R.greedy_route(ng, s, t, budget=R.default_budget(g.n))
    assert again == r


def test_route_picks_closest_neighbor_smallest_index():
    g = G.cycle(20)
    # 0 links to 9 and 11, both at distance 1 from 10
    e = SA.make_edge_set(g, [0, 0], [9, 11], 0)
    ng = R.build_nav_graph(g, G.build_substrate(g), e)
    r = R.greedy_route(ng, 0, 10, budget=5)
    assert r.path == [0, 9, 10]
    assert r.long_edges_used == 1


def test_default_budget():
    assert R.default_budget(4096) == math.ceil(10 * math.log(4096) ** 2)
    assert R.default_budget(1) == 1


def test_probe_direct_edge_witness():
    g = G.cycle(64)
    e = SA.make_edge_set(g, [0], [30], 0)
    ng = R.build_nav_graph(g, G.build_substrate(g), e)
    pr = R.probe_reducibility(ng, 0, 30, p=1, C=1, rho=0.5)
    assert pr.found and not pr.immediate
    assert pr.witness_vertex == 0 and pr.witness_edge == (0, 30)
    assert pr.examined == 1


def test_probe_no_long_edges():
    g = G.cycle(256)
    ng = substrate_only(g)
    L = R.probe_length(g.n, 1.0, 1.0)
    pr = R.probe_reducibility(ng, 0, 100, p=1, C=1, rho=0.5)
    assert not pr.found and pr.examined == L
    # a short pair contracts along the local path itself
    pr2 = R.probe_reducibility(ng, 0, 4, p=1, C=1, rho=0.5)
    assert pr2.found and pr2.immediate and pr2.witness_vertex == 2


def test_probe_witness_conditions(ba_graph):
    ng = ba_graph
    g = ng.geometry
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, t = rng.choice(g.n, size=2, replace=False)
        pr = R.probe_reducibility(ng, int(s), int(t), p=1, C=2, rho=0.5)
        if not pr.found:
            continue
        path = G.local_path(ng.substrate, int(s), int(t))
        assert pr.witness_vertex in path[: pr.examined]
        goal = 0.5 * g.dist(s, t)
        if pr.immediate:
            assert g.dist(pr.witness_vertex, t) <= goal
        else:
            u, v = pr.witness_edge
            assert u == pr.witness_vertex
            assert g.dist(v, t) <= goal
            assert v in ng.neighbors(u).tolist()


def test_probe_errors(ba_graph):
    with pytest.raises(ValueError):
        R.probe_reducibility(ba_graph, 3, 3)
    with pytest.raises(ValueError):
        R.probe_reducibility(ba_graph, 0, 3, C=0)
    with pytest.raises(ValueError):
        R.probe_reducibility(ba_graph, 0, 3, rho=1.0)


def test_probe_fraction_at_bminus():
    g = G.cycle(4096)
    cg = M.build_cost_geometry(g, "logdensity:alpha=1")
    th = M.thresholds(cg, 1.0)
    sol = M.solve_profile(cg, th.Bminus)
    ng = R.build_nav_graph(g, G.build_substrate(g), SA.sample_product(cg, sol.q_star, 0))
    pairs = R.random_pairs(g.n, 1000, seed=1)
    # richness at theta makes pairs (theta + 1)-reducible
    found = [R.probe_reducibility(ng, int(s), int(t), p=2, C=1, rho=0.5).found for s, t in pairs]
    assert np.mean(found) >= 0.99


def test_replay_bound(ba_graph):
    ng = ba_graph
    r = R.greedy_route(ng, 5, 700)
    rep = R.replay_route(ng, r)
    assert rep.C > 0 and rep.ok
    with pytest.raises(ValueError):
        R.replay_route(ng, R.greedy_route(ng, 0, 512, budget=1))


def test_required_constant_is_minimal(ba_graph):
    ng = ba_graph
    n = ng.n
    C = R.required_constant(ng, 17, 600)
    L = round(C * math.log(n))
    assert R.probe_reducibility(ng, 17, 600, limit=L).found
    if L > 1:
        assert not R.probe_reducibility(ng, 17, 600, limit=L - 1).found


def test_batch_complete_graph():
    st_ = R.route_trial_batch(complete(G.cycle(16)), 200, seed=0)
    assert st_.success_rate == 1.0 and st_.p50 == 1.0


def test_batch_substrate_only_cycle():
    n = 256
    st_ = R.route_trial_batch(substrate_only(G.cycle(n)), 2000, budget_formula=lambda m: m, seed=4)
    assert st_.success_rate == 1.0
    assert abs(st_.p50 - n / 4) <= 8
    assert st_.mean_long_edges == 0


def test_batch_rba_torus():
    g = G.torus(64, 2)
    ng = R.build_nav_graph(g, G.build_substrate(g), SA.sample_rba(g, 1, seed=0))
    st_ = R.route_trial_batch(ng, 1000, seed=0)
    assert st_.success_rate >= 0.99


def test_batch_deterministic_and_errors(ba_graph):
    a = R.route_trial_batch(ba_graph, 50, seed=9)
    b = R.route_trial_batch(ba_graph, 50, seed=9)
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.hops, b.hops)
    with pytest.raises(ValueError):
        R.route_trial_batch(ba_graph, 0)


def test_random_pairs_distinct_and_stable():
    p = R.random_pairs(50, 500, seed=2)
    assert (p[:, 0] != p[:, 1]).all()
    assert np.array_equal(p[:10], R.random_pairs(50, 10, seed=2))
