import math

import numpy as np
import pytest
from scipy import stats

from navlab import geometry as G
from navlab import measure as M
from navlab import sampler as SA
from navlab import setsystem as S


@pytest.fixture(scope="module")
def cyc64():
    return M.build_cost_geometry(G.cycle(64), "logdensity:alpha=1")


def tiny():
    """K = 1, P = 3, n = 3: the triangle."""
    return M.build_cost_geometry(G.cycle(3), "explicit:1")


def test_product_all_or_nothing(cyc64):
    full = SA.sample_product(cyc64, np.ones(cyc64.K), seed=1)
    assert len(full) == 64 * 63 // 2
    assert full.by_scale.sum() == len(full)
    empty = SA.sample_product(cyc64, np.zeros(cyc64.K), seed=1)
    assert len(empty) == 0
    with pytest.raises(ValueError):
        SA.sample_product(cyc64, np.full(cyc64.K, 1.5), seed=1)


def test_product_deterministic_and_canonical(cyc64):
    q = np.full(cyc64.K, 0.3)
    a = SA.sample_product(cyc64, q, seed=5)
    b = SA.sample_product(cyc64, q, seed=5)
    c = SA.sample_product(cyc64, q, seed=6)
    assert np.array_equal(a.edges, b.edges)
    assert not np.array_equal(a.edges, c.edges)
    e = a.edges
    assert (e[:, 0] < e[:, 1]).all()
    assert len(np.unique(e, axis=0)) == len(e)
    assert np.array_equal(np.lexsort((e[:, 1], e[:, 0])), np.arange(len(e)))


def test_product_byscale_matches_recount(cyc64):
    e = SA.sample_product(cyc64, np.full(cyc64.K, 0.2), seed=11)
    assert e.by_scale.tolist() == SA.edge_profile_of(cyc64, e).tolist()
    assert SA.edge_profile_of(cyc64, SA.make_edge_set(G.cycle(64), [], [], 0, cyc64.scales)).tolist() == [0] * cyc64.K


def test_edge_profile_rejects_bad_edges(cyc64):
    e = SA.sample_product(cyc64, np.full(cyc64.K, 0.1), seed=2)
    e.edges = np.array([[0, 64]])
    with pytest.raises(ValueError, match="invalid"):
        SA.edge_profile_of(cyc64, e)


def test_product_marginals(cyc64):
    q = np.minimum(1.0, 1.0 / cyc64.p)
    counts = np.array([[SA.product_count(cyc64, q, s, c) for c in range(cyc64.K)] for s in range(10000)])
    mean_want = cyc64.P * q
    var_want = cyc64.P * q * (1 - q)
    se = np.sqrt(var_want / len(counts))
    assert np.all(np.abs(counts.mean(0) - mean_want) <= 3 * se)
    assert np.allclose(counts.var(0, ddof=1), var_want, rtol=0.1)
    assert np.allclose(mean_want, np.minimum(cyc64.P, 64))


def test_product_count_is_the_sampled_profile(cyc64):
    q = np.full(cyc64.K, 0.25)
    for s in range(5):
        e = SA.sample_product(cyc64, q, s)
        assert e.by_scale.tolist() == [SA.product_count(cyc64, q, s, c) for c in range(cyc64.K)]


@pytest.mark.parametrize("g", [G.cycle(17), G.cycle(16), G.torus(6, 2), G.torus(4, 3), G.cycle(50, gamma=3.0)])
def test_class_enumerator_is_bijection(g):
    cg = M.build_cost_geometry(g, "indexing:alpha=1")
    enum = SA.enumerator_for(cg)
    for c, k in enumerate(cg.scales):
        u, v = enum.decode(c, np.arange(cg.P[c]))
        pairs = set(zip(u.tolist(), v.tolist()))
        assert len(pairs) == cg.P[c]
        assert all(a < b for a, b in pairs)
        assert (G.scales_of(g.dist(u, v), g.gamma) == k).all()


def test_class_enumerator_setsystem():
    ss = S.build_hierarchy(2, 5)
    g = S.as_geometry(ss)
    cg = M.build_cost_geometry(g, "indexing:alpha=1")
    enum = SA.enumerator_for(cg)
    total = 0
    for c, k in enumerate(cg.scales):
        u, v = enum.decode(c, np.arange(cg.P[c]))
        total += len(set(zip(u.tolist(), v.tolist())))
        assert (G.scales_of(g.dist(u, v), g.gamma) == k).all()
    assert total == g.n * (g.n - 1) // 2


def test_rba_weights_cycle9():
    g = G.cycle(9)
    w, Z = SA.rba_weights(g, 0)
    assert Z == pytest.approx(2 * (1 / 2 + 1 / 4 + 1 / 6 + 1 / 8))
    assert w[0] == 0
    for u in range(1, 9):
        j = min(u, 9 - u)
        assert w[u] == pytest.approx(1 / (2 * j))


def test_rba_weights_bruteforce_nontransitive():
    ss = S.build_hierarchy(2, 4)
    g = S.as_geometry(ss)
    D = g.distance_matrix()
    for v in [0, 5, 13]:
        w, Z = SA.rba_weights(g, v)
        for u in range(g.n):
            if u == v:
                continue
            N = np.count_nonzero(D[u] <= D[v, u]) - 1
            assert w[u] == pytest.approx(1 / N)


def test_rba_normaliser_transitive():
    g = G.torus(8, 2)
    Zs = {round(SA.rba_weights(g, v)[1], 12) for v in range(g.n)}
    assert len(Zs) == 1


def test_rba_normaliser_growth_bound():
    g = G.torus(16, 2)
    rep = G.verify_coherence(g)
    _, Z = SA.rba_weights(g, 0)
    bound = (rep.A_growth / rep.alpha_growth) * (1 + g.gamma * math.log(g.n, g.gamma))
    assert Z <= bound


def test_rba_two_vertices():
    g = G.cycle(2)
    for seed in range(5):
        e = SA.sample_rba(g, 1, seed)
        assert e.edges.tolist() == [[0, 1]]
    with pytest.raises(ValueError):
        SA.rba_weights(G.MatrixGeometry(np.zeros((1, 1)), 2.0), 0)


def test_rba_distance_one_frequency():
    g = G.cycle(9)
    w, Z = SA.rba_weights(g, 0)
    rng = np.random.default_rng(0)
    draws = rng.choice(9, size=100_000, p=w / Z)
    want = 2 * 0.5 / Z
    assert want == pytest.approx(0.48, abs=0.001)
    freq = np.isin(draws, [1, 8]).mean()
    assert abs(freq - want) <= 3 * math.sqrt(want * (1 - want) / len(draws))


def test_rba_sampler_first_draw_law():
    # the targets behind sample_rba, vertex 0 only
    g = G.cycle(9)
    w, Z = SA.rba_weights(g, 0)
    targets = []
    for seed in range(20000):
        targets.append(SA.rba_targets(g, 1, seed)[0][0])
    counts = np.bincount(targets, minlength=9)[1:]
    p = w[1:] / Z
    chi = stats.chisquare(counts, p * len(targets))
    assert chi.pvalue > 0.001


def test_rba_scale_marginal_is_flat():
    g = G.cycle(4096)
    w, Z = SA.rba_weights(g, 0)
    ks = G.scales_of(g.distances_from(0)[1:], g.gamma)
    mass = np.bincount(ks, weights=w[1:] / Z, minlength=g.K + 1)[1:]
    # scale 1 also holds d = 1 and is excluded; the top scale is partial
    inner = mass[1 : g.K - 1]
    assert inner.max() / inner.min() < 1.3
    assert np.all((inner * g.K > 0.5) & (inner * g.K < 2))


def test_rba_edge_count_and_determinism():
    g = G.torus(16, 2)
    a = SA.sample_rba(g, 2, seed=3)
    b = SA.sample_rba(g, 2, seed=3)
    assert np.array_equal(a.edges, b.edges)
    assert len(a) <= 2 * g.n
    assert a.by_scale.sum() == len(a)
    with pytest.raises(ValueError):
        SA.sample_rba(g, 0, seed=3)


def test_exact_tiny_law():
    cg = tiny()
    ex = SA.ExactSampler(cg, 2 / 3)
    assert ex.profiles[:, 0].tolist() == [0, 1, 2]
    assert np.allclose(ex.probs, [1 / 7, 3 / 7, 3 / 7])


def test_exact_full_cube_marginals():
    cg = tiny()
    ex = SA.ExactSampler(cg, cg.max_cost)
    assert np.allclose(ex.probs, [1 / 8, 3 / 8, 3 / 8, 1 / 8])
    hits = np.zeros((3, 3))
    for s in range(4000):
        for u, v in SA.sample_bounded_cost_exact(cg, cg.max_cost, s).edges:
            hits[u, v] += 1
    iu = np.triu_indices(3, 1)
    assert np.all(np.abs(hits[iu] / 4000 - 0.5) < 3 * math.sqrt(0.25 / 4000))


def test_exact_zero_budget():
    cg = tiny()
    for s in range(3):
        assert len(SA.sample_bounded_cost_exact(cg, 0.0, s)) == 0


def test_exact_budget_respected():
    cg = M.build_cost_geometry(G.cycle(12), "indexing:alpha=1")
    B = 0.4 * cg.Bbar
    for s in range(50):
        e = SA.sample_bounded_cost_exact(cg, B, s)
        assert np.dot(SA.edge_profile_of(cg, e), cg.costs) <= B * cg.n + 1e-9


def test_exact_lattice_too_large(cyc64):
    with pytest.raises(ValueError, match="too large"):
        SA.ExactSampler(cyc64, M.budget_ba(cyc64))


def test_rejection_matches_enumeration():
    cg = M.build_cost_geometry(G.cycle(12), "indexing:alpha=1")
    B = 0.5 * cg.Bbar
    ex = SA.sample_profile_law(cg, B, 20000, seed=1, method="enumerate")
    rj = SA.sample_profile_law(cg, B, 20000, seed=1, method="rejection")
    se = np.sqrt(ex.var(0) / len(ex) + rj.var(0) / len(rj))
    assert np.all(np.abs(ex.mean(0) - rj.mean(0)) <= 4 * se)
    exact = SA.ExactSampler(cg, B)
    mean = exact.probs @ exact.profiles
    assert np.all(np.abs(rj.mean(0) - mean) <= 4 * np.sqrt(rj.var(0) / len(rj)))


def test_profile_law_errors():
    with pytest.raises(ValueError, match="no samples"):
        SA.sample_profile_law(tiny(), 2 / 3, 0, seed=0)
    with pytest.raises(ValueError):
        SA.sample_profile_law(tiny(), 2 / 3, 5, seed=0, method="mcmc")


def test_edge_set_file_roundtrip(tmp_path, cyc64):
    e = SA.sample_product(cyc64, np.full(cyc64.K, 0.1), seed=9)
    path = tmp_path / "e.txt"
    SA.write_edge_set(e, path)
    head = path.read_text().splitlines()[0]
    assert head == "n 64 gamma 2.0 seed 9"
    back = SA.read_edge_set(path, G.cycle(64), cyc64.scales)
    assert np.array_equal(back.edges, e.edges)
    assert back.by_scale.tolist() == e.by_scale.tolist()
    assert back.to_dict()["byScale"] == e.by_scale.tolist()
