"""Greedy routing on rank-based and bounded-cost graphs.

Compares hop counts for RBA (one long edge per vertex) with the product
sample at Ba, on the cycle and on the 2-d torus.
"""
from navlab import geometry as G
from navlab import measure as M
from navlab import routing as R
from navlab import sampler as SA

for name, g in [("cycle 4096", G.cycle(4096)), ("torus 64x64", G.torus(64, 2))]:
    sub = G.build_substrate(g)
    cg = M.build_cost_geometry(g, "logdensity:alpha=1")
    q = M.solve_profile(cg, M.budget_ba(cg)).q_star
    for label, e in [("rba", SA.sample_rba(g, 1, seed=0)), ("Ba", SA.sample_product(cg, q, seed=0))]:
        ng = R.build_nav_graph(g, sub, e)
        st = R.route_trial_batch(ng, 1000, seed=0)
        print(
            f"{name:12s} {label:3s} edges={len(e):6d} success={st.success_rate:.3f}"
            f" hops p50/p90/p99={st.p50:.0f}/{st.p90:.0f}/{st.p99:.0f}"
            f" long/route={st.mean_long_edges:.2f}"
        )

# RBA hop counts grow slowly with n
print()
for side in (16, 32, 64, 128):
    g = G.torus(side, 2)
    ng = R.build_nav_graph(g, G.build_substrate(g), SA.sample_rba(g, 1, seed=1))
    st = R.route_trial_batch(ng, 1000, seed=1)
    print(f"torus {side:3d}^2  median hops {st.p50:.0f}")
