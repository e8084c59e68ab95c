"""Edge budget exponent: degree and hop counts around B = g(alpha).

Lower exponents mean cheaper edges and denser graphs; larger ones starve
the long scales and routes lengthen.
"""
from navlab import geometry as G
from navlab import measure as M
from navlab import routing as R
from navlab import sampler as SA

g = G.cycle(4096)
sub = G.build_substrate(g)
cg = M.build_cost_geometry(g, "logdensity:alpha=1")
for x in (0.6, 0.8, 1.0, 1.2, 1.4):
    B = M.g_of_lambda(cg, x)
    e = SA.sample_product(cg, M.solve_profile(cg, B).q_star, seed=0)
    st = R.route_trial_batch(R.build_nav_graph(g, sub, e), 500, seed=0)
    print(f"exponent {x:.1f}  B={B:8.3f}  degree={2 * len(e) / g.n:6.2f}  success={st.success_rate:.3f}  p50={st.p50:.0f}")
