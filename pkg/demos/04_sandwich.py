"""Exact bounded-cost profile law against the product law.

On small cycles the uniform graph of cost at most Bn is drawn by
rejection from tilted binomials; its per-scale means are compared with
the product sample at q*. At these sizes the exact law sits a few
standard errors below m* on the upper scales; a doubled q* is rejected by
a wide margin.
"""
import numpy as np

from navlab import experiments as ex
from navlab import geometry as G
from navlab import measure as M
from navlab import sampler as SA

np.set_printoptions(precision=2, suppress=True)
N = 5000
for n in (16, 32, 64):
    cg = M.build_cost_geometry(G.cycle(n), "logdensity:alpha=1")
    B = M.budget_ba(cg)
    sol = M.solve_profile(cg, B)
    exact = SA.sample_profile_law(cg, B, N, seed=0, method="rejection")
    for f in (1.0, 2.0):
        prod = ex.product_profiles(cg, np.minimum(1, f * sol.q_star), range(N))
        rep = ex.compare_profiles(exact, prod)
        print(f"n={n:3d} x{f:g}  z={np.array(rep['z'])}  consistent={rep['consistent']}")
    print(f"        m*={sol.m_star}  exact mean={exact.mean(0)}")
