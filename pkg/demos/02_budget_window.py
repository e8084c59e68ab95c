"""The entropic edge profile as the budget moves through the window.

For the cycle with log-density costs, prints the thresholds and the
per-scale edge probabilities at each named budget. At Ba the expected
number of edges per scale is close to n, the scale-invariant profile.
"""
import numpy as np

from navlab import geometry as G
from navlab import measure as M

g = G.cycle(4096)
cg = M.build_cost_geometry(g, "logdensity:alpha=1")
th = M.thresholds(cg, theta=1.0)
print(f"n={g.n}  K={g.K}  non-empty scales={cg.K}  Bbar={cg.Bbar:.2f}")
print(f"Bminus={th.Bminus:.3f}  Ba={th.Ba:.3f}  Bplus={th.Bplus:.3f}  (B0={th.B0:.1f})")

np.set_printoptions(precision=3, suppress=True)
for name, B in [("Bminus", th.Bminus), ("Ba", th.Ba), ("Bplus", th.Bplus)]:
    sol = M.solve_profile(cg, B)
    print(f"\n{name}: lambda={sol.lam:.4f}  edges={sol.m_star.sum():.0f}")
    print("  q* =", sol.q_star)
    print("  a* =", sol.a_star)

# the multiplier is a monotone function of the budget
for B in np.geomspace(1, cg.Bbar, 6):
    print(f"B={B:9.3f}  lambda={M.invert_budget(cg, B):.5f}")
