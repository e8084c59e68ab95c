"""Coherence of the built-in geometries.

Prints the growth constants and the isotropy fraction for a cycle, a torus
and a binary hierarchy, then runs the set-system axiom checks.
"""
from navlab import geometry as G
from navlab import setsystem as S

for name, g in [("cycle 4096", G.cycle(4096)), ("torus 64x64", G.torus(64, 2)), ("torus 16^3", G.torus(16, 3))]:
    rep = G.verify_coherence(g)
    print(
        f"{name:12s} K={g.K:2d}  growth in [{rep.alpha_growth:.3f}, {rep.A_growth:.3f}]"
        f"  phi={rep.phi:.3f}  H1={rep.pass_h1} H2={rep.pass_h2}"
    )

ss = S.build_hierarchy(2, 10)
cc = S.coherence_constants(ss)
ax = S.check_axioms(ss)
print(f"\nhierarchy(2, 10): n={ss.n}, gamma={cc.gamma:g}, bounds [{cc.alpha_growth:.4f}, {cc.A_growth:.4f}]")
print(f"  K1 {ax.k1}  K2 {ax.k2}  K3 {ax.k3}  (measured beta {ax.beta_witnessed:g})")
for rep in (S.check_shrinkage(ss), S.check_scale_sets(ss), S.check_growth(ss)):
    print(f"  {rep.name:10s} checked {rep.checked:6d}  violations {len(rep.violations)}")
