"""How much of the flat input set does each polytope recover?

The quadcopter's thrust and tilt limits become a curved set once the inputs
are written as flat-space accelerations. This walk-through builds the two
box baselines and the zonotope-hull approximation, then checks by sampling
that the hull stays inside the curved set while covering far more of it.

Run with ``python demos/constraint_sets.py``.
"""
import numpy as np

from flatcap.approx import ApproxConfig, algorithm1, build_Bv, build_Pv
from flatcap.flatmap import DEFAULT_LIMITS, forward_map, in_U, vtilde_residuals

rng = np.random.default_rng(0)

print("Thrust in [0, %.2f] N/kg, roll and pitch within +-%.4f rad" % (DEFAULT_LIMITS.t_max, DEFAULT_LIMITS.phi_max))

# The two baselines: an origin-centred cube and the tallest-then-widest box.
cube, box = build_Pv(DEFAULT_LIMITS), build_Bv(DEFAULT_LIMITS)
print(f"cube volume {cube.volume():8.3f}  ({cube.n_vertices} vertices)")
print(f"box  volume {box.volume():8.3f}  ({box.n_vertices} vertices)")

# Three anchors along the vertical axis, one zonotope per anchor, hulled.
res = algorithm1(ApproxConfig(n0=2))
hull = res.polytope
print(f"hull volume {res.volume:8.3f}  ({res.n_vertices} vertices, {res.n_inequalities} inequalities)")
for fit in res.fits:
    print(f"  anchor {fit.anchor}: order {fit.order}, scaling {np.round(fit.zonotope.delta, 3)}")

# Sample the hull's bounding box and keep the points inside the hull.
lo, hi = hull.vertices.min(axis=0), hull.vertices.max(axis=0)
x = lo + (hi - lo) * rng.random((200_000, 3))
x = x[hull.contains(x)]
worst = np.max(vtilde_residuals(x))
print(f"{len(x)} sampled points inside the hull; worst constraint residual {worst:.2e} (<= 0 means inside)")

# Map them back to thrust and angles for a few yaw values.
for psi in (0.0, 1.0, 2.5):
    ok = in_U(forward_map(x, psi), tol=1e-9).mean()
    print(f"  yaw {psi:3.1f} rad: {100 * ok:.2f}% of the points give admissible thrust and angles")
