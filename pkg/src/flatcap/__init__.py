"""Flatness-based input-constraint handling for quadcopter position control.

Submodules
----------
flatmap       flat coordinate change and the constraint sets U, V, V~
zonotope      scaled zonotopes and their volume
geomhull      3-D convex polytopes (hull, H/V conversion, volume)
approx        inner approximation S_v of V~ and box baselines
qpsolver      dense active-set QP solver
mpc           flat and PWA model predictive controllers
trajectories  reference trajectories
simulator     closed-loop runs and comparisons
"""
__version__ = "0.1.0"
