"""Acceptance criteria, one group of tests per criterion.

Each criterion's tests carry ``@pytest.mark.acceptance(n, title)``; the
terminal summary reports one PASS/FAIL line per criterion.
"""
import itertools
import time

import numpy as np
import pytest

from flatcap.approx import ApproxConfig, algorithm1, build_Bv, build_Pv, bv_half_widths, pv_half_width
from flatcap.cli import REFERENCE_COUNTS_N0_2, main
from flatcap.flatmap import DEFAULT_LIMITS, forward_map, in_U, in_V, inverse_map, vtilde_residuals
from flatcap.mpc import discrete_dynamics, linearize_at, pwa_linearize
from flatcap.qpsolver import ActiveSetQP, QProblem
from flatcap.simulator import SimConfig, oscillation_metric, run_closed_loop
from flatcap.trajectories import gen_ref1
from flatcap.zonotope import DEFAULT_GENERATORS, Zonotope, vertex_candidates, volume_objective
from tests.oracles import box_by_height_scan, cube_half_width_by_bisection, hull_volume, qp_by_enumeration, sample_vtilde

acceptance = pytest.mark.acceptance
SCENARIOS = ("ref1", "ref2", "ref3", "ref4")
SEEDS = range(5)
NOISE = 0.05


def _uniform_in(poly, n, rng):
    lo, hi = poly.vertices.min(axis=0), poly.vertices.max(axis=0)
    out, total = [], 0
    while total < n:
        x = lo + (hi - lo) * rng.random((4 * n, 3))
        x = x[poly.contains(x, 0.0)]
        out.append(x)
        total += len(x)
    return np.vstack(out)[:n]


@pytest.fixture(scope="module")
def approx_timed():
    t0 = time.perf_counter()
    res2 = algorithm1(ApproxConfig(n0=2))
    t1 = time.perf_counter()
    res25 = algorithm1(ApproxConfig(n0=25))
    t2 = time.perf_counter()
    return {"n0_2": res2, "n0_25": res25, "time_2": t1 - t0, "time_25": t2 - t1}


@pytest.fixture(scope="module")
def matrix(approx_timed):
    """Every scenario x controller x noise level x seed, keyed by the tuple."""
    sv = approx_timed["n0_2"].polytope
    logs = {}
    for scen, ctrl, sigma, seed in itertools.product(SCENARIOS, ("fb", "pwa"), (0.0, NOISE), SEEDS):
        cfg = SimConfig(scen, controller=ctrl, noise_sigma=sigma, seed=seed)
        logs[scen, ctrl, sigma, seed] = run_closed_loop(cfg, sv if ctrl == "fb" else None)
    return logs


# -- 1 ---------------------------------------------------------------------


@acceptance(1, "cube and box baselines against independent oracles, < 1 s")
def test_c1_baseline_bounds():
    t0 = time.perf_counter()
    a = pv_half_width(DEFAULT_LIMITS)
    w = bv_half_widths(DEFAULT_LIMITS)
    elapsed = time.perf_counter() - t0
    assert a == pytest.approx(1.0875, abs=5e-4)
    np.testing.assert_allclose(w, [0.815, 0.815, 3.270], atol=5e-3)
    # bisection for the cube, a scan over the box height for w3 = g/3
    assert a == pytest.approx(cube_half_width_by_bisection(DEFAULT_LIMITS.g, DEFAULT_LIMITS.t_max, DEFAULT_LIMITS.tan_eps), abs=1e-9)
    np.testing.assert_allclose(w, box_by_height_scan(DEFAULT_LIMITS.g, DEFAULT_LIMITS.t_max, DEFAULT_LIMITS.tan_eps), atol=1e-4)
    assert w[2] == pytest.approx(DEFAULT_LIMITS.g / 3, abs=1e-12)
    assert elapsed < 1.0


# -- 2 ---------------------------------------------------------------------


@acceptance(2, "baseline volumes and hull approximation volumes, < 60 s")
def test_c2_baseline_volumes():
    assert build_Pv(DEFAULT_LIMITS).volume() == pytest.approx(10.29, abs=0.02)
    assert build_Bv(DEFAULT_LIMITS).volume() == pytest.approx(17.39, abs=0.05)


@acceptance(2, "baseline volumes and hull approximation volumes, < 60 s")
def test_c2_algorithm1_volumes(approx_timed):
    v2, v25 = approx_timed["n0_2"].volume, approx_timed["n0_25"].volume
    print(f"N0=2 volume {v2:.4f} ({approx_timed['time_2']:.1f} s); N0=25 volume {v25:.4f} ({approx_timed['time_25']:.1f} s)")
    assert v2 >= 110
    assert v25 >= 0.98 * v2
    assert approx_timed["time_2"] + approx_timed["time_25"] < 60


# -- 3 ---------------------------------------------------------------------


@acceptance(3, "N0 = 2 hull counts, or a deviation note with criterion 2 met")
def test_c3_counts_or_deviation_note(approx_timed, tmp_path, capsys):
    import json

    res = approx_timed["n0_2"]
    counts = (res.n_vertices, res.n_inequalities)
    assert main(["approx", "--n0", "2", "--merge-tol", "1e-7", "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert (summary["n_vertices"], summary["n_inequalities"]) == counts
    if counts != REFERENCE_COUNTS_N0_2:
        assert summary["volume"] >= 110
        assert f"{counts[0]} vertices and {counts[1]} inequalities" in summary["deviation_note"]
    print(f"N0=2 counts {counts}, reference {REFERENCE_COUNTS_N0_2}")


# -- 4 ---------------------------------------------------------------------


@acceptance(4, "containment chain by Monte Carlo and the non-convexity witness")
def test_c4_sv_inside_vtilde(approx_timed, rng):
    x = _uniform_in(approx_timed["n0_2"].polytope, 100_000, rng)
    assert np.sum(np.max(vtilde_residuals(x), axis=-1) > 1e-6) == 0


@acceptance(4, "containment chain by Monte Carlo and the non-convexity witness")
def test_c4_vtilde_inside_V(rng):
    x = sample_vtilde(100_000, rng)
    violations = 0
    for psi in np.linspace(-np.pi, np.pi, 100, endpoint=False):
        violations += int(np.sum(~in_U(forward_map(x, psi), tol=1e-6)))
    assert violations == 0


@acceptance(4, "containment chain by Monte Carlo and the non-convexity witness")
@pytest.mark.parametrize("psi", [0.0, 0.7])
def test_c4_printed_witness_leaves_V(psi):
    # the midpoint of the (T_max, +-phi_max, +-theta_max) images; it is
    # expected to fall outside V
    t = DEFAULT_LIMITS
    v_plus = inverse_map([t.t_max, t.phi_max, t.theta_max], psi)
    v_minus = inverse_map([t.t_max, -t.phi_max, -t.theta_max], psi)
    assert in_V(v_plus, psi, tol=1e-12) and in_V(v_minus, psi, tol=1e-12)
    mid = 0.5 * (v_plus + v_minus)
    print(f"witness midpoint {mid}, inputs {forward_map(mid, psi)}")
    assert not in_V(mid, psi)


# -- 5 ---------------------------------------------------------------------


@acceptance(5, "zonotope volume formula against hull volumes")
def test_c5_random_zonotopes(rng):
    worst = 0.0
    for _ in range(100):
        n_g = int(rng.integers(3, 7))
        z = Zonotope(rng.normal(size=(3, n_g)), rng.normal(size=3), rng.uniform(0.1, 2.0, n_g))
        worst = max(worst, abs(8 * volume_objective(z) / hull_volume(vertex_candidates(z)) - 1))
    assert worst <= 1e-8


@acceptance(5, "zonotope volume formula against hull volumes")
def test_c5_default_generators():
    z = Zonotope(DEFAULT_GENERATORS)
    assert volume_objective(z) == pytest.approx(11.0, abs=1e-12)
    assert hull_volume(vertex_candidates(z)) == pytest.approx(88.0, rel=1e-10)


# -- 6 ---------------------------------------------------------------------


@acceptance(6, "QP solver against enumeration; KKT residuals in every run")
def test_c6_random_qps(rng):
    worst = 0.0
    for _ in range(500):
        n, m = int(rng.integers(1, 5)), int(rng.integers(0, 7))
        M = rng.normal(size=(n, n))
        H = M @ M.T + 0.1 * np.eye(n)
        f = 3 * rng.normal(size=n)
        A = rng.normal(size=(m, n))
        b = A @ rng.normal(size=n) + rng.uniform(0, 1, m)
        res = ActiveSetQP().solve(QProblem(H, f, A, b))
        worst = max(worst, np.max(np.abs(res.x - qp_by_enumeration(H, f, A, b))))
    assert worst <= 1e-6


@acceptance(6, "QP solver against enumeration; KKT residuals in every run")
def test_c6_kkt_every_step(matrix):
    worst = 0.0
    for key, lg in matrix.items():
        # a fallback step has no QP solution to certify
        assert not lg.fallback.any(), key
        assert np.isfinite(lg.kkt).all(), key
        worst = max(worst, float(lg.kkt.max()))
    print(f"largest KKT residual over {len(matrix)} runs: {worst:.2e}")
    assert worst <= 1e-6


# -- 7 ---------------------------------------------------------------------


@acceptance(7, "PWA Jacobians against central differences")
def test_c7_jacobians():
    ref = gen_ref1(t_s=0.1)
    lin = pwa_linearize(ref, n_l=100)
    assert lin.n_models == 100
    h, worst = 1e-6, 0.0
    for xi, u in zip(lin.xi, lin.u):
        _, B, _ = linearize_at(xi, u, lin.t_s)
        fd = np.column_stack(
            [(discrete_dynamics(xi, u + h * e, lin.t_s) - discrete_dynamics(xi, u - h * e, lin.t_s)) / (2 * h) for e in np.eye(3)]
        )
        worst = max(worst, np.max(np.abs(B - fd)) / np.max(np.abs(B)))
        A, _, _ = linearize_at(xi, u, lin.t_s)
        fd_A = np.column_stack(
            [(discrete_dynamics(xi + h * e, u, lin.t_s) - discrete_dynamics(xi - h * e, u, lin.t_s)) / (2 * h) for e in np.eye(6)]
        )
        worst = max(worst, np.max(np.abs(A - fd_A)) / np.max(np.abs(A)))
    assert worst <= 1e-6


# -- 8 ---------------------------------------------------------------------


@acceptance(8, "flat controller inputs stay in U across the full run matrix")
def test_c8_fb_never_violates(matrix):
    fb = {k: lg for k, lg in matrix.items() if k[1] == "fb"}
    assert len(fb) == len(SCENARIOS) * 2 * len(SEEDS)
    bad = {k: int((~in_U(lg.u)).sum()) for k, lg in fb.items()}
    assert sum(bad.values()) == 0, {k: v for k, v in bad.items() if v}
    sat = sum(int(lg.violation.sum()) for k, lg in matrix.items() if k[1] == "pwa")
    print(f"flat controller: 0 violations in {len(fb)} runs; PWA saturations: {sat}")


# -- 9 ---------------------------------------------------------------------


@acceptance(9, "noise-free tracking, hover regulation and the step-response comparison")
def test_c9_circle_tracking(matrix):
    assert matrix["ref3", "fb", 0.0, 0].rms(after=5.0)["total"] < 0.05


@acceptance(9, "noise-free tracking, hover regulation and the step-response comparison")
def test_c9_hover_regulation(approx_timed):
    lg = run_closed_loop(SimConfig("hover"), approx_timed["n0_2"].polytope)
    assert lg.summary()["final_error"] < 1e-6


@acceptance(9, "noise-free tracking, hover regulation and the step-response comparison")
def test_c9_step_oscillation_fb_not_worse(matrix):
    fb = [oscillation_metric(matrix["ref2", "fb", NOISE, s]).mean() for s in SEEDS]
    pwa = [oscillation_metric(matrix["ref2", "pwa", NOISE, s]).mean() for s in SEEDS]
    wins = sum(a <= b for a, b in zip(fb, pwa))
    print(f"settled peak-to-peak, flat {np.round(fb, 4)} vs PWA {np.round(pwa, 4)}: flat wins {wins}/5")
    assert wins >= 4


# -- 10 --------------------------------------------------------------------


@acceptance(10, "exact one-step prediction of the flat controller")
def test_c10_prediction_exact(matrix):
    worst = max(float(lg.pred_error.max()) for k, lg in matrix.items() if k[1] == "fb" and k[2] == 0.0)
    assert worst <= 1e-12
