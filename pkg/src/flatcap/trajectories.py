"""Reference trajectories sampled in flat coordinates.

Every reference carries, per sample, the position ``sigma``, velocity
``sigma_dot``, flat input ``v = sigma_ddot`` and body input
``u = forward_map(v)``. Smooth references also keep a callable for exact
derivatives of any order.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import BSpline

from flatcap.errors import SolverError
from flatcap.flatmap import DEFAULT_LIMITS, ConstraintParams, forward_map, in_Vtilde

log = logging.getLogger(__name__)

__all__ = [
    "ReferenceTrajectory",
    "REF1_WAYPOINTS",
    "REF1_TIMES",
    "min_snap_bspline",
    "gen_ref1",
    "gen_ref2",
    "gen_ref3",
    "gen_ref4",
    "gen_hover",
    "generate",
    "DEFAULT_DURATION",
]

CSV_SCHEMA = "# flatcap-csv v1"
CSV_COLUMNS = [
    "t", "x", "y", "z", "vx", "vy", "vz", "v1", "v2", "v3", "T", "phi", "theta",
]

# Waypoints in units of 10 cm, converted to metres below.
REF1_WAYPOINTS = 0.1 * np.array(
    [
        [0, 0, 3.5],
        [3, -3, 4],
        [6, 0, 7.5],
        [6, 3, 8],
        [3, 6, 8],
        [0, 6, 8],
        [-3, 3, 8],
        [-3, 0, 5],
        [0, 0, 3.5],
    ]
)
REF1_TIMES = np.arange(9) * 30.0 / 8
HOLD_TIME = 30.0 / 8

DEFAULT_DURATION = {1: 30.0, 2: 9 * HOLD_TIME, 3: 20.0, 4: 30.0}


@dataclass
class ReferenceTrajectory:
    """Sampled reference; rows are samples ``k = 0..n-1`` at ``t = k t_s``."""

    name: str
    t_s: float
    t: np.ndarray
    sigma: np.ndarray
    sigma_dot: np.ndarray
    v: np.ndarray
    u: np.ndarray
    smooth: bool = True
    curve: Callable | None = field(default=None, repr=False)
    psi: float = 0.0
    step_times: np.ndarray | None = None  # set-point switch instants (step references)
    extendable: bool = False  # curve stays valid past the last sample
    params: ConstraintParams = field(default=DEFAULT_LIMITS, repr=False)

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def xi(self) -> np.ndarray:
        return np.hstack([self.sigma, self.sigma_dot])

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def derivative(self, t, order: int) -> np.ndarray:
        """Exact ``order``-th derivative of ``sigma`` (smooth references only)."""
        if self.curve is None:
            raise ValueError(f"{self.name} has no analytic representation")
        return self.curve(np.asarray(t, dtype=float), order)

    def window(self, k: int, n_p: int):
        """Horizon slices for a controller at step ``k``.

        Returns ``(xi_ref, v_ref, u_ref)`` where ``xi_ref`` covers samples
        ``k+1..k+n_p`` and the input references ``k..k+n_p-1``.

        Step references give no preview: the set point active at ``k`` is
        held over the whole horizon, as a set-point command would be.
        Smooth references are evaluated past their end when they carry an
        extendable analytic curve; otherwise the last sample repeats.
        """
        if not self.smooth:
            rows = np.full(n_p, min(k, self.n - 1))
            return self.xi[rows], self.v[rows], self.u[rows]
        si = np.arange(k + 1, k + n_p + 1)
        ii = np.arange(k, k + n_p)
        if self.extendable and self.curve is not None and si[-1] >= self.n:
            ts = np.arange(k, k + n_p + 1) * self.t_s
            sig, dsig, acc = (self.curve(ts, o) for o in range(3))
            xi = np.hstack([sig, dsig])
            u = forward_map(acc, self.psi, self.params)
            return xi[1:], acc[:-1], u[:-1]
        si = np.minimum(si, self.n - 1)
        ii = np.minimum(ii, self.n - 1)
        return self.xi[si], self.v[ii], self.u[ii]

    def check_inputs(self, p: ConstraintParams = DEFAULT_LIMITS) -> np.ndarray:
        """Boolean mask of samples whose ``v`` lies in ``V~``."""
        return in_Vtilde(self.v, p)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.sigma, self.sigma_dot, self.v, self.u])
        with open(path, "w", newline="") as fh:
            fh.write(CSV_SCHEMA + "\n")
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in data:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, name: str | None = None, smooth: bool = True) -> "ReferenceTrajectory":
        rows = []
        with open(path, newline="") as fh:
            for line in csv.reader(fh):
                if not line or line[0].startswith("#") or line[0] == "t":
                    continue
                rows.append([float(x) for x in line])
        data = np.array(rows)
        t = data[:, 0]
        t_s = float(t[1] - t[0]) if len(t) > 1 else 0.0
        return cls(name or str(path), t_s, t, data[:, 1:4], data[:, 4:7], data[:, 7:10], data[:, 10:13], smooth)


def _time_grid(duration: float, t_s: float) -> np.ndarray:
    if not t_s > 0:
        raise ValueError("t_s must be positive")
    n = int(round(duration / t_s))
    if abs(n * t_s - duration) > 1e-9 * max(1.0, duration):
        raise ValueError(f"duration {duration} is not a multiple of t_s {t_s}")
    return np.arange(n + 1) * t_s


def _from_curve(name, curve, duration, t_s, p, psi, extendable=True) -> ReferenceTrajectory:
    t = _time_grid(duration, t_s)
    sigma, dsigma, v = curve(t, 0), curve(t, 1), curve(t, 2)
    u = forward_map(v, psi, p)
    ref = ReferenceTrajectory(name, t_s, t, sigma, dsigma, v, u, True, curve, psi, extendable=extendable, params=p)
    bad = ~ref.check_inputs(p)
    if bad.any():
        log.warning("%s: %d samples with v outside V~", name, int(bad.sum()))
    return ref


def min_snap_bspline(waypoints, times, degree: int = 7, quad_points: int = 6) -> BSpline:
    """Clamped B-spline through ``waypoints`` with least integrated squared snap.

    Knots sit at the waypoint times (end knots repeated ``degree + 1``
    times). Besides interpolation, velocity and acceleration vanish at both
    ends. The remaining control-point freedom minimizes
    ``int ||sigma''''||^2 dt``, an equality-constrained least-squares problem
    solved through its KKT system.

    Raises
    ------
    SolverError
        The interpolation conditions are rank deficient.
    """
    W = np.asarray(waypoints, dtype=float)
    tk = np.asarray(times, dtype=float)
    if len(W) != len(tk) or np.any(np.diff(tk) <= 0):
        raise ValueError("times must be strictly increasing, one per waypoint")
    knots = np.r_[[tk[0]] * (degree + 1), tk[1:-1], [tk[-1]] * (degree + 1)]
    n = len(knots) - degree - 1
    basis = BSpline(knots, np.eye(n), degree)

    # Gram matrix of the snap of the basis functions
    xg, wg = np.polynomial.legendre.leggauss(quad_points)
    snap = basis.derivative(4)
    M = np.zeros((n, n))
    for a, b in zip(tk[:-1], tk[1:]):
        x = 0.5 * (b - a) * xg + 0.5 * (a + b)
        S = snap(x)
        M += (S.T * (0.5 * (b - a) * wg)) @ S

    rows = [basis(tk)]
    rhs = [W]
    for order in (1, 2):
        d = basis.derivative(order)
        rows.append(d(tk[[0, -1]]))
        rhs.append(np.zeros((2, W.shape[1])))
    C = np.vstack(rows)
    d = np.vstack(rhs)
    if np.linalg.matrix_rank(C) < len(C):
        raise SolverError("interpolation conditions are singular")
    m = len(C)
    K = np.block([[2 * M, C.T], [C, np.zeros((m, m))]])
    rhs_k = np.vstack([np.zeros((n, W.shape[1])), d])
    try:
        sol = np.linalg.solve(K, rhs_k)
    except np.linalg.LinAlgError as exc:
        raise SolverError("minimum-snap KKT system is singular") from exc
    return BSpline(knots, sol[:n], degree)


def gen_ref1(waypoints=REF1_WAYPOINTS, times=REF1_TIMES, t_s: float = 0.1, p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Minimum-snap degree-7 B-spline through the waypoints."""
    spl = min_snap_bspline(waypoints, times)

    def curve(t, order):
        return spl.derivative(order)(t) if order else spl(t)

    # a spline is not meaningful outside its knot span; the horizon repeats
    # the final (resting) sample instead
    return _from_curve("ref1", curve, float(times[-1] - times[0]), t_s, p, psi, extendable=False)


def gen_ref2(waypoints=REF1_WAYPOINTS, hold_times=HOLD_TIME, t_s: float = 0.25, p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Piecewise-constant set points held for ``hold_times`` each.

    The velocity and flat input references are zero, so ``u_ref`` is hover.
    """
    W = np.asarray(waypoints, dtype=float)
    holds = np.broadcast_to(np.asarray(hold_times, dtype=float), (len(W),))
    edges = np.r_[0.0, np.cumsum(holds)]
    t = _time_grid(edges[-1], t_s)
    # small slack so a step scheduled on a sample instant takes effect there
    idx = np.clip(np.searchsorted(edges, t + 1e-9, side="right") - 1, 0, len(W) - 1)
    sigma = W[idx]
    zeros = np.zeros_like(sigma)
    u = np.tile(forward_map(np.zeros(3), psi, p), (len(t), 1))
    return ReferenceTrajectory("ref2", t_s, t, sigma, zeros, zeros.copy(), u, False, None, psi, edges[:-1], params=p)


def _circle_curve(radius, omega, z_fn):
    def curve(t, order):
        w = omega
        c, s = np.cos(w * t), np.sin(w * t)
        # derivative of cos/sin cycles with period 4
        cyc = [(c, s), (-s, c), (-c, -s), (s, -c)][order % 4]
        x = radius * w**order * cyc[0]
        y = radius * w**order * cyc[1]
        return np.column_stack([x, y, z_fn(t, order)])

    return curve


def gen_ref3(t_s: float = 0.2, duration: float = DEFAULT_DURATION[3], radius: float = 0.5, height: float = 0.3, omega: float = 0.3 * np.pi, p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Horizontal circle at constant height."""

    def z(t, order):
        return np.full_like(t, height if order == 0 else 0.0, dtype=float)

    return _from_curve("ref3", _circle_curve(radius, omega, z), duration, t_s, p, psi)


def gen_ref4(t_s: float = 0.25, duration: float = DEFAULT_DURATION[4], omega: float = np.pi / 15, p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Circle of radius 0.5 with height ``0.5 sin(omega t / 2) + 0.5``."""
    wz = 0.5 * omega

    def z(t, order):
        if order == 0:
            return 0.5 * np.sin(wz * t) + 0.5
        cyc = [np.sin, np.cos, lambda a: -np.sin(a), lambda a: -np.cos(a)][order % 4]
        return 0.5 * wz**order * cyc(wz * t)

    return _from_curve("ref4", _circle_curve(0.5, omega, z), duration, t_s, p, psi)


def gen_hover(t_s: float = 0.1, duration: float = 10.0, position=(0.0, 0.0, 0.5), p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Constant set point."""
    pos = np.asarray(position, dtype=float)

    def curve(t, order):
        return np.tile(pos if order == 0 else np.zeros(3), (len(np.atleast_1d(t)), 1))

    return _from_curve("hover", curve, duration, t_s, p, psi)


def generate(scenario, t_s: float, duration: float | None = None, p: ConstraintParams = DEFAULT_LIMITS, psi: float = 0.0) -> ReferenceTrajectory:
    """Reference by name (``"ref1".."ref4"``, ``"hover"``) or number 1..4."""
    key = f"ref{scenario}" if isinstance(scenario, int) else str(scenario)
    if key == "ref1":
        if duration not in (None, DEFAULT_DURATION[1]):
            times = np.linspace(0, duration, len(REF1_WAYPOINTS))
            return gen_ref1(REF1_WAYPOINTS, times, t_s, p, psi)
        return gen_ref1(t_s=t_s, p=p, psi=psi)
    if key == "ref2":
        hold = HOLD_TIME if duration is None else duration / len(REF1_WAYPOINTS)
        return gen_ref2(hold_times=hold, t_s=t_s, p=p, psi=psi)
    if key == "ref3":
        return gen_ref3(t_s, duration or DEFAULT_DURATION[3], p=p, psi=psi)
    if key == "ref4":
        return gen_ref4(t_s, duration or DEFAULT_DURATION[4], p=p, psi=psi)
    if key == "hover":
        return gen_hover(t_s, duration or 10.0, p=p, psi=psi)
    raise ValueError(f"unknown scenario {scenario!r}")
