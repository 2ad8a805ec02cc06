"""Receding-horizon controllers for the quadcopter position loop.

Two formulations share the double-integrator model ``xi+ = A xi + B a``:

* :class:`FlatMPC` plans the flat input ``v`` directly. The model is exact
  and the input constraint is the polytope ``S_v``; the applied body input
  is ``forward_map(v)``.
* :class:`PwaMPC` plans the body input ``u = (T, phi, theta)`` on a
  Taylor linearization of ``A xi + B h(u)`` taken at the reference sample
  nearest the current state, with the box bounds on ``u``.

Both condense the states away and solve a dense QP in the stacked inputs
``w = (w_0, ..., w_{N-1})``. The state cost runs over the predicted
states ``xi_1..xi_N``, the input cost over ``w_0..w_{N-1}``.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flatcap.errors import QPInfeasible
from flatcap.flatmap import DEFAULT_LIMITS, ConstraintParams, forward_map, inverse_map, inverse_map_jacobian
from flatcap.geomhull import Polytope, project_point
from flatcap.qpsolver import ActiveSetQP, QProblem, QPStatus

log = logging.getLogger(__name__)

__all__ = [
    "MpcConfig",
    "DiscreteModel",
    "PwaLinearization",
    "StepStats",
    "discretize",
    "condense",
    "FlatMPC",
    "PwaMPC",
    "fb_mpc_step",
    "pwa_linearize",
    "pwa_mpc_step",
    "input_box",
    "CONTROLLER_GAINS",
    "load_sv",
]


@dataclass
class MpcConfig:
    """Weights, horizon and sampling time.

    ``Q`` weighs the state error (6x6), ``R`` the input error (3x3).
    """

    Q: np.ndarray
    R: np.ndarray
    n_p: int
    t_s: float

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.Q.ndim == 1:
            self.Q = np.diag(self.Q)
        if self.R.ndim == 1:
            self.R = np.diag(self.R)
        if self.Q.shape != (6, 6) or self.R.shape != (3, 3):
            raise ValueError("Q must be 6x6 and R 3x3")
        if np.linalg.eigvalsh((self.Q + self.Q.T) / 2).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh((self.R + self.R.T) / 2).min() <= 0:
            raise ValueError("R must be positive definite")
        if int(self.n_p) != self.n_p or self.n_p < 1:
            raise ValueError("n_p must be a positive integer")
        self.n_p = int(self.n_p)
        if not self.t_s > 0:
            raise ValueError("t_s must be positive")

    def replace(self, **changes) -> "MpcConfig":
        data = {"Q": self.Q, "R": self.R, "n_p": self.n_p, "t_s": self.t_s}
        data.update(changes)
        return MpcConfig(**data)

    def to_dict(self) -> dict:
        return {
            "Q_diag": np.diag(self.Q).tolist(),
            "R_diag": np.diag(self.R).tolist(),
            "n_p": self.n_p,
            "t_s": self.t_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MpcConfig":
        Q = data["Q"] if "Q" in data else np.diag(data["Q_diag"])
        R = data["R"] if "R" in data else np.diag(data["R_diag"])
        return cls(Q, R, int(data["n_p"]), float(data["t_s"]))

    @classmethod
    def from_json(cls, path) -> "MpcConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _diag(*blocks) -> np.ndarray:
    return np.diag(np.concatenate([np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]))


# Published gains per scenario. Keys: scenario number, then controller kind.
CONTROLLER_GAINS = {
    1: {
        "fb": MpcConfig(_diag([35, 35], 50, [5] * 3), np.eye(3), 20, 0.1),
        "pwa": MpcConfig(_diag([35, 35], 50, [5] * 3), _diag(5, [75, 75]), 20, 0.1),
    },
    2: {
        "fb": MpcConfig(_diag([50] * 3, [5] * 3), 5 * np.eye(3), 20, 0.25),
        "pwa": MpcConfig(_diag([50] * 3, [5] * 3), _diag(5, [75, 75]), 20, 0.25),
    },
    3: {
        "fb": MpcConfig(_diag([180] * 3, [10] * 3), 5 * np.eye(3), 10, 0.2),
        "pwa": MpcConfig(_diag([50] * 3, [5] * 3), _diag(5, [80, 80]), 10, 0.2),
    },
    4: {
        "fb": MpcConfig(_diag([90] * 3, [5] * 3), 5 * np.eye(3), 20, 0.25),
        "pwa": MpcConfig(_diag([35, 35], 50, [5] * 3), _diag(5, [75, 75]), 20, 0.25),
    },
}


@dataclass(frozen=True)
class DiscreteModel:
    A: np.ndarray
    B: np.ndarray
    t_s: float

    def step(self, xi, accel) -> np.ndarray:
        return self.A @ xi + self.B @ accel


def discretize(t_s: float) -> DiscreteModel:
    """Zero-order-hold double integrator. RK4 reproduces it exactly since
    the dynamics are polynomial of degree two in time."""
    if t_s < 0:
        raise ValueError("t_s must be non-negative")
    eye = np.eye(3)
    A = np.block([[eye, t_s * eye], [np.zeros((3, 3)), eye]])
    B = np.vstack([0.5 * t_s**2 * eye, t_s * eye])
    return DiscreteModel(A, B, float(t_s))


def condense(A, B, n_p: int, r=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked prediction ``X = Phi xi_0 + Gamma W + offset``.

    ``X`` stacks ``xi_1..xi_N`` and ``W`` stacks ``w_0..w_{N-1}``.
    ``r`` is a constant affine term added at every step.
    """
    nx, nu = B.shape
    Phi = np.zeros((n_p * nx, nx))
    Gamma = np.zeros((n_p * nx, n_p * nu))
    offset = np.zeros(n_p * nx)
    Ak = np.eye(nx)
    powers = [np.eye(nx)]
    for i in range(n_p):
        Ak = A @ Ak
        powers.append(Ak)
        Phi[i * nx : (i + 1) * nx] = Ak
    for i in range(n_p):
        for j in range(i + 1):
            Gamma[i * nx : (i + 1) * nx, j * nu : (j + 1) * nu] = powers[i - j] @ B
    if r is not None:
        acc = np.zeros(nx)
        for i in range(n_p):
            acc = A @ acc + r
            offset[i * nx : (i + 1) * nx] = acc
    return Phi, Gamma, offset


@dataclass
class StepStats:
    status: str
    kkt_residual: float
    iterations: int
    solve_time: float
    fallback: bool = False
    anchor: int | None = None
    active: list = field(default_factory=list)
    predicted: np.ndarray | None = None  # xi_1..xi_N under the planned inputs


def _tracking_qp(Phi, Gamma, offset, Q, R, n_p, xi, xi_ref, w_ref):
    Qbar = np.kron(np.eye(n_p), Q)
    Rbar = np.kron(np.eye(n_p), R)
    H = Gamma.T @ Qbar @ Gamma + Rbar
    H = 0.5 * (H + H.T)
    err0 = Phi @ xi + offset - np.ravel(xi_ref)
    f = Gamma.T @ Qbar @ err0 - Rbar @ np.ravel(w_ref)
    return H, f


def _horizon(a, n_p: int, width: int) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, width)
    if len(a) != n_p:
        raise ValueError(f"reference must have {n_p} rows, got {len(a)}")
    return a


class FlatMPC:
    """Linear MPC on the flat double integrator with ``v`` in ``S_v``.

    Parameters
    ----------
    cfg : MpcConfig
    s_v : Polytope
        Input set in flat coordinates, an inner approximation of ``V~``.
    psi : float
        Yaw used when mapping ``v`` back to ``u``.
    """

    def __init__(self, cfg: MpcConfig, s_v: Polytope, psi: float = 0.0, p: ConstraintParams = DEFAULT_LIMITS):
        self.cfg = cfg
        self.s_v = s_v
        self.psi = psi
        self.p = p
        self.model = discretize(cfg.t_s)
        self.Phi, self.Gamma, self.offset = condense(self.model.A, self.model.B, cfg.n_p)
        n_p = cfg.n_p
        self.A_in = np.kron(np.eye(n_p), s_v.A)
        self.b_in = np.tile(s_v.b, n_p)
        self.solver = ActiveSetQP()
        self._warm = None

    def reset(self) -> None:
        self._warm = None

    def step(self, xi, xi_ref, v_ref):
        """One control move.

        Parameters
        ----------
        xi : (6,) current flat state
        xi_ref : (N, 6) reference for ``xi_{k+1}..xi_{k+N}``
        v_ref : (N, 3) reference for ``v_k..v_{k+N-1}``

        Returns
        -------
        u : (3,) body input
        v : (3,) flat input
        stats : StepStats
        """
        n_p = self.cfg.n_p
        xi = np.asarray(xi, dtype=float)
        xi_ref = _horizon(xi_ref, n_p, 6)
        v_ref = _horizon(v_ref, n_p, 3)
        H, f = _tracking_qp(self.Phi, self.Gamma, self.offset, self.cfg.Q, self.cfg.R, n_p, xi, xi_ref, v_ref)
        q = QProblem(H, f, self.A_in, self.b_in)
        t0 = time.perf_counter()
        try:
            res = self.solver.solve(q, warm_start=self._warm)
            ok = res.status is QPStatus.OPTIMAL
        except QPInfeasible:
            res, ok = None, False
        elapsed = time.perf_counter() - t0
        if ok:
            w = res.x
            v = w[:3].copy()
            stats = StepStats(res.status.value, res.kkt_residual, res.iterations, elapsed, active=res.active)
            self._warm = np.r_[w[3:], w[-3:]]
        else:
            v = project_point(self.s_v, v_ref[0])
            w = np.tile(v, n_p)
            log.warning("flat MPC fallback: QP %s, projecting v_ref onto S_v", "infeasible" if res is None else res.status.value)
            stats = StepStats("fallback", np.nan, 0 if res is None else res.iterations, elapsed, fallback=True)
            self._warm = None
        stats.predicted = (self.Phi @ xi + self.Gamma @ w).reshape(n_p, 6)
        u = forward_map(v, self.psi, self.p)
        return u, v, stats


def fb_mpc_step(xi, xi_ref, v_ref, s_v: Polytope, cfg: MpcConfig, psi: float = 0.0, p: ConstraintParams = DEFAULT_LIMITS):
    """Stateless single move of :class:`FlatMPC` (no warm start)."""
    return FlatMPC(cfg, s_v, psi, p).step(xi, xi_ref, v_ref)


@dataclass
class PwaLinearization:
    """Affine models ``xi+ = A_j xi + B_j u + r_j`` around reference samples."""

    xi: np.ndarray  # (N_l, 6) anchor states
    u: np.ndarray  # (N_l, 3) anchor inputs
    A: np.ndarray  # (N_l, 6, 6)
    B: np.ndarray  # (N_l, 6, 3)
    r: np.ndarray  # (N_l, 6)
    psi: float = 0.0
    t_s: float = 0.1

    @property
    def n_models(self) -> int:
        return len(self.xi)

    def nearest(self, xi) -> int:
        """Index of the anchor state closest to ``xi`` (first one on ties)."""
        d = np.linalg.norm(self.xi - np.asarray(xi, dtype=float), axis=1)
        return int(np.argmin(d))


def discrete_dynamics(xi, u, t_s: float, psi: float = 0.0, p: ConstraintParams = DEFAULT_LIMITS) -> np.ndarray:
    """``f_d(xi, u) = A xi + B h_psi(u)``."""
    m = discretize(t_s)
    return m.A @ np.asarray(xi, dtype=float) + m.B @ inverse_map(u, psi, p)


def linearize_at(xi, u, t_s: float, psi: float = 0.0, p: ConstraintParams = DEFAULT_LIMITS):
    """Jacobians of ``f_d`` at ``(xi, u)`` and the affine remainder."""
    m = discretize(t_s)
    J = inverse_map_jacobian(u, psi)
    Bj = m.B @ J
    r = discrete_dynamics(xi, u, t_s, psi, p) - m.A @ xi - Bj @ u
    return m.A.copy(), Bj, r


def pwa_linearize(ref, n_l: int = 50, t_s: float | None = None, psi: float = 0.0, p: ConstraintParams = DEFAULT_LIMITS) -> PwaLinearization:
    """Linearize ``f_d`` at ``n_l`` reference samples spread evenly in time.

    Parameters
    ----------
    ref : ReferenceTrajectory or tuple of (xi, u) arrays
    n_l : int
        Number of models; capped at the number of samples.
    """
    if isinstance(ref, tuple):
        xs, us = (np.asarray(a, dtype=float) for a in ref)
    else:
        xs, us = ref.xi, ref.u
        t_s = ref.t_s if t_s is None else t_s
    if t_s is None:
        raise ValueError("t_s is required with raw sample arrays")
    if n_l < 1:
        raise ValueError("n_l must be at least 1")
    n_l = min(n_l, len(xs))
    idx = np.unique(np.round(np.linspace(0, len(xs) - 1, n_l)).astype(int))
    As, Bs, rs = [], [], []
    for i in idx:
        A, B, r = linearize_at(xs[i], us[i], t_s, psi, p)
        As.append(A)
        Bs.append(B)
        rs.append(r)
    return PwaLinearization(xs[idx].copy(), us[idx].copy(), np.array(As), np.array(Bs), np.array(rs), psi, t_s)


def input_box(p: ConstraintParams = DEFAULT_LIMITS) -> tuple[np.ndarray, np.ndarray]:
    """``(lower, upper)`` bounds of ``U``."""
    return np.array([0.0, -p.phi_max, -p.theta_max]), np.array([p.t_max, p.phi_max, p.theta_max])


class PwaMPC:
    """MPC on the body input with a per-step choice of affine model."""

    def __init__(self, cfg: MpcConfig, lin: PwaLinearization, p: ConstraintParams = DEFAULT_LIMITS):
        if abs(lin.t_s - cfg.t_s) > 1e-12:
            raise ValueError("linearization and controller use different t_s")
        self.cfg = cfg
        self.lin = lin
        self.p = p
        lo, hi = input_box(p)
        self.lo, self.hi = lo, hi
        n_p = cfg.n_p
        box_A = np.vstack([np.eye(3), -np.eye(3)])
        box_b = np.r_[hi, -lo]
        self.A_in = np.kron(np.eye(n_p), box_A)
        self.b_in = np.tile(box_b, n_p)
        self.solver = ActiveSetQP()
        self._warm = None
        self._cache: dict[int, tuple] = {}

    def reset(self) -> None:
        self._warm = None

    def _prediction(self, j: int):
        if j not in self._cache:
            self._cache[j] = condense(self.lin.A[j], self.lin.B[j], self.cfg.n_p, self.lin.r[j])
        return self._cache[j]

    def step(self, xi, xi_ref, u_ref):
        """One control move; see :meth:`FlatMPC.step`. Returns ``(u, stats)``."""
        n_p = self.cfg.n_p
        xi = np.asarray(xi, dtype=float)
        xi_ref = _horizon(xi_ref, n_p, 6)
        u_ref = _horizon(u_ref, n_p, 3)
        j = self.lin.nearest(xi)
        Phi, Gamma, offset = self._prediction(j)
        H, f = _tracking_qp(Phi, Gamma, offset, self.cfg.Q, self.cfg.R, n_p, xi, xi_ref, u_ref)
        q = QProblem(H, f, self.A_in, self.b_in)
        t0 = time.perf_counter()
        try:
            res = self.solver.solve(q, warm_start=self._warm)
            ok = res.status is QPStatus.OPTIMAL
        except QPInfeasible:
            res, ok = None, False
        elapsed = time.perf_counter() - t0
        if ok:
            w = res.x
            u = np.clip(w[:3], self.lo, self.hi)  # strips round-off only
            stats = StepStats(res.status.value, res.kkt_residual, res.iterations, elapsed, anchor=j, active=res.active)
            self._warm = np.r_[w[3:], w[-3:]]
        else:
            u = np.clip(u_ref[0], self.lo, self.hi)
            w = np.tile(u, n_p)
            log.warning("PWA MPC fallback: clamping u_ref into U")
            stats = StepStats("fallback", np.nan, 0 if res is None else res.iterations, elapsed, fallback=True, anchor=j)
            self._warm = None
        stats.predicted = (Phi @ xi + Gamma @ w + offset).reshape(n_p, 6)
        return u, stats


def pwa_mpc_step(xi, xi_ref, u_ref, lin: PwaLinearization, cfg: MpcConfig, p: ConstraintParams = DEFAULT_LIMITS):
    """Stateless single move of :class:`PwaMPC`."""
    return PwaMPC(cfg, lin, p).step(xi, xi_ref, u_ref)


def load_sv(path) -> Polytope:
    """Read ``S_v`` from an H-representation CSV written by the approx step."""
    return Polytope.from_hrep_csv(path)
