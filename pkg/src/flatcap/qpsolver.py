"""Dense primal active-set solver for strictly convex inequality-constrained QPs.

Problem::

    minimize    0.5 x'Hx + f'x
    subject to  A x <= b

``H`` is factored once (Cholesky); every iteration solves the
equality-constrained subproblem on the current working set through its
Schur complement ``A_W H^-1 A_W'``. Working-set changes use Bland-type
smallest-index tie breaking, which rules out cycling at degenerate
vertices.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from flatcap.errors import QPInfeasible, QPMaxIterations

__all__ = ["QProblem", "QPStatus", "QPResult", "ActiveSetQP", "solve_qp", "kkt_residual"]


class QPStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class QProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.f = np.asarray(self.f, dtype=float).reshape(n)
        if self.A is None:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if not np.allclose(self.H, self.H.T, atol=1e-12 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QPResult:
    x: np.ndarray
    status: QPStatus
    kkt_residual: float
    multipliers: np.ndarray
    active: list = field(default_factory=list)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QPStatus.OPTIMAL


def kkt_residual(q: QProblem, x, lam) -> float:
    """Max of stationarity, primal infeasibility, dual infeasibility and
    complementarity violations."""
    stat = q.H @ x + q.f + q.A.T @ lam
    slack = q.A @ x - q.b
    parts = [np.max(np.abs(stat), initial=0.0)]
    if len(lam):
        parts += [
            np.max(slack, initial=0.0),
            np.max(-lam, initial=0.0),
            np.max(np.abs(lam * slack), initial=0.0),
        ]
    return float(max(parts))


class ActiveSetQP:
    """Primal active-set solver.

    Warm starts are passed explicitly to :meth:`solve`. An instance holds only
    settings, so one per control loop is enough and instances never interact.
    """

    def __init__(self, max_iter: int = 500, feas_tol: float = 1e-9, dual_tol: float = 1e-10):
        self.max_iter = max_iter
        self.feas_tol = feas_tol
        self.dual_tol = dual_tol

    # -- phase 1 -----------------------------------------------------------
    def _feasible_point(self, q: QProblem) -> np.ndarray:
        """Phase 1: maximize the common normalized slack ``t`` (capped at 1)."""
        n, m = q.n, len(q.b)
        if m == 0:
            return np.zeros(n)
        norms = np.linalg.norm(q.A, axis=1)
        cost = np.zeros(n + 1)
        cost[-1] = -1.0
        A_ub = np.hstack([q.A, norms[:, None]])
        res = linprog(
            cost, A_ub=A_ub, b_ub=q.b, bounds=[(None, None)] * n + [(None, 1.0)], method="highs"
        )
        if res.status != 0 or res.x[-1] < -self.feas_tol * max(1.0, np.abs(q.b).max()):
            raise QPInfeasible("phase-1 found no point with A x <= b")
        return res.x[:n]

    def _initial_working_set(self, q: QProblem, x: np.ndarray, hint) -> list[int]:
        slack = q.b - q.A @ x
        tol = self.feas_tol * max(1.0, np.abs(q.b).max(initial=0.0))
        tight = np.flatnonzero(np.abs(slack) <= tol)
        cand = tight if hint is None else [int(i) for i in hint if i in set(tight.tolist())]
        work: list[int] = []
        for i in cand:
            if len(work) == q.n:
                break
            trial = q.A[work + [int(i)]]
            if np.linalg.matrix_rank(trial) == len(work) + 1:
                work.append(int(i))
        return work

    # -- main loop ---------------------------------------------------------
    def solve(self, q: QProblem, warm_start=None, working_set=None) -> QPResult:
        n, m = q.n, len(q.b)
        try:
            L = cho_factor(q.H)
        except np.linalg.LinAlgError as exc:
            raise ValueError("H is not positive definite") from exc

        tol = self.feas_tol * max(1.0, np.abs(q.b).max(initial=0.0))
        x = None
        if warm_start is not None:
            x0 = np.asarray(warm_start, dtype=float).reshape(n)
            if m == 0 or np.all(q.A @ x0 <= q.b + tol):
                x = x0.copy()
        if x is None:
            x = self._feasible_point(q)
            working_set = None

        W = self._initial_working_set(q, x, working_set)
        lam_w = np.zeros(0)
        for it in range(1, self.max_iter + 1):
            grad = q.H @ x + q.f
            p, lam_w = self._eqp(L, q.A[W], grad)
            if np.linalg.norm(p, np.inf) <= 1e-10 * max(1.0, np.linalg.norm(x, np.inf)):
                if len(W) == 0 or lam_w.min() >= -self.dual_tol:
                    lam = np.zeros(m)
                    lam[W] = np.maximum(lam_w, 0.0)
                    return QPResult(x, QPStatus.OPTIMAL, kkt_residual(q, x, lam), lam, sorted(W), it)
                # drop the most negative multiplier; smallest index among ties
                worst = lam_w.min()
                drop = min(W[j] for j in np.flatnonzero(lam_w <= worst + 1e-14))
                W.remove(drop)
                continue
            # ratio test over constraints outside W
            alpha, block = 1.0, None
            if m:
                Ap = q.A @ p
                mask = np.ones(m, dtype=bool)
                mask[W] = False
                # rows in the span of the working set have A p = 0 up to roundoff;
                # at degenerate vertices they must not enter the ratio test
                idx = np.flatnonzero(mask & (Ap > 1e-11 * np.linalg.norm(q.A, axis=1) * np.linalg.norm(p)))
                if len(idx):
                    steps = (q.b[idx] - q.A[idx] @ x) / Ap[idx]
                    steps = np.maximum(steps, 0.0)
                    smin = steps.min()
                    if smin < 1.0:
                        alpha = smin
                        tied = idx[np.flatnonzero(steps <= smin + 1e-15)]
                        block = self._independent_row(q.A, W, tied)
            x = x + alpha * p
            if block is not None:
                W.append(block)
        lam = np.zeros(m)
        if len(W):
            lam[W] = np.maximum(lam_w, 0.0) if len(lam_w) == len(W) else 0.0
        return QPResult(x, QPStatus.MAX_ITERATIONS, kkt_residual(q, x, lam), lam, sorted(W), self.max_iter)

    @staticmethod
    def _independent_row(A: np.ndarray, W: list[int], candidates) -> int | None:
        """Smallest candidate index whose row is independent of the rows in ``W``."""
        if len(W) == 0:
            return int(min(candidates))
        Q, _ = np.linalg.qr(A[W].T)
        for i in sorted(int(c) for c in candidates):
            a = A[i]
            if np.linalg.norm(a - Q @ (Q.T @ a)) > 1e-9 * np.linalg.norm(a):
                return i
        return None

    @staticmethod
    def _eqp(L, Aw: np.ndarray, grad: np.ndarray):
        """Step ``p`` and multipliers for ``min 0.5 p'Hp + grad'p, Aw p = 0``."""
        Hg = cho_solve(L, grad)
        if len(Aw) == 0:
            return -Hg, np.zeros(0)
        HA = cho_solve(L, Aw.T)
        S = Aw @ HA
        lam = np.linalg.solve(S, -Aw @ Hg)
        p = -Hg - HA @ lam
        return p, lam


def solve_qp(H, f, A=None, b=None, warm_start=None, raise_on_failure: bool = True) -> QPResult:
    """One-shot convenience wrapper around :class:`ActiveSetQP`."""
    q = QProblem(H, f, A, b)
    try:
        res = ActiveSetQP().solve(q, warm_start=warm_start)
    except QPInfeasible:
        if raise_on_failure:
            raise
        return QPResult(np.full(q.n, np.nan), QPStatus.INFEASIBLE, np.inf, np.zeros(len(q.b)))
    if res.status is QPStatus.MAX_ITERATIONS and raise_on_failure:
        raise QPMaxIterations(f"no convergence in {res.iterations} iterations")
    return res
