"""Polytopic inner approximation of the flat input set ``V~``.

For each anchor ``v_int`` of a vertical schedule, the largest zonotope
``Z(G diag(delta), c)`` is sought that stays inside ``V~`` while still
containing the anchor. The union of the resulting zonotopes is hulled into
``S_v``.

Solving one scaling problem
---------------------------
Decision variables are ``delta`` (scaling), ``c`` (center) and ``gamma``.
The anchor condition ``v_int = c + G diag(delta) beta, |beta| <= 1``
becomes linear after substituting ``gamma = diag(delta) beta``:
``c + G gamma = v_int, |gamma| <= delta``. Each of the ``2^{n_g}`` vertex
candidates is affine in ``(delta, c)`` and must lie in a ball and a
second-order cone, so the feasible set is convex. Only the multilinear
volume objective is non-convex. It is maximized by sequential convex
programming: linearize the (normalized) objective, solve the
trust-region-limited SOCP exactly, accept or shrink depending on the
actual-to-predicted improvement ratio. Because constraints are never
linearized, every accepted iterate is feasible.

Anchors on the boundary of ``V~``
---------------------------------
The two ends of the schedule sit on ``dV~`` (apex of the cone and top of the
ball). There, no zonotope built from a generic generator set can have
positive volume, so the volume objective is identically zero on the
feasible set. For such anchors the solver maximizes the measure of the
highest dimension that is still attainable (area for flat zonotopes,
length for segments), computed from the same subset formula with Gram
determinants. The attainable dimension is the rank of the generators that
can individually take a positive scale.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from flatcap.errors import InfeasibleStart, ToleranceError
from flatcap.flatmap import DEFAULT_LIMITS, ConstraintParams, vtilde_residuals
from flatcap.geomhull import MERGE_TOL, Polytope, box, convex_hull
from flatcap.zonotope import (
    DEFAULT_GENERATORS,
    Zonotope,
    contains_point,
    measure_gradient,
    measure_objective,
    sign_patterns,
    subset_measures,
    vertex_candidates,
)

log = logging.getLogger(__name__)

__all__ = [
    "ApproxConfig",
    "ZonotopeFit",
    "ApproxResult",
    "interior_schedule",
    "fit_zonotope",
    "maximize_zonotope",
    "algorithm1",
    "build_Pv",
    "build_Bv",
    "pv_half_width",
    "bv_half_widths",
    "inflation_margins",
    "refine_for_hull",
]


@dataclass
class ApproxConfig:
    """Settings for the inner approximation.

    ``feas_tol`` is the accepted constraint residual of intermediate SOCP
    solutions; ``residual_tol`` is the hard limit at exit. ``stall_tol`` ends
    the SCP loop once the predicted relative gain falls below it.
    """

    G: np.ndarray = field(default_factory=lambda: DEFAULT_GENERATORS.copy())
    n0: int = 2
    feas_tol: float = 1e-8
    stall_tol: float = 1e-8
    residual_tol: float = 1e-6
    max_iter: int = 300
    n_starts: int = 5
    start_sigma: float = 0.05  # fraction of T_max
    seed: int = 0
    merge_tol: float = MERGE_TOL

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        if self.n0 < 0:
            raise ValueError("n0 must be non-negative")
        if np.linalg.matrix_rank(self.G) < 3:
            raise ValueError("G must have full row rank")


@dataclass
class ZonotopeFit:
    zonotope: Zonotope
    anchor: np.ndarray
    objective: float
    order: int  # dimension of the measure that was maximized
    iterations: int
    max_residual: float
    history: list = field(default_factory=list)
    # other local optima from the multi-start (feasible, anchor not checked)
    alternatives: list = field(default_factory=list)

    @property
    def euclidean_measure(self) -> float:
        """Volume (order 3), area (2) or length (1) of the zonotope."""
        return float(2**self.order * self.objective)

    def summary(self) -> dict:
        return {
            "anchor": self.anchor.tolist(),
            "delta": self.zonotope.delta.tolist(),
            "center": self.zonotope.c.tolist(),
            "order": self.order,
            "objective": self.objective,
            "euclidean_measure": self.euclidean_measure,
            "iterations": self.iterations,
            "max_residual": self.max_residual,
        }


@dataclass
class ApproxResult:
    fits: list
    polytope: Polytope
    volume: float
    contraction: float
    params: ConstraintParams
    config: ApproxConfig

    @property
    def zonotopes(self) -> list:
        return [f.zonotope for f in self.fits]

    @property
    def n_vertices(self) -> int:
        return self.polytope.n_vertices

    @property
    def n_inequalities(self) -> int:
        return self.polytope.n_inequalities

    def summary(self) -> dict:
        return {
            "n0": self.config.n0,
            "volume": self.volume,
            "n_vertices": self.n_vertices,
            "n_inequalities": self.n_inequalities,
            "dim": self.polytope.dim,
            "contraction": self.contraction,
            "merge_tol": self.config.merge_tol,
            "per_k": [f.summary() for f in self.fits],
        }


def interior_schedule(p: ConstraintParams = DEFAULT_LIMITS, n0: int = 2) -> list[np.ndarray]:
    """Anchors ``(0, 0, (1 - k/n0) T_max - g)`` for ``k = 0..n0``."""
    if n0 < 0:
        raise ValueError("n0 must be non-negative")
    if n0 == 0:
        return [np.array([0.0, 0.0, p.t_max - p.g])]
    return [np.array([0.0, 0.0, (1 - k / n0) * p.t_max - p.g]) for k in range(n0 + 1)]


class _ScalingSOCP:
    """Trust-region subproblem, compiled once per (G, params, options)."""

    def __init__(self, G, p: ConstraintParams, equal_scaling=False, center=None):
        ng = G.shape[1]
        alphas = sign_patterns(ng)
        self.d = cp.Variable(ng)
        self.c = cp.Variable(3)
        gam = cp.Variable(ng)
        self.vint = cp.Parameter(3)
        self.w = cp.Parameter(ng)
        self.wc = cp.Parameter(3)
        self.d0 = cp.Parameter(ng)
        self.c0 = cp.Parameter(3)
        self.rho = cp.Parameter(nonneg=True)
        # per-generator cap; zero pins a generator out of the zonotope
        self.dcap = cp.Parameter(ng, nonneg=True)
        self.dcap.value = np.full(ng, 4.0 * p.t_max)

        x = (alphas * G[0]) @ self.d + self.c[0]
        y = (alphas * G[1]) @ self.d + self.c[1]
        z = (alphas * G[2]) @ self.d + self.c[2] + p.g
        n = len(alphas)
        cons = [
            self.d >= 0,
            self.d <= self.dcap,
            gam <= self.d,
            -gam <= self.d,
            self.c + G @ gam == self.vint,
            cp.abs(self.d - self.d0) <= self.rho,
            cp.abs(self.c - self.c0) <= self.rho,
            z >= 0,
            cp.SOC(p.tan_eps * z, cp.vstack([x, y]).T, axis=1),
            cp.SOC(np.full(n, p.t_max), cp.vstack([x, y, z]).T, axis=1),
        ]
        if equal_scaling:
            cons.append(self.d == self.d[0])
        if center is not None:
            cons.append(self.c == np.asarray(center, dtype=float))
        self.problem = cp.Problem(cp.Maximize(self.w @ self.d + self.wc @ self.c), cons)

    def solve(self, vint, w, d0, c0, rho, wc=None):
        self.wc.value = np.zeros(3) if wc is None else np.asarray(wc, dtype=float)
        self.vint.value = np.asarray(vint, dtype=float)
        self.w.value = np.asarray(w, dtype=float)
        self.d0.value = np.asarray(d0, dtype=float)
        self.c0.value = np.asarray(c0, dtype=float)
        self.rho.value = float(rho)
        # Inaccurate solutions are passed on; callers check feasibility
        # themselves against the exact constraints.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            try:
                self.problem.solve(solver=cp.CLARABEL)
            except cp.error.SolverError:
                return None
        if self.problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or self.d.value is None:
            return None
        d = np.clip(self.d.value, 0.0, self.dcap.value)
        return d, np.asarray(self.c.value, dtype=float)


@lru_cache(maxsize=16)
def _cached_socp(g_bytes, shape, p, equal_scaling, center):
    G = np.frombuffer(g_bytes).reshape(shape)
    return _ScalingSOCP(G, p, equal_scaling=equal_scaling, center=center)


def _socp_for(G, p, equal_scaling=False, center=None) -> _ScalingSOCP:
    """Compiled subproblem, shared across anchors (the anchor is a parameter)."""
    key_c = None if center is None else tuple(float(x) for x in np.ravel(center))
    G = np.ascontiguousarray(G, dtype=float)
    sub = _cached_socp(G.tobytes(), G.shape, p, equal_scaling, key_c)
    sub.dcap.value = np.full(G.shape[1], 4.0 * p.t_max)
    return sub


def _max_residual(G, delta, c, p) -> float:
    z = Zonotope(G, c, np.maximum(delta, 0.0))
    return float(np.max(vtilde_residuals(vertex_candidates(z), p)))


def _anchor_reach(G, delta, c, vint) -> float:
    """Smallest ``max_i |beta_i|`` with ``c + G diag(delta) beta = vint``
    (``inf`` when unreachable)."""
    z = Zonotope(G, c, delta)
    Gs = z.scaled_generators
    n = Gs.shape[1]
    cost = np.r_[np.zeros(n), 1.0]
    eye = np.eye(n)
    res = linprog(
        cost,
        A_ub=np.block([[eye, -np.ones((n, 1))], [-eye, -np.ones((n, 1))]]),
        b_ub=np.zeros(2 * n),
        A_eq=np.hstack([Gs, np.zeros((3, 1))]),
        b_eq=np.asarray(vint) - c,
        bounds=[(None, None)] * n + [(0, None)],
        method="highs",
    )
    return float(res.x[-1]) if res.status == 0 else np.inf


def _uniform_scale(G, c, p, hi=None, iters=60) -> float:
    """Largest ``t`` with all vertices of ``Z(G t, c)`` inside ``V~``."""
    if _max_residual(G, np.zeros(G.shape[1]), c, p) > 0:
        return 0.0
    lo = 0.0
    hi = 2.0 * p.t_max if hi is None else hi
    ones = np.ones(G.shape[1])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _max_residual(G, mid * ones, c, p) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


def _starts(G, vint, p, cfg: ApproxConfig, rng) -> list[tuple[np.ndarray, np.ndarray]]:
    ng = G.shape[1]
    out = []
    # scales below this are round-off on a boundary anchor, not room
    floor = 1e-6 * p.t_max
    t = _uniform_scale(G, vint, p)
    if t > floor:
        out.append((np.full(ng, t), vint.copy()))
    for _ in range(cfg.n_starts):
        c = vint + rng.normal(0.0, cfg.start_sigma * p.t_max, 3)
        for _ in range(30):
            t = _uniform_scale(G, c, p)
            if t > floor and _anchor_reach(G, np.full(ng, t), c, vint) <= 1.0:
                out.append((np.full(ng, t), c))
                break
            c = 0.5 * (c + vint)
    return out


def _scp(sub: _ScalingSOCP, G, vint, p, d, c, order, cfg: ApproxConfig):
    subsets, weights = subset_measures(G, order)
    f = measure_objective(d, subsets, weights)
    rho = max(0.5, float(np.max(d)))
    history = [f]
    it = 0
    for it in range(1, cfg.max_iter + 1):
        grad = measure_gradient(d, subsets, weights) / max(f, 1e-300)
        sol = sub.solve(vint, grad, d, c, rho)
        if sol is None:
            rho *= 0.25
            if rho < 1e-10:
                break
            continue
        dn, cn = sol
        pred = float(grad @ (dn - d))
        if pred <= cfg.stall_tol:
            break
        fn = measure_objective(dn, subsets, weights)
        ratio = ((fn - f) / max(f, 1e-300)) / pred
        if ratio >= 0.1 and _max_residual(G, dn, cn, p) <= cfg.feas_tol:
            d, c, f = dn, cn, fn
            history.append(f)
            if ratio > 0.75:
                rho = min(2.0 * rho, 4.0 * p.t_max)
        else:
            rho *= 0.25
            if rho < 1e-10:
                break
    return d, c, f, it, history


def _probe(sub: _ScalingSOCP, vint, i, p):
    """Maximize ``delta_i`` alone; retried with tighter trust regions when
    the conic solver stalls (anchors on the boundary of ``V~`` make the
    problem lack a strictly feasible point)."""
    ng = sub.d.shape[0]
    w = np.zeros(ng)
    w[i] = 1.0
    for rho in (4.0 * p.t_max, p.t_max, 0.25 * p.t_max):
        sol = sub.solve(vint, w, np.zeros(ng), vint, rho)
        if sol is not None:
            return sol
    return None


def _pull_inside(G, d, c, vint, p, tol):
    """Shrink ``(d, c)`` toward the point zonotope at the anchor until the
    residual is at most ``tol``. Both ends are feasible, so this only
    removes solver round-off."""
    lam = 1.0
    while _max_residual(G, lam * d, lam * c + (1 - lam) * vint, p) > tol and lam > 1e-6:
        lam *= 0.5
    return lam * d, lam * c + (1 - lam) * vint


def _degenerate_starts(sub: _ScalingSOCP, G, vint, p, cfg: ApproxConfig):
    """Starts for anchors where no full-dimensional zonotope fits.

    A generator is admissible when it can take a non-negligible scale on its
    own. The others are pinned to zero and the admissible ones are probed
    again. The starts are the probe solutions, their pairwise midpoints and
    their mean, all feasible by convexity.

    Returns
    -------
    starts : list of (delta, c)
    rank : int
        Rank of the admissible generators (dimension of the best zonotope).
    """
    ng = G.shape[1]
    reach = np.zeros(ng)
    for i in range(ng):
        sol = _probe(sub, vint, i, p)
        reach[i] = 0.0 if sol is None else sol[0][i]
    admissible = reach > 1e-3 * p.t_max
    if not admissible.any():
        return [(np.zeros(ng), vint.copy())], 0
    sub.dcap.value = np.where(admissible, 4.0 * p.t_max, 0.0)
    sols = [s for s in (_probe(sub, vint, i, p) for i in np.flatnonzero(admissible)) if s is not None]
    cands = list(sols)
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            cands.append(((sols[i][0] + sols[j][0]) / 2, (sols[i][1] + sols[j][1]) / 2))
    if len(sols) > 2:
        cands.append((np.mean([s[0] for s in sols], axis=0), np.mean([s[1] for s in sols], axis=0)))
    starts = [_pull_inside(G, np.where(admissible, d, 0.0), c, vint, p, cfg.feas_tol) for d, c in cands]
    rank = int(np.linalg.matrix_rank(G[:, admissible]))
    return starts, rank


def fit_zonotope(
    vint,
    p: ConstraintParams = DEFAULT_LIMITS,
    cfg: ApproxConfig | None = None,
    G=None,
    allow_degenerate: bool = False,
    equal_scaling: bool = False,
    center=None,
    k: int = 0,
) -> ZonotopeFit:
    """Solve the scaling problem for one anchor and return the full record.

    Parameters
    ----------
    vint : array_like, shape (3,)
        Anchor that the zonotope must contain.
    G : array_like, optional
        Generator matrix; defaults to ``cfg.G``.
    allow_degenerate : bool
        If no full-dimensional zonotope can contain ``vint``, maximize the
        highest attainable lower-dimensional measure instead of raising.
    equal_scaling, center
        Extra restrictions (all ``delta_i`` equal; fixed center).
    k : int
        Index used to seed the random restarts.
    """
    cfg = cfg or ApproxConfig()
    G = cfg.G if G is None else np.asarray(G, dtype=float)
    vint = np.asarray(vint, dtype=float).reshape(3)
    if np.max(vtilde_residuals(vint, p)) > cfg.residual_tol:
        raise InfeasibleStart(f"anchor {vint} lies outside V~")
    sub = _socp_for(G, p, equal_scaling, center)
    rng = np.random.default_rng([cfg.seed, k])

    if equal_scaling or center is not None:
        c0 = vint if center is None else np.asarray(center, dtype=float)
        t = _uniform_scale(G, c0, p)
        starts = [(np.full(G.shape[1], t), c0.copy())] if t > 1e-6 * p.t_max else []
    else:
        starts = _starts(G, vint, p, cfg, rng)
    order = 3
    if not starts:
        starts, rank = _degenerate_starts(sub, G, vint, p, cfg)
        if rank < 3 and not allow_degenerate:
            raise InfeasibleStart(
                f"no full-dimensional zonotope contains the anchor {vint} (attainable rank {rank})"
            )
        order = rank

    results = []
    for d0, c0 in starts:
        if order == 0:
            results.append((np.zeros_like(d0), vint.copy(), 0.0, 0, [0.0]))
        else:
            results.append(_scp(sub, G, vint, p, d0, c0, order, cfg))
    # stable choice: the first start wins unless beaten by a relative 1e-9
    best = results[0]
    for r in results[1:]:
        if r[2] > best[2] * (1 + 1e-9):
            best = r
    d, c, f, it, hist = best
    alternatives = [Zonotope(G, r[1], r[0]) for r in results if r is not best]
    z = Zonotope(G, c, d)
    resid = _max_residual(G, d, c, p)
    if resid > cfg.residual_tol:
        raise ToleranceError(f"feasibility residual {resid:.3e} exceeds {cfg.residual_tol:.1e}")
    if not contains_point(z, vint, tol=1e-6):
        raise ToleranceError("anchor is not contained in the fitted zonotope")
    log.debug("anchor %s: order %d, objective %.6g after %d iterations", vint, order, f, it)
    return ZonotopeFit(z, vint, f, order, it, resid, hist, alternatives)


def maximize_zonotope(G, vint, p: ConstraintParams = DEFAULT_LIMITS, cfg: ApproxConfig | None = None, **kwargs) -> Zonotope:
    """Largest zonotope ``Z(G diag(delta), c)`` inside ``V~`` containing ``vint``.

    Raises
    ------
    InfeasibleStart
        No full-dimensional feasible zonotope exists (unless
        ``allow_degenerate=True`` is passed).
    ToleranceError
        The solution violates ``V~`` by more than ``cfg.residual_tol``.
    """
    return fit_zonotope(vint, p, cfg, G=G, **kwargs).zonotope


def _hull_volume(points) -> float:
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return 0.0


def refine_for_hull(fit: ZonotopeFit, context, p: ConstraintParams = DEFAULT_LIMITS, cfg: ApproxConfig | None = None) -> ZonotopeFit:
    """Re-place a lower-dimensional fit so the hull with ``context`` grows.

    At an anchor where no full-dimensional zonotope fits, every feasible
    zonotope has zero volume and so solves the scaling problem equally
    well. Among them, this picks a local maximizer of the volume of
    ``Conv(context, Z)``, the quantity the approximation is judged by. The
    search reuses the trust-region SOCP with a finite-difference gradient of
    the hull volume; generators at zero stay pinned so the zonotope keeps
    its dimension.
    """
    cfg = cfg or ApproxConfig()
    if fit.order == 3 or fit.order == 0:
        return fit
    z = fit.zonotope
    G, vint = z.G, fit.anchor
    ng = G.shape[1]
    sub = _socp_for(G, p)
    sub.dcap.value = np.where(z.delta > 0, 4.0 * p.t_max, 0.0)
    context = np.asarray(context, dtype=float).reshape(-1, 3)

    def objective(d, c):
        return _hull_volume(np.vstack([context, vertex_candidates(Zonotope(G, c, d))]))

    d, c = z.delta.copy(), z.c.copy()
    f = objective(d, c)
    f_start = f
    rho = 0.5
    h = 1e-6 * p.t_max
    it = 0
    for it in range(1, cfg.max_iter + 1):
        x = np.r_[d, c]
        grad = np.zeros(ng + 3)
        for j in range(ng + 3):
            if j < ng and sub.dcap.value[j] == 0:
                continue
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] = max(xm[j] - h, 0.0) if j < ng else xm[j] - h
            grad[j] = (objective(xp[:ng], xp[ng:]) - objective(xm[:ng], xm[ng:])) / (xp[j] - xm[j])
        grad /= max(f, 1e-300)
        sol = sub.solve(vint, grad[:ng], d, c, rho, wc=grad[ng:])
        if sol is None:
            rho *= 0.25
            if rho < 1e-8:
                break
            continue
        dn, cn = sol
        pred = float(grad[:ng] @ (dn - d) + grad[ng:] @ (cn - c))
        if pred <= cfg.stall_tol:
            break
        fn = objective(dn, cn)
        ratio = ((fn - f) / f) / pred
        if ratio >= 0.1 and _max_residual(G, dn, cn, p) <= cfg.feas_tol:
            d, c, f = dn, cn, fn
            if ratio > 0.75:
                rho = min(2.0 * rho, p.t_max)
        else:
            rho *= 0.25
            if rho < 1e-8:
                break
    zn = Zonotope(G, c, d)
    if f <= f_start or not contains_point(zn, vint, tol=1e-6):
        return fit
    subsets, weights = subset_measures(G, fit.order)
    log.debug("hull refinement at %s: %.6g -> %.6g in %d iterations", vint, f_start, f, it)
    return ZonotopeFit(
        zn, vint, measure_objective(d, subsets, weights), fit.order,
        fit.iterations + it, _max_residual(G, d, c, p), fit.history,
    )


def _contract_into(points: np.ndarray, p: ConstraintParams) -> tuple[np.ndarray, float]:
    """Scale points toward the origin (an interior point of ``V~``) by the
    smallest factor that puts each one strictly inside ``V~``."""
    for s in (1.0, 1 - 1e-10, 1 - 1e-9, 1 - 1e-8, 1 - 1e-7, 1 - 1e-6):
        if np.max(vtilde_residuals(s * points, p)) < -1e-12:
            return s * points, s
    raise ToleranceError("approximation vertices could not be pulled strictly inside V~")


def algorithm1(cfg: ApproxConfig | None = None, p: ConstraintParams = DEFAULT_LIMITS) -> ApproxResult:
    """Fit one zonotope per anchor of the schedule and hull their union.

    Anchors that sit on the boundary of ``V~`` are fitted with the
    lower-dimensional fallback (see module docstring). The hull vertices are
    finally scaled toward the origin by at most ``1e-6`` relative, just
    enough to put them strictly inside ``V~`` (solver round-off otherwise
    leaves vertices up to ~1e-8 outside).
    """
    cfg = cfg or ApproxConfig()
    fits = []
    for k, vint in enumerate(interior_schedule(p, cfg.n0)):
        fits.append(fit_zonotope(vint, p, cfg, allow_degenerate=True, k=k))
    for k, fit in enumerate(fits):
        others = [vertex_candidates(f.zonotope) for j, f in enumerate(fits) if j != k]
        if 0 < fit.order < 3 and others:
            fits[k] = refine_for_hull(fit, np.vstack(others), p, cfg)
    points = np.vstack([vertex_candidates(f.zonotope) for f in fits])
    if np.max(vtilde_residuals(points, p)) > cfg.residual_tol:
        raise ToleranceError("vertex candidates leave V~")
    points, s = _contract_into(points, p)
    poly = convex_hull(points, merge_tol=cfg.merge_tol, allow_degenerate=True)
    if poly.dim < 3:
        log.warning("approximation with n0=%d is flat (every anchor lies on the boundary of V~)", cfg.n0)
    return ApproxResult(fits, poly, poly.volume(), s, p, cfg)


# -- literature baselines --------------------------------------------------


def pv_half_width(p: ConstraintParams = DEFAULT_LIMITS) -> float:
    """Half-width of the largest origin-centred cube inside ``V~``.

    The binding corners are ``(+-a, +-a, -a)`` on the cone,
    ``sqrt(2) a = (g - a) tan(eps)``, unless the ball is hit first at
    ``(+-a, +-a, a)``.
    """
    te = p.tan_eps
    a_cone = p.g * te / (np.sqrt(2.0) + te)
    # 3 a^2 + 2 g a + g^2 - T^2 = 0
    a_ball = (-2 * p.g + np.sqrt(4 * p.g**2 - 12 * (p.g**2 - p.t_max**2))) / 6
    return float(min(a_cone, a_ball))


def bv_half_widths(p: ConstraintParams = DEFAULT_LIMITS) -> np.ndarray:
    """Half-widths ``(w, w, w3)`` of the largest origin-centred box with equal
    lateral sides.

    With the cone binding at the lower corners, ``w = (g - w3) tan(eps)/sqrt(2)``
    and ``(g - w3)^2 w3`` peaks at ``w3 = g/3``. When the upper corners then
    break the ball, the ball-limited optimum is found numerically.
    """
    te = p.tan_eps
    w3 = p.g / 3
    w = (p.g - w3) * te / np.sqrt(2.0)
    if 2 * w**2 + (w3 + p.g) ** 2 <= p.t_max**2:
        return np.array([w, w, w3])
    # ball active: maximize w^2 w3 over w3 with w = min(cone, ball) limits
    grid = np.linspace(0, p.g, 20001)[1:-1]
    wc = (p.g - grid) * te / np.sqrt(2.0)
    wb = np.sqrt(np.clip(p.t_max**2 - (grid + p.g) ** 2, 0, None) / 2)
    ww = np.minimum(wc, wb)
    j = int(np.argmax(ww**2 * grid))
    return np.array([ww[j], ww[j], grid[j]])


def build_Pv(p: ConstraintParams = DEFAULT_LIMITS) -> Polytope:
    """Origin-centred cube inner approximation of ``V~``."""
    return box(pv_half_width(p))


def build_Bv(p: ConstraintParams = DEFAULT_LIMITS) -> Polytope:
    """Origin-centred box inner approximation of ``V~`` with equal lateral sides."""
    return box(bv_half_widths(p))


def inflation_margins(z: Zonotope, p: ConstraintParams = DEFAULT_LIMITS, rel: float = 1e-3, tol: float = 1e-9) -> np.ndarray:
    """For each generator, whether scaling its ``delta_i`` by ``1 + rel`` (center
    fixed) keeps every vertex candidate inside ``V~``. Returns a boolean array;
    ``True`` means the coordinate still had room."""
    out = np.zeros(z.n_generators, dtype=bool)
    for i in range(z.n_generators):
        d = z.delta.copy()
        d[i] *= 1 + rel
        if d[i] == 0:
            continue
        out[i] = _max_residual(z.G, d, z.c, p) <= tol
    return out
