"""Convex polytopes in R^3 with consistent vertex and half-space descriptions.

Facets are found with Qhull (``scipy.spatial.ConvexHull``), whose output is
triangulated. Triangles lying on a common plane are merged into one
facet, and the vertex list is rebuilt from the merged facets so that points
on edges or in facet interiors are dropped.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from flatcap.errors import DegenerateError

__all__ = [
    "Polytope",
    "convex_hull",
    "box",
    "volume",
    "contains",
    "monte_carlo_volume",
    "project_point",
    "HREP_HEADER",
    "VREP_HEADER",
]

MERGE_TOL = 1e-7
HREP_HEADER = ["a1", "a2", "a3", "b"]
VREP_HEADER = ["x", "y", "z"]
CSV_SCHEMA = "# flatcap-csv v1"


@dataclass(frozen=True)
class Polytope:
    """Bounded full-dimensional convex polytope.

    Attributes
    ----------
    vertices : (nv, 3) array
    A : (nf, 3) array
        Unit outward facet normals.
    b : (nf,) array
        Offsets, so that the polytope is ``{x : A x <= b}``.
    facets : tuple of int arrays
        For each row of ``A``, indices into ``vertices`` ordered
        counter-clockwise when viewed from outside.
    dim : int
        Affine dimension. A planar polygon (``dim == 2``) is only built on
        request; its H-rep is the plane as two opposite half-spaces plus
        one in-plane half-space per edge, and its volume is zero.
    """

    vertices: np.ndarray
    A: np.ndarray
    b: np.ndarray
    facets: tuple
    dim: int = 3

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_inequalities(self) -> int:
        return len(self.b)

    @property
    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(a.copy(), float(bi)) for a, bi in zip(self.A, self.b)]

    def volume(self) -> float:
        return volume(self)

    def contains(self, x, tol: float = 1e-9):
        return contains(self, x, tol)

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    # -- CSV interchange -------------------------------------------------
    def write_hrep(self, path) -> None:
        _write_rows(path, HREP_HEADER, np.column_stack([self.A, self.b]))

    def write_vrep(self, path) -> None:
        _write_rows(path, VREP_HEADER, self.vertices)

    @classmethod
    def from_vrep_csv(cls, path, merge_tol: float = MERGE_TOL, allow_degenerate: bool = False) -> "Polytope":
        return convex_hull(_read_rows(path, 3), merge_tol=merge_tol, allow_degenerate=allow_degenerate)

    @classmethod
    def from_hrep_csv(cls, path, merge_tol: float = MERGE_TOL, allow_degenerate: bool = False) -> "Polytope":
        rows = _read_rows(path, 4)
        return from_halfspaces(rows[:, :3], rows[:, 3], merge_tol=merge_tol, allow_degenerate=allow_degenerate)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.asarray(rows):
            writer.writerow([repr(float(x)) for x in row])


def _read_rows(path, width: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if not line or line[0].startswith("#"):
                continue
            try:
                rows.append([float(x) for x in line])
            except ValueError:
                continue  # header
    arr = np.array(rows, dtype=float).reshape(-1, width)
    return arr


def _scale(points: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(points))))


def _merge_planes(eq: np.ndarray, tol: float, scale: float) -> list[np.ndarray]:
    """Group rows of ``[n, -b]`` whose planes coincide within ``tol``.

    Returns a list of index arrays, one per distinct plane. Groups are
    formed in lexicographic order of the normals so the result does not
    depend on Qhull's facet ordering.
    """
    normals, offsets = eq[:, :3], -eq[:, 3]
    order = np.lexsort((offsets, normals[:, 2], normals[:, 1], normals[:, 0]))
    groups: list[list[int]] = []
    reps: list[tuple[np.ndarray, float]] = []
    for i in order:
        n, off = normals[i], offsets[i]
        for gi, (rn, roff) in enumerate(reps):
            if np.linalg.norm(n - rn) <= tol and abs(off - roff) <= tol * max(scale, abs(roff)):
                groups[gi].append(i)
                break
        else:
            groups.append([i])
            reps.append((n, off))
    return [np.array(g) for g in groups]


def _order_ccw(pts: np.ndarray, normal: np.ndarray) -> np.ndarray:
    center = pts.mean(axis=0)
    ref = pts[0] - center
    if np.linalg.norm(ref) == 0:
        ref = pts[1] - center
    e1 = ref / np.linalg.norm(ref)
    e2 = np.cross(normal, e1)
    rel = pts - center
    ang = np.arctan2(rel @ e2, rel @ e1)
    return np.argsort(ang, kind="stable")


def _planar_hull(pts: np.ndarray, basis: np.ndarray, tol: float) -> Polytope:
    """Polygon hull of points lying in a plane; ``basis`` rows are the two
    in-plane directions followed by the plane normal."""
    origin = pts.mean(axis=0)
    uv = (pts - origin) @ basis[:2].T
    try:
        hull2 = ConvexHull(uv)
    except QhullError as exc:
        raise DegenerateError("points are collinear") from exc
    ring = hull2.vertices  # counter-clockwise in (u, v)
    verts = _unique_rows(pts[ring], tol)
    normal = basis[2]
    offset = float(np.mean(verts @ normal))
    A = [normal, -normal]
    b = [offset, -offset]
    nv = len(verts)
    facets = [np.arange(nv), np.arange(nv)[::-1]]
    for i in range(nv):
        j = (i + 1) % nv
        edge = verts[j] - verts[i]
        out = np.cross(edge, normal)
        out /= np.linalg.norm(out)
        if np.dot(out, verts.mean(axis=0) - verts[i]) > 0:
            out = -out
        A.append(out)
        b.append(float(np.dot(out, verts[i])))
        facets.append(np.array([i, j]))
    return Polytope(vertices=verts, A=np.array(A), b=np.array(b), facets=tuple(facets), dim=2)


def convex_hull(points, merge_tol: float = MERGE_TOL, allow_degenerate: bool = False) -> Polytope:
    """Convex hull with irredundant facets and only extreme vertices.

    Parameters
    ----------
    points : (n, 3) array_like
    merge_tol : float
        Two Qhull facets are the same face when their unit normals differ
        by at most ``merge_tol`` and their offsets by at most ``merge_tol``
        relative to the coordinate scale.
    allow_degenerate : bool
        Return a flagged planar polygon (``dim == 2``) for coplanar input
        instead of raising.

    Raises
    ------
    DegenerateError
        Fewer than four affinely independent points (or, with
        ``allow_degenerate``, fewer than three).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    scale = _scale(pts)
    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=True)
    sv = np.r_[sv, np.zeros(3 - len(sv))]
    flat = sv[-1] <= 1e-10 * max(sv[0], 1e-300)
    if flat and allow_degenerate and sv[1] > 1e-10 * max(sv[0], 1e-300):
        return _planar_hull(pts, vt, merge_tol * scale)
    if len(pts) < 4:
        raise DegenerateError("need at least 4 points")
    if flat:
        raise DegenerateError("points are affinely dependent (rank < 3)")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:  # pragma: no cover - guarded by the rank test
        raise DegenerateError(str(exc)) from exc

    groups = _merge_planes(hull.equations, merge_tol, scale)
    cand = np.unique(hull.simplices.ravel())
    cand_pts = pts[cand]

    normals = []
    offsets = []
    for grp in groups:
        n = hull.equations[grp, :3].mean(axis=0)
        n /= np.linalg.norm(n)
        normals.append(n)
        offsets.append(float(np.max(cand_pts @ n)))
    A = np.array(normals)
    b = np.array(offsets)

    # Extreme points are tight on facets whose normals span R^3.
    tight_tol = merge_tol * scale
    tight = np.abs(cand_pts @ A.T - b) <= tight_tol
    keep = []
    for i in range(len(cand)):
        rows = A[tight[i]]
        if len(rows) >= 3 and np.linalg.matrix_rank(rows, tol=1e-6) == 3:
            keep.append(i)
    verts = cand_pts[keep]
    # collapse duplicates
    verts = _unique_rows(verts, tight_tol)
    verts = verts[np.lexsort(verts.T[::-1])]

    tight = np.abs(verts @ A.T - b) <= tight_tol
    # planes left with fewer than three extreme points are slivers of
    # near-coplanar input; they carry no face of the hull
    keep_f = np.flatnonzero(tight.sum(axis=0) >= 3)
    A, b, tight = A[keep_f], b[keep_f], tight[:, keep_f]
    facets = []
    for j in range(len(b)):
        idx = np.flatnonzero(tight[:, j])
        facets.append(idx[_order_ccw(verts[idx], A[j])])
    # Recompute offsets from the final vertex set so every vertex satisfies
    # every inequality exactly in floating point.
    b = np.max(verts @ A.T, axis=0)
    return Polytope(vertices=verts, A=A, b=b, facets=tuple(facets))


def _unique_rows(pts: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for p in pts:
        if all(np.max(np.abs(q - p)) > tol for q in out):
            out.append(p)
    return np.array(out)


def from_halfspaces(A, b, merge_tol: float = MERGE_TOL, allow_degenerate: bool = False) -> Polytope:
    """Polytope from an H-representation (vertex enumeration by triple
    intersection, then hulling)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = []
    m = len(b)
    scale = max(1.0, float(np.max(np.abs(b))))
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                M = A[[i, j, k]]
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                x = np.linalg.solve(M, b[[i, j, k]])
                if np.all(A @ x <= b + 1e-9 * scale):
                    pts.append(x)
    if len(pts) < (3 if allow_degenerate else 4):
        raise DegenerateError("half-spaces do not bound a full-dimensional polytope")
    return convex_hull(np.array(pts), merge_tol=merge_tol, allow_degenerate=allow_degenerate)


def box(half_widths, center=(0.0, 0.0, 0.0)) -> Polytope:
    """Axis-aligned box ``|x_i - center_i| <= half_widths_i``."""
    w = np.asarray(half_widths, dtype=float) * np.ones(3)
    c = np.asarray(center, dtype=float)
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    return convex_hull(c + corners * w)


def volume(p: Polytope) -> float:
    """Volume by fanning every facet to the vertex centroid."""
    if p.dim < 3:
        return 0.0
    o = p.vertices.mean(axis=0)
    total = 0.0
    for idx in p.facets:
        f = p.vertices[idx] - o
        for t in range(1, len(idx) - 1):
            total += np.dot(f[0], np.cross(f[t], f[t + 1]))
    return abs(total) / 6.0


def contains(p: Polytope, x, tol: float = 1e-9):
    """``A x <= b + tol`` row-wise; broadcasts over ``(..., 3)``."""
    x = np.asarray(x, dtype=float)
    return np.all(x @ p.A.T <= p.b + tol, axis=-1)


def monte_carlo_volume(p: Polytope, n: int = 1_000_000, rng=None) -> tuple[float, float]:
    """Rejection-sampling volume estimate and its standard error."""
    rng = np.random.default_rng(rng)
    lo, hi = p.vertices.min(axis=0), p.vertices.max(axis=0)
    box_vol = float(np.prod(hi - lo))
    hits = 0
    done = 0
    chunk = 200_000
    while done < n:
        m = min(chunk, n - done)
        x = lo + (hi - lo) * rng.random((m, 3))
        hits += int(np.count_nonzero(contains(p, x, 0.0)))
        done += m
    frac = hits / n
    return box_vol * frac, box_vol * np.sqrt(frac * (1 - frac) / n)


def project_point(p: Polytope, x) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``p``."""
    from flatcap.qpsolver import solve_qp

    x = np.asarray(x, dtype=float)
    res = solve_qp(np.eye(3), -x, p.A, p.b)
    return res.x
