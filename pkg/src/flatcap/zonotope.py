"""Scaled zonotopes ``Z(G diag(delta), c)`` in R^3."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from flatcap.errors import SizeError

__all__ = [
    "DEFAULT_GENERATORS",
    "Zonotope",
    "sign_patterns",
    "subset_measures",
    "measure_objective",
    "measure_gradient",
    "vertex_candidates",
    "volume_objective",
    "contains_point",
]

DEFAULT_GENERATORS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, -1.0],
        [0.0, 0.0, 1.0, 2.0, 2.0],
    ]
)

MAX_GENERATORS = 20


@dataclass
class Zonotope:
    """``{c + sum_i beta_i delta_i g_i : |beta_i| <= 1}``.

    ``G`` is ``3 x n_g`` with generators as columns. ``delta`` defaults to
    all ones.
    """

    G: np.ndarray
    c: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delta: np.ndarray | None = None

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if self.G.shape[0] != 3:
            raise ValueError(f"G must have 3 rows, got shape {self.G.shape}")
        self.c = np.asarray(self.c, dtype=float).reshape(3)
        if self.delta is None:
            self.delta = np.ones(self.n_generators)
        self.delta = np.asarray(self.delta, dtype=float).reshape(self.n_generators)
        if np.any(self.delta < 0):
            raise ValueError("scaling factors must be non-negative")

    @property
    def n_generators(self) -> int:
        return self.G.shape[1]

    @property
    def scaled_generators(self) -> np.ndarray:
        return self.G * self.delta

    @property
    def full_rank(self) -> bool:
        return np.linalg.matrix_rank(self.scaled_generators) == 3

    def volume(self) -> float:
        """Euclidean volume, ``8 * volume_objective``."""
        return 8.0 * volume_objective(self)

    def to_dict(self) -> dict:
        return {"G": self.G.tolist(), "c": self.c.tolist(), "delta": self.delta.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Zonotope":
        return cls(np.array(data["G"], dtype=float), np.array(data["c"]), np.array(data["delta"]))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path) -> "Zonotope":
        return cls.from_dict(json.loads(Path(path).read_text()))


@lru_cache(maxsize=32)
def _sign_patterns(n: int) -> np.ndarray:
    pats = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    pats.setflags(write=False)
    return pats


def sign_patterns(n: int) -> np.ndarray:
    """All ``2^n`` vectors in ``{-1, +1}^n`` as rows."""
    if n > MAX_GENERATORS:
        raise SizeError(f"{n} generators exceeds the limit of {MAX_GENERATORS}")
    return _sign_patterns(n)


def subset_measures(G, order: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Index subsets of size ``order`` and their parallelotope measures.

    For ``order == 3`` the measure is ``|det G[:, S]|``; lower orders use
    the Gram determinant ``sqrt(det(G_S^T G_S))`` (area for pairs, length
    for singletons).

    Returns
    -------
    subsets : (m, order) int array
    weights : (m,) float array
    """
    G = np.asarray(G, dtype=float)
    subsets = np.array(list(itertools.combinations(range(G.shape[1]), order)), dtype=int)
    if order == 3:
        weights = np.abs(np.linalg.det(G[:, subsets].transpose(1, 0, 2)))
    else:
        cols = G[:, subsets].transpose(1, 0, 2)
        gram = np.einsum("kdi,kdj->kij", cols, cols)
        weights = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    return subsets, weights


def measure_objective(delta, subsets, weights) -> float:
    """``sum_S w_S prod_{k in S} delta_k``."""
    delta = np.asarray(delta, dtype=float)
    return float(weights @ np.prod(delta[subsets], axis=1))


def measure_gradient(delta, subsets, weights) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    grad = np.zeros_like(delta)
    order = subsets.shape[1]
    for pos in range(order):
        others = np.delete(subsets, pos, axis=1)
        np.add.at(grad, subsets[:, pos], weights * np.prod(delta[others], axis=1))
    return grad


def vertex_candidates(z: Zonotope) -> np.ndarray:
    """The ``2^{n_g}`` points ``c + sum_i alpha_i delta_i g_i``, ``alpha in {-1,1}^{n_g}``.

    Every vertex of the zonotope is among them, so their convex hull is the
    zonotope itself. Rows follow ``itertools.product`` order, which makes
    row ``j`` and row ``2^{n_g} - 1 - j`` mirror images about ``c``.
    """
    alphas = sign_patterns(z.n_generators)
    return z.c + (alphas * z.delta) @ z.G.T


def volume_objective(z: Zonotope) -> float:
    """Sum over generator triples of ``|det| * delta_a delta_b delta_c``.

    This is the volume of the zonotope divided by ``2^3``: the triple
    formula measures the parallelotopes spanned by ``delta_i g_i`` while the
    ``|beta| <= 1`` parameterization spans ``2 delta_i g_i``.
    """
    subsets, weights = subset_measures(z.G, 3)
    return measure_objective(z.delta, subsets, weights)


def contains_point(z: Zonotope, x, tol: float = 1e-9) -> bool:
    """Whether ``x = c + G diag(delta) beta`` has a solution with ``|beta|_inf <= 1``.

    Solved as a small LP minimizing ``|beta|_inf``.
    """
    x = np.asarray(x, dtype=float).reshape(3)
    Gs = z.scaled_generators
    n = Gs.shape[1]
    # variables: beta (n), s (1); minimize s s.t. -s <= beta_i <= s, Gs beta = x - c
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    eye = np.eye(n)
    A_ub = np.block([[eye, -np.ones((n, 1))], [-eye, -np.ones((n, 1))]])
    b_ub = np.zeros(2 * n)
    A_eq = np.hstack([Gs, np.zeros((3, 1))])
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=x - z.c,
        bounds=[(None, None)] * n + [(0, None)],
        method="highs",
    )
    if res.status != 0:
        return False
    return bool(res.x[-1] <= 1.0 + tol)
