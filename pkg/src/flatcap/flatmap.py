"""Flat coordinate change for the quadcopter translational dynamics.

Coordinates
-----------
``u = (T, phi, theta)``
    Normalized thrust [m/s^2], roll [rad], pitch [rad].
``v = (v1, v2, v3)``
    Commanded acceleration of the flat output (position) [m/s^2].
``xi = (sigma, sigma_dot)``
    Flat state, position then velocity (shape ``(6,)``).

The plant acceleration is ``h_psi(u)``; the linearizing map ``phi_psi`` is
its inverse on ``v3 > -g``, so that ``sigma_ddot = v`` in closed loop.

All functions broadcast over leading axes: ``v`` and ``u`` may have shape
``(..., 3)``.

Note on the convex inner set ``V~``: its cone term is implemented as
``v1^2 + v2^2 <= (v3 + g)^2 tan^2(eps_max)``. A printed variant with
``(v3^2 + g)^2`` appears in some texts; it is not the set the containment
argument (Cauchy-Schwarz bound on roll and pitch) actually produces.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from flatcap.errors import DomainError

__all__ = [
    "ConstraintParams",
    "DEFAULT_LIMITS",
    "forward_map",
    "inverse_map",
    "inverse_map_jacobian",
    "in_U",
    "in_Vtilde",
    "in_V",
    "vtilde_residuals",
]


@dataclass(frozen=True)
class ConstraintParams:
    """Physical constants and input bounds.

    Attributes
    ----------
    g : float
        Gravitational acceleration [m/s^2].
    t_max : float
        Upper bound on the normalized thrust [m/s^2].
    phi_max, theta_max : float
        Roll and pitch bounds [rad], both in ``(0, pi/2)``.
    """

    g: float = 9.81
    t_max: float = 19.62
    phi_max: float = 0.1745
    theta_max: float = 0.1745

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be positive")
        if not self.t_max > self.g:
            raise ValueError("t_max must exceed g so that hover is interior")
        for name in ("phi_max", "theta_max"):
            val = getattr(self, name)
            if not 0 < val < np.pi / 2:
                raise ValueError(f"{name} must lie in (0, pi/2), got {val}")

    @property
    def eps_max(self) -> float:
        return min(self.phi_max, self.theta_max)

    @property
    def tan_eps(self) -> float:
        return float(np.tan(self.eps_max))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintParams":
        known = {k: float(data[k]) for k in ("g", "t_max", "phi_max", "theta_max") if k in data}
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "ConstraintParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_LIMITS = ConstraintParams()


def _unchecked(p: ConstraintParams | None) -> ConstraintParams:
    return DEFAULT_LIMITS if p is None else p


def forward_map(v, psi=0.0, p: ConstraintParams | None = None) -> np.ndarray:
    """Map a flat input ``v`` to the body input ``u = (T, phi, theta)``.

    Raises
    ------
    DomainError
        If any ``v3 <= -g`` (thrust would vanish or the pitch formula
        becomes singular).
    """
    p = _unchecked(p)
    v = np.asarray(v, dtype=float)
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    z = v3 + p.g
    if np.any(z <= 0):
        raise DomainError("forward_map requires v3 > -g")
    s, c = np.sin(psi), np.cos(psi)
    thrust = np.sqrt(v1**2 + v2**2 + z**2)
    roll = np.arcsin(np.clip((v1 * s - v2 * c) / thrust, -1.0, 1.0))
    pitch = np.arctan((v1 * c + v2 * s) / z)
    return np.stack([thrust, roll, pitch], axis=-1)


def inverse_map(u, psi=0.0, p: ConstraintParams | None = None) -> np.ndarray:
    """Plant acceleration ``h_psi(u)``; inverse of :func:`forward_map`."""
    p = _unchecked(p)
    u = np.asarray(u, dtype=float)
    thrust, roll, pitch = u[..., 0], u[..., 1], u[..., 2]
    s, c = np.sin(psi), np.cos(psi)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    a1 = thrust * (cr * sp * c + sr * s)
    a2 = thrust * (cr * sp * s - sr * c)
    a3 = thrust * cr * cp - p.g
    return np.stack([a1, a2, a3], axis=-1)


def inverse_map_jacobian(u, psi=0.0) -> np.ndarray:
    """Jacobian ``d h_psi / d u`` at a single ``u``; shape ``(3, 3)``."""
    thrust, roll, pitch = (float(x) for x in np.asarray(u, dtype=float))
    s, c = np.sin(psi), np.cos(psi)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    return np.array(
        [
            [cr * sp * c + sr * s, thrust * (-sr * sp * c + cr * s), thrust * cr * cp * c],
            [cr * sp * s - sr * c, thrust * (-sr * sp * s - cr * c), thrust * cr * cp * s],
            [cr * cp, -thrust * sr * cp, -thrust * cr * sp],
        ]
    )


def in_U(u, p: ConstraintParams | None = None, tol: float = 0.0):
    """Membership in the box ``0 <= T <= T_max, |phi| <= phi_max, |theta| <= theta_max``."""
    p = _unchecked(p)
    u = np.asarray(u, dtype=float)
    thrust, roll, pitch = u[..., 0], u[..., 1], u[..., 2]
    return (
        (thrust >= -tol)
        & (thrust <= p.t_max + tol)
        & (np.abs(roll) <= p.phi_max + tol)
        & (np.abs(pitch) <= p.theta_max + tol)
    )


def vtilde_residuals(v, p: ConstraintParams | None = None) -> np.ndarray:
    """Signed residuals of the three ``V~`` inequalities, in m/s^2.

    Columns are ``(ball, cone, half-space)``; a point belongs to ``V~``
    iff all residuals are ``<= 0``. The ball and cone rows are written as
    distances (norm minus radius) rather than squared forms so that a
    tolerance has a physical unit.
    """
    p = _unchecked(p)
    v = np.asarray(v, dtype=float)
    z = v[..., 2] + p.g
    lateral = np.hypot(v[..., 0], v[..., 1])
    ball = np.sqrt(lateral**2 + z**2) - p.t_max
    cone = lateral - z * p.tan_eps
    half = -z
    return np.stack([ball, cone, half], axis=-1)


def in_Vtilde(v, p: ConstraintParams | None = None, tol: float = 0.0):
    """Membership in the convex inner set ``V~`` (ball of radius ``T_max``
    around ``(0, 0, -g)`` intersected with the upward cone of half-angle
    ``eps_max`` whose apex is the same point)."""
    return np.all(vtilde_residuals(v, p) <= tol, axis=-1)


def in_V(v, psi=0.0, p: ConstraintParams | None = None, tol: float = 0.0):
    """Membership in the exact, yaw-dependent flat input set ``V``."""
    p = _unchecked(p)
    v = np.asarray(v, dtype=float)
    ok = v[..., 2] + p.g > 0
    if v.ndim == 1:
        return bool(ok) and bool(in_U(forward_map(v, psi, p), p, tol))
    out = np.zeros(v.shape[:-1], dtype=bool)
    if np.any(ok):
        out[ok] = in_U(forward_map(v[ok], psi, p), p, tol)
    return out
