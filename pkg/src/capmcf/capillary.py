"""Discrete capillary energies and the per-step contact-angle data ``beta``.

Boundary positions are measured by arc length ``s`` counter-clockwise from
the bottom-left corner of the rectangle: bottom wall, right wall, top wall,
left wall.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bregman import BoundaryField
from .grid import GridSpec, ScalarField, _values

__all__ = [
    "ContactAngleSpec",
    "ContactArc",
    "BetaWarning",
    "discrete_tv",
    "capillary_energy",
    "chambolle_energy",
    "atw_energy",
    "boundary_arclength",
    "boundary_cycle",
    "build_beta",
    "detect_contact_arcs",
]


class BetaWarning(RuntimeWarning):
    pass


class ContactArc(NamedTuple):
    center: float
    radius: float


@dataclass(frozen=True)
class ContactAngleSpec:
    """Prescribed contact angle ``theta(t, s)`` in ``[0, pi]``.

    ``theta`` receives the time and an array of boundary arc-length
    positions and returns angles of the same shape.  ``rho`` is the radius
    of the boundary neighbourhood around each contact point.
    """

    theta: Callable[[float, np.ndarray], np.ndarray]
    rho: float

    def cos_theta(self, t: float, s: np.ndarray) -> np.ndarray:
        th = np.broadcast_to(np.asarray(self.theta(t, s), dtype=float), np.shape(s))
        if np.any(th < 0.0) or np.any(th > math.pi):
            raise ValueError("contact angle must lie in [0, pi]")
        return np.cos(th)

    @classmethod
    def constant(cls, angle: float, rho: float) -> "ContactAngleSpec":
        return cls(lambda t, s: np.full(np.shape(s), float(angle)), rho)

    @classmethod
    def per_wall(cls, grid: GridSpec, rho: float, *, left: float = math.pi / 2,
                 right: float = math.pi / 2, bottom: float = math.pi / 2,
                 top: float = math.pi / 2) -> "ContactAngleSpec":
        lx = grid.beta_x - grid.alpha_x
        ly = grid.beta_y - grid.alpha_y
        edges = np.array([lx, lx + ly, 2 * lx + ly])
        angles = np.array([bottom, right, top, left], dtype=float)

        def theta(t, s):
            return angles[np.searchsorted(edges, np.asarray(s), side="right")]

        return cls(theta, rho)


def discrete_tv(u, dx: float) -> float:
    """Isotropic TV with forward differences and mirror ghosts."""
    a = _values(u)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1, :] = a[1:, :] - a[:-1, :]
    return float(np.sum(np.hypot(gx, gy)) * dx)


def _beta_values(beta, shape):
    if beta is None:
        return np.zeros(shape)
    return beta.values if isinstance(beta, BoundaryField) else np.asarray(beta, float)


def capillary_energy(u, beta, dx: float) -> float:
    """Discrete ``TV(u) + integral of beta * trace(u)`` over the walls."""
    a = _values(u)
    b = _beta_values(beta, a.shape)
    n_y, n_x = a.shape
    w = np.zeros(a.shape)
    w[0, :] += dx
    w[-1, :] += dx
    w[:, 0] += dx
    w[:, -1] += dx
    return discrete_tv(a, dx) + float(np.sum(b * a * w))


def chambolle_energy(u, f, beta, h: float, dx: float) -> float:
    if not h > 0:
        raise ValueError("h must be positive")
    a, fa = _values(u), _values(f)
    return capillary_energy(a, beta, dx) + float(np.sum((a - fa) ** 2)) * dx * dx / (2.0 * h)


def atw_energy(F, e0_distance, beta, lambda_atw: float, dx: float) -> float:
    """``C_beta(chi_F) + lambda * sum over F xor E0 of |d_E0| dx^2``.

    ``F`` is a boolean (or 0/1) indicator field; ``E0`` is ``{d_E0 < 0}``.
    """
    chi = np.asarray(_values(F) if isinstance(F, ScalarField) else F, dtype=float)
    d = _values(e0_distance.field if hasattr(e0_distance, "max_norm") else e0_distance)
    e0 = d < 0.0
    sym = (chi > 0.5) != e0
    return capillary_energy(chi, beta, dx) + lambda_atw * float(np.sum(np.abs(d[sym]))) * dx * dx


def boundary_cycle(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the boundary nodes, counter-clockwise from (0, 0)."""
    n_y, n_x = grid.shape
    rows = np.concatenate([np.zeros(n_x, int), np.arange(1, n_y),
                           np.full(n_x - 1, n_y - 1), np.arange(n_y - 2, 0, -1)])
    cols = np.concatenate([np.arange(n_x), np.full(n_y - 1, n_x - 1),
                           np.arange(n_x - 2, -1, -1), np.zeros(n_y - 2, int)])
    return rows, cols


def boundary_arclength(grid: GridSpec) -> np.ndarray:
    """Arc-length position of every boundary node in cycle order."""
    rows, cols = boundary_cycle(grid)
    n_y, n_x = grid.shape
    lx = grid.beta_x - grid.alpha_x
    ly = grid.beta_y - grid.alpha_y
    x = grid.x[cols]
    y = grid.y[rows]
    s = np.empty(len(rows))
    bottom = rows == 0
    right = (cols == n_x - 1) & ~bottom
    top = (rows == n_y - 1) & ~right
    left = ~(bottom | right | top)
    s[bottom] = x[bottom] - grid.alpha_x
    s[right] = lx + (y[right] - grid.alpha_y)
    s[top] = lx + ly + (grid.beta_x - x[top])
    s[left] = 2 * lx + ly + (grid.beta_y - y[left])
    return s


def detect_contact_arcs(w, grid: GridSpec, rho: float) -> list[ContactArc]:
    """Arcs of radius ``rho`` around each place where ``{w < 0}`` meets the walls.

    Contact points are the sign changes of ``w`` between consecutive
    boundary nodes, located by linear interpolation in arc length.
    """
    a = _values(w)
    rows, cols = boundary_cycle(grid)
    s = boundary_arclength(grid)
    vals = a[rows, cols]
    inside = vals < 0.0
    per = grid.perimeter
    arcs = []
    m = len(vals)
    for k in range(m):
        k2 = (k + 1) % m
        if inside[k] == inside[k2]:
            continue
        s0, s1 = s[k], s[k2]
        if k2 == 0:
            s1 += per
        v0, v1 = vals[k], vals[k2]
        t = v0 / (v0 - v1) if v0 != v1 else 0.5
        arcs.append(ContactArc(float((s0 + t * (s1 - s0)) % per), float(rho)))
    return arcs


def build_beta(spec: ContactAngleSpec, arcs, t: float, grid: GridSpec) -> BoundaryField:
    """``beta = -cos theta`` near the contact points, balanced elsewhere.

    On the union ``N`` of the arcs ``beta = -cos(theta(t, s))``; on the
    rest of the boundary it is the constant that makes the boundary
    integral of ``beta`` vanish.  With no arcs ``beta`` is zero.
    """
    rows, cols = boundary_cycle(grid)
    s = boundary_arclength(grid)
    weights = grid.boundary_weights()[rows, cols]
    per = grid.perimeter
    in_n = np.zeros(len(s), dtype=bool)
    for arc in arcs:
        gap = np.abs((s - arc.center + 0.5 * per) % per - 0.5 * per)
        in_n |= gap <= arc.radius
    values = np.zeros(grid.shape)
    if in_n.any():
        w_rest = float(weights[~in_n].sum())
        if w_rest <= 0.0:
            raise ValueError("contact neighbourhood covers the whole boundary")
        cos_n = spec.cos_theta(t, s[in_n])
        comp = float(np.sum(cos_n * weights[in_n])) / w_rest
        if abs(comp) > 1.0:
            warnings.warn(f"balancing value {comp:.3f} exceeds 1 in magnitude",
                          BetaWarning, stacklevel=2)
        vals = np.full(len(s), comp)
        vals[in_n] = -cos_n
        values[rows, cols] = vals
    return BoundaryField(grid, values)
