"""Ground truth used by the test suite.

Everything here is written independently of the production solver:

* brute-force minimization of the discrete capillary ATW functional over all
  subsets of a tiny grid, with the anisotropic (edge-counting) perimeter;
* the matching anisotropic convex problem solved by accelerated projected
  gradient on its dual, whose zero sublevel set the thresholding theorem
  says must be one of those minimizers;
* a sparse direct solve of the linear u-subproblem with the same ghost
  closure as the Gauss-Seidel sweep;
* closed-form curve-shortening solutions (grim reaper, shrinking circle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TinyInstance",
    "anisotropic_perimeter",
    "atw_energies",
    "brute_force_atw",
    "anisotropic_solve",
    "thresholded_anisotropic_solve",
    "random_instance",
    "direct_linear_solve",
    "GRIM_REAPER_SPEED",
    "grim_reaper_profile",
    "circle_radius",
]

MAX_ENUMERATION = 25


@dataclass(frozen=True)
class TinyInstance:
    """Enumerable ATW problem on an ``n_y x n_x`` grid (at most 5 x 5).

    ``distance`` is a signed distance to ``e0`` (negative inside), ``beta``
    is dense with interior entries ignored, ``lambda_atw`` weighs the
    distance term.
    """

    e0: np.ndarray
    distance: np.ndarray
    beta: np.ndarray
    lambda_atw: float
    dx: float = 1.0

    def __post_init__(self):
        n_y, n_x = self.e0.shape
        if n_x > 5 or n_y > 5:
            raise ValueError("tiny instances are limited to 5 x 5")

    @property
    def shape(self):
        return self.e0.shape

    @property
    def size(self) -> int:
        return int(self.e0.size)

    def boundary_weights(self) -> np.ndarray:
        w = np.zeros(self.shape)
        w[0, :] += self.dx
        w[-1, :] += self.dx
        w[:, 0] += self.dx
        w[:, -1] += self.dx
        return w


def _edges(shape):
    n_y, n_x = shape
    idx = np.arange(n_y * n_x).reshape(shape)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def anisotropic_perimeter(chi: np.ndarray, dx: float = 1.0) -> float:
    """Number of grid edges cut by the set, times ``dx``."""
    c = np.asarray(chi, dtype=float)
    return dx * float(np.abs(np.diff(c, axis=0)).sum() + np.abs(np.diff(c, axis=1)).sum())


def atw_energies(inst: TinyInstance, masks: np.ndarray) -> np.ndarray:
    """``A_{-beta}`` for each subset given as a bitmask over row-major nodes."""
    n = inst.size
    bits = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    a, b = _edges(inst.shape)
    per = inst.dx * np.abs(bits[:, a] - bits[:, b]).sum(axis=1)
    wall = -(inst.beta * inst.boundary_weights()).ravel()
    e0 = inst.e0.ravel().astype(float)
    sym = np.abs(bits - e0[None, :])
    dist = np.abs(inst.distance).ravel() * inst.dx ** 2
    return per + bits @ wall + inst.lambda_atw * (sym @ dist)


def brute_force_atw(inst: TinyInstance, rtol: float = 1e-9):
    """All minimizers of the discrete ``A_{-beta}`` by enumeration.

    Returns ``(masks, energy)``: bitmasks (bit ``k`` is node ``k`` in
    row-major order) whose energy is within ``rtol`` of the minimum, in
    increasing order.
    """
    n = inst.size
    if n > MAX_ENUMERATION:
        raise ValueError(f"{n} nodes exceeds the enumeration cap of {MAX_ENUMERATION}")
    energies = np.empty(1 << n)
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        energies[start:start + len(masks)] = atw_energies(inst, masks)
    best = energies.min()
    tol = rtol * max(1.0, abs(best))
    winners = np.nonzero(energies <= best + tol)[0]
    return winners.astype(np.int64), float(best)


def mask_of(chi: np.ndarray) -> int:
    flat = np.asarray(chi, dtype=bool).ravel()
    return int(sum(1 << k for k in np.nonzero(flat)[0]))


@nb.njit(cache=True)
def _fista_dual(g, ea, eb, tau, scale, iters, gap_tol):
    # min_p 0.5 |g - scale * D^T p|^2  over |p_e| <= 1, D p = u[a] - u[b]
    m = ea.shape[0]
    n = g.shape[0]
    p = np.zeros(m)
    y = np.zeros(m)
    t = 1.0
    u = g.copy()
    for it in range(iters):
        # u = g - scale * D^T y
        u[:] = g
        for e in range(m):
            u[ea[e]] -= scale * y[e]
            u[eb[e]] += scale * y[e]
        p_old = p.copy()
        for e in range(m):
            step = y[e] + tau * scale * (u[ea[e]] - u[eb[e]])
            p[e] = min(1.0, max(-1.0, step))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        # adaptive restart keeps the iteration monotone
        restart = 0.0
        for e in range(m):
            restart += (y[e] - p[e]) * (p[e] - p_old[e])
        if restart > 0.0:
            t_new = 1.0
            mom = 0.0
        for e in range(m):
            y[e] = p[e] + mom * (p[e] - p_old[e])
        t = t_new
        if it % 50 == 0:
            u[:] = g
            for e in range(m):
                u[ea[e]] -= scale * p[e]
                u[eb[e]] += scale * p[e]
            # duality gap of the scaled problem
            tv = 0.0
            inner = 0.0
            for e in range(m):
                du = u[ea[e]] - u[eb[e]]
                tv += abs(du)
                inner += p[e] * du
            if scale * (tv - inner) < gap_tol:
                return u, it
    u[:] = g
    for e in range(m):
        u[ea[e]] -= scale * p[e]
        u[eb[e]] += scale * p[e]
    return u, iters


def anisotropic_solve(inst: TinyInstance, gap_tol: float = 1e-13,
                      max_iters: int = 2_000_000) -> np.ndarray:
    """Minimizer of the anisotropic capillary Chambolle energy.

    ``dx * sum_edges |u_p - u_q| + sum_walls beta u w + (lambda/2) sum (u - d)^2 dx^2``
    """
    a_coef = inst.lambda_atw * inst.dx ** 2
    c = (inst.beta * inst.boundary_weights()).ravel()
    g = inst.distance.ravel() - c / a_coef
    ea, eb = _edges(inst.shape)
    scale = inst.dx / a_coef
    tau = 1.0 / (8.0 * scale * scale)
    u, _ = _fista_dual(g.astype(float), ea.astype(np.int64), eb.astype(np.int64),
                       tau, scale, max_iters, gap_tol / a_coef)
    return _polish(u, g, ea, eb, scale).reshape(inst.shape)


def _polish(u, g, ea, eb, scale, merge_tol=1e-6):
    """Exact values on the level clusters of an approximate minimizer.

    On each cluster ``C`` of equal values the optimality condition gives
    ``v_C = mean(g over C) - scale * sum(sign(v_C - v_nbr)) / |C|`` summed
    over edges leaving ``C``.  Falls back to ``u`` if the merged clusters
    change their relative order.
    """
    n = len(u)
    parent = list(range(n))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for a, b in zip(ea, eb):
        if abs(u[a] - u[b]) < merge_tol:
            parent[find(a)] = find(b)
    roots = np.array([find(k) for k in range(n)])
    out = np.empty(n)
    for r in np.unique(roots):
        members = roots == r
        push = 0.0
        for a, b in zip(ea, eb):
            if members[a] and not members[b]:
                push += np.sign(u[a] - u[b])
            elif members[b] and not members[a]:
                push += np.sign(u[b] - u[a])
        out[members] = g[members].mean() - scale * push / members.sum()
    for a, b in zip(ea, eb):
        if roots[a] != roots[b] and np.sign(out[a] - out[b]) != np.sign(u[a] - u[b]):
            return u
    return out


def thresholded_anisotropic_solve(inst: TinyInstance) -> np.ndarray:
    return anisotropic_solve(inst) < 0.0


def random_instance(rng: np.random.Generator, n_y: int, n_x: int,
                    lambda_atw: float, dx: float = 1.0) -> TinyInstance:
    """Random nonempty proper ``E0``, random zero-sum ``beta`` with ``|beta| <= 1``."""
    from .distance import signed_distance
    from .grid import make_grid

    while True:
        e0 = rng.random((n_y, n_x)) < 0.5
        if 0 < e0.sum() < e0.size:
            break
    grid = make_grid(0.0, n_x * dx, 0.0, n_y * dx, n_x, n_y)
    d = signed_distance(np.where(e0, -1.0, 1.0), grid).values
    w = np.zeros((n_y, n_x))
    w[0, :] += dx
    w[-1, :] += dx
    w[:, 0] += dx
    w[:, -1] += dx
    bnd = w > 0
    raw = rng.uniform(-1.0, 1.0, size=(n_y, n_x)) * bnd
    raw[bnd] -= np.sum(raw * w) / np.sum(w[bnd])
    peak = np.abs(raw).max()
    if peak > 1.0:
        raw /= peak
    return TinyInstance(e0, d, raw, float(lambda_atw), dx)


def direct_linear_solve(f, d_x, d_y, b_x, b_y, beta, params, dx: float) -> np.ndarray:
    """Sparse direct solution of the discrete u-equation.

    Solves ``(mu dx^2 + 4 lam) u_p - lam * sum_nbrs u = dx^2 (mu f - lam div q)``,
    ``q = d - b``, where each neighbour outside the grid is eliminated with
    the capillary ghost rule (mirror value plus offset; corners share their
    offset evenly) and ``div q`` is one-sided on the walls.
    """
    f = np.asarray(f, float)
    n_y, n_x = f.shape
    if n_y * n_x > 64 * 64:
        raise ValueError("direct solve is limited to 64 x 64 grids")
    lam, mu = params.lam, params.mu
    beta = np.zeros_like(f) if beta is None else np.asarray(getattr(beta, "values", beta), float)
    qx = np.asarray(d_x, float) - np.asarray(b_x, float)
    qy = np.asarray(d_y, float) - np.asarray(b_y, float)

    divx = np.empty_like(f)
    divx[:, 1:-1] = (qx[:, 2:] - qx[:, :-2]) / (2 * dx)
    divx[:, 0] = (qx[:, 1] - qx[:, 0]) / dx
    divx[:, -1] = (qx[:, -1] - qx[:, -2]) / dx
    divy = np.empty_like(f)
    divy[1:-1, :] = (qy[2:, :] - qy[:-2, :]) / (2 * dx)
    divy[0, :] = (qy[1, :] - qy[0, :]) / dx
    divy[-1, :] = (qy[-1, :] - qy[-2, :]) / dx
    rhs = dx * dx * (mu * f - lam * (divx + divy))

    corners = {(0, 0): (-1, -1), (0, n_x - 1): (1, -1),
               (n_y - 1, 0): (-1, 1), (n_y - 1, n_x - 1): (1, 1)}

    def offset(i, j, side):
        # ghost = mirror + offset for the neighbour beyond ``side``
        if (i, j) in corners:
            sx, sy = corners[(i, j)]
            c = 2 * dx * (sx * qx[i, j] + sy * qy[i, j] - math.sqrt(2) * beta[i, j] / lam)
            return 0.5 * c
        if side == "left":
            return 2 * dx * (-qx[i, j] - beta[i, j] / lam)
        if side == "right":
            return 2 * dx * (qx[i, j] - beta[i, j] / lam)
        if side == "bottom":
            return 2 * dx * (-qy[i, j] - beta[i, j] / lam)
        return 2 * dx * (qy[i, j] - beta[i, j] / lam)

    rows, cols, vals = [], [], []
    idx = lambda i, j: i * n_x + j  # noqa: E731
    diag = mu * dx * dx + 4 * lam
    b = rhs.ravel().copy()
    for i in range(n_y):
        for j in range(n_x):
            p = idx(i, j)
            rows.append(p); cols.append(p); vals.append(diag)
            for di, dj, side in ((0, -1, "left"), (0, 1, "right"),
                                 (-1, 0, "bottom"), (1, 0, "top")):
                ii, jj = i + di, j + dj
                if 0 <= ii < n_y and 0 <= jj < n_x:
                    rows.append(p); cols.append(idx(ii, jj)); vals.append(-lam)
                else:
                    mi, mj = i - di, j - dj
                    rows.append(p); cols.append(idx(mi, mj)); vals.append(-lam)
                    b[p] += lam * offset(i, j, side)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n_y * n_x, n_y * n_x))
    if not mu > 0:
        raise ValueError("singular system: mu must be positive")
    return spla.spsolve(A, b).reshape(n_y, n_x)


GRIM_REAPER_SPEED = math.pi / 4.0


def grim_reaper_profile(x, t: float = 0.0):
    """Translating solution on the strip ``0 < x < 2`` meeting the walls at 45 degrees.

    ``y = (4/pi) log|cos(pi/4 - pi x/4)| + 1/2 + (2/pi) log 2 - (pi/4) t``
    """
    x = np.asarray(x, dtype=float)
    eps = 1e-12
    x = np.clip(x, -1.0 + eps, 3.0 - eps)
    y = (4.0 / math.pi) * np.log(np.abs(np.cos(-math.pi * x / 4.0 + math.pi / 4.0))) \
        + 0.5 + (2.0 / math.pi) * math.log(2.0) - GRIM_REAPER_SPEED * t
    return y if y.ndim else float(y)


def circle_radius(r0: float, t: float):
    """Radius of a circle under curve-shortening flow; ``None`` once extinct."""
    r2 = r0 * r0 - 2.0 * t
    if r2 <= 0.0:
        return None
    return math.sqrt(r2)
