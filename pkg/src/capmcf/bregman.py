"""Split Bregman minimization of ``C_beta(u) + 1/(2h) ||u - f||^2``.

``C_beta`` is the isotropic total variation plus the boundary integral of
``beta`` times the trace of ``u``.  The boundary integral enters only
through the ghost values outside the walls, which encode the natural
boundary condition

    beta = lambda * (d - grad u - b) . n        on the walls,

with the outward normal ``n`` taken as the diagonal ``(+-1, +-1)/sqrt(2)``
at the four corners.  Gradients are central differences throughout.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .grid import Ghosts, GridSpec, ScalarField, _values

__all__ = [
    "SolverParams",
    "BregmanState",
    "BoundaryField",
    "ConvergenceWarning",
    "SolveResult",
    "shrink_step",
    "ghost_corrections",
    "ghost_edge_values",
    "ghost_corner_values",
    "ghost_values",
    "u_update",
    "b_update",
    "bregman_iteration",
    "bregman_iteration_reference",
    "solve_subproblem",
]

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverParams:
    """Parameters of one subproblem solve.

    ``mu`` is fixed to ``1/h``.  ``shrink`` selects the d-update:
    ``"lagged"`` is ``d = s*lam*v / (s*lam + 1)``, ``"standard"`` the soft
    shrinkage ``v/|v| * max(|v| - 1/lam, 0)``.  ``warm_start`` keeps the
    Bregman variables ``d, b`` between consecutive solves of the time
    stepper instead of resetting them to zero.
    """

    h: float
    lam: float = 1.0
    tol: float = 1e-3
    max_iters: int = 1000
    min_iters: int = 1
    shrink: str = "lagged"
    warm_start: bool = False

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1 or self.min_iters < 1:
            raise ValueError("max_iters and min_iters must be >= 1")
        if self.shrink not in ("lagged", "standard"):
            raise ValueError(f"shrink must be 'lagged' or 'standard', got {self.shrink!r}")

    @property
    def mu(self) -> float:
        return 1.0 / self.h


@dataclass(frozen=True)
class BoundaryField:
    """``beta`` on the boundary nodes, stored densely (interior entries zero).

    One value per boundary node; a corner node has a single value shared by
    the two walls meeting there.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"beta shape {v.shape} != grid shape {self.grid.shape}")
        v[1:-1, 1:-1] = 0.0
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "BoundaryField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_walls(cls, grid: GridSpec, left: float, right: float,
                   bottom: float, top: float) -> "BoundaryField":
        """Constant value per wall; corners take the side-wall value."""
        v = np.zeros(grid.shape)
        v[0, :] = bottom
        v[-1, :] = top
        v[:, 0] = left
        v[:, -1] = right
        return cls(grid, v)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def weighted_sum(self) -> float:
        """Boundary integral of ``beta`` (see ``GridSpec.boundary_weights``)."""
        return float(np.sum(self.values * self.grid.boundary_weights()))

    def walls(self) -> dict[str, np.ndarray]:
        v = self.values
        return {"left": v[:, 0].copy(), "right": v[:, -1].copy(),
                "bottom": v[0, :].copy(), "top": v[-1, :].copy()}


@dataclass
class BregmanState:
    u: np.ndarray
    d_x: np.ndarray
    d_y: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, f) -> "BregmanState":
        f = np.array(_values(f), dtype=float)
        z = np.zeros_like(f)
        return cls(f, z, z.copy(), z.copy(), z.copy())


@dataclass
class SolveResult:
    u: np.ndarray
    iterations: int
    residual: float
    converged: bool
    state: BregmanState
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# kernels

@nb.njit(cache=True)
def _corrections(qx, qy, beta, lam, dx, cl, cr, cb, ct):
    # ghost = mirror + correction; corner corrections are split evenly
    n_y, n_x = qx.shape
    for i in range(n_y):
        cl[i] = 2.0 * dx * (-qx[i, 0] - beta[i, 0] / lam)
        cr[i] = 2.0 * dx * (qx[i, n_x - 1] - beta[i, n_x - 1] / lam)
    for j in range(n_x):
        cb[j] = 2.0 * dx * (-qy[0, j] - beta[0, j] / lam)
        ct[j] = 2.0 * dx * (qy[n_y - 1, j] - beta[n_y - 1, j] / lam)
    s2 = math.sqrt(2.0)
    for (i, j, sx, sy) in ((0, 0, -1.0, -1.0), (0, n_x - 1, 1.0, -1.0),
                           (n_y - 1, 0, -1.0, 1.0), (n_y - 1, n_x - 1, 1.0, 1.0)):
        c = 2.0 * dx * (sx * qx[i, j] + sy * qy[i, j] - s2 * beta[i, j] / lam)
        if j == 0:
            cl[i] = 0.5 * c
        else:
            cr[i] = 0.5 * c
        if i == 0:
            cb[j] = 0.5 * c
        else:
            ct[j] = 0.5 * c


@nb.njit(cache=True)
def _gradient(u, dx, cl, cr, cb, ct, gx, gy):
    n_y, n_x = u.shape
    inv = 0.5 / dx
    for i in range(n_y):
        for j in range(n_x):
            if j == 0:
                gx[i, j] = (u[i, 1] - (u[i, 1] + cl[i])) * inv
            elif j == n_x - 1:
                gx[i, j] = ((u[i, n_x - 2] + cr[i]) - u[i, n_x - 2]) * inv
            else:
                gx[i, j] = (u[i, j + 1] - u[i, j - 1]) * inv
            if i == 0:
                gy[i, j] = (u[1, j] - (u[1, j] + cb[j])) * inv
            elif i == n_y - 1:
                gy[i, j] = ((u[n_y - 2, j] + ct[j]) - u[n_y - 2, j]) * inv
            else:
                gy[i, j] = (u[i + 1, j] - u[i - 1, j]) * inv


@nb.njit(cache=True)
def _divergence(qx, qy, dx, out):
    # central in the interior; one-sided at the walls (linear extrapolation
    # of q into the ghost layer)
    n_y, n_x = qx.shape
    for i in range(n_y):
        for j in range(n_x):
            if j == 0:
                ax = (qx[i, 1] - qx[i, 0]) / dx
            elif j == n_x - 1:
                ax = (qx[i, j] - qx[i, j - 1]) / dx
            else:
                ax = (qx[i, j + 1] - qx[i, j - 1]) / (2.0 * dx)
            if i == 0:
                ay = (qy[1, j] - qy[0, j]) / dx
            elif i == n_y - 1:
                ay = (qy[i, j] - qy[i - 1, j]) / dx
            else:
                ay = (qy[i + 1, j] - qy[i - 1, j]) / (2.0 * dx)
            out[i, j] = ax + ay


@nb.njit(cache=True)
def _shrink(gx, gy, bx, by, lam, standard, dx_out, dy_out):
    n_y, n_x = gx.shape
    for i in range(n_y):
        for j in range(n_x):
            vx = gx[i, j] + bx[i, j]
            vy = gy[i, j] + by[i, j]
            s = math.sqrt(vx * vx + vy * vy)
            if s == 0.0:
                dx_out[i, j] = 0.0
                dy_out[i, j] = 0.0
                continue
            if standard:
                k = max(s - 1.0 / lam, 0.0) / s
            else:
                k = s * lam / (s * lam + 1.0)
            dx_out[i, j] = k * vx
            dy_out[i, j] = k * vy


@nb.njit(cache=True)
def _gs_sweep(u, rhs, lam, denom, cl, cr, cb, ct):
    # In-place lexicographic Gauss-Seidel on
    #   (mu dx^2 + 4 lam) u - lam * sum(neighbours) = rhs
    # with ghost neighbours replaced by mirror + correction.
    n_y, n_x = u.shape
    for i in range(n_y):
        for j in range(n_x):
            if j == 0:
                sx = 2.0 * u[i, 1] + cl[i]
            elif j == n_x - 1:
                sx = 2.0 * u[i, n_x - 2] + cr[i]
            else:
                sx = u[i, j - 1] + u[i, j + 1]
            if i == 0:
                sy = 2.0 * u[1, j] + cb[j]
            elif i == n_y - 1:
                sy = 2.0 * u[n_y - 2, j] + ct[j]
            else:
                sy = u[i - 1, j] + u[i + 1, j]
            u[i, j] = (lam * (sx + sy) + rhs[i, j]) / denom


@nb.njit(cache=True)
def _fused_iteration(u, f, d_x, d_y, b_x, b_y, beta, active, mu, lam, dx, standard):
    # shrink -> u sweep -> b update over the active nodes; returns the squared
    # change of u summed over nodes.  Same arithmetic as the public per-step
    # functions, without temporaries.
    n_y, n_x = u.shape
    cl, cr = np.empty(n_y), np.empty(n_y)
    cb, ct = np.empty(n_x), np.empty(n_x)
    qx = d_x - b_x
    qy = d_y - b_y
    _corrections(qx, qy, beta, lam, dx, cl, cr, cb, ct)
    inv = 0.5 / dx
    for i in range(n_y):
        for j in range(n_x):
            if not active[i, j]:
                continue
            if j == 0:
                gx = (u[i, 1] - (u[i, 1] + cl[i])) * inv
            elif j == n_x - 1:
                gx = ((u[i, n_x - 2] + cr[i]) - u[i, n_x - 2]) * inv
            else:
                gx = (u[i, j + 1] - u[i, j - 1]) * inv
            if i == 0:
                gy = (u[1, j] - (u[1, j] + cb[j])) * inv
            elif i == n_y - 1:
                gy = ((u[n_y - 2, j] + ct[j]) - u[n_y - 2, j]) * inv
            else:
                gy = (u[i + 1, j] - u[i - 1, j]) * inv
            vx = gx + b_x[i, j]
            vy = gy + b_y[i, j]
            s = math.sqrt(vx * vx + vy * vy)
            if s == 0.0:
                k = 0.0
            elif standard:
                k = max(s - 1.0 / lam, 0.0) / s
            else:
                k = s * lam / (s * lam + 1.0)
            d_x[i, j] = k * vx
            d_y[i, j] = k * vy
    for i in range(n_y):
        for j in range(n_x):
            qx[i, j] = d_x[i, j] - b_x[i, j]
            qy[i, j] = d_y[i, j] - b_y[i, j]
    _corrections(qx, qy, beta, lam, dx, cl, cr, cb, ct)
    denom = mu * dx * dx + 4.0 * lam
    change = 0.0
    for i in range(n_y):
        for j in range(n_x):
            if not active[i, j]:
                continue
            if j == 0:
                ax = (qx[i, 1] - qx[i, 0]) / dx
                sx = 2.0 * u[i, 1] + cl[i]
            elif j == n_x - 1:
                ax = (qx[i, j] - qx[i, j - 1]) / dx
                sx = 2.0 * u[i, n_x - 2] + cr[i]
            else:
                ax = (qx[i, j + 1] - qx[i, j - 1]) / (2.0 * dx)
                sx = u[i, j - 1] + u[i, j + 1]
            if i == 0:
                ay = (qy[1, j] - qy[0, j]) / dx
                sy = 2.0 * u[1, j] + cb[j]
            elif i == n_y - 1:
                ay = (qy[i, j] - qy[i - 1, j]) / dx
                sy = 2.0 * u[n_y - 2, j] + ct[j]
            else:
                ay = (qy[i + 1, j] - qy[i - 1, j]) / (2.0 * dx)
                sy = u[i - 1, j] + u[i + 1, j]
            rhs = dx * dx * (mu * f[i, j] - lam * (ax + ay))
            new = (lam * (sx + sy) + rhs) / denom
            change += (new - u[i, j]) ** 2
            u[i, j] = new
    for i in range(n_y):
        for j in range(n_x):
            if not active[i, j]:
                continue
            if j == 0:
                gx = (u[i, 1] - (u[i, 1] + cl[i])) * inv
            elif j == n_x - 1:
                gx = ((u[i, n_x - 2] + cr[i]) - u[i, n_x - 2]) * inv
            else:
                gx = (u[i, j + 1] - u[i, j - 1]) * inv
            if i == 0:
                gy = (u[1, j] - (u[1, j] + cb[j])) * inv
            elif i == n_y - 1:
                gy = ((u[n_y - 2, j] + ct[j]) - u[n_y - 2, j]) * inv
            else:
                gy = (u[i + 1, j] - u[i - 1, j]) * inv
            b_x[i, j] += gx - d_x[i, j]
            b_y[i, j] += gy - d_y[i, j]
    return change


# ---------------------------------------------------------------------------
# public operations

def _beta_array(beta, shape) -> np.ndarray:
    if beta is None:
        return np.zeros(shape)
    return np.ascontiguousarray(_values(beta) if not isinstance(beta, BoundaryField)
                                else beta.values)


def ghost_corrections(d_x, d_y, b_x, b_y, beta, lam: float, dx: float) -> Ghosts:
    """Offsets ``c`` such that each ghost value is ``mirror + c``.

    Edge ghosts follow from the boundary condition and central differences,
    e.g. on the left wall ``u[i,-1] = u[i,1] - 2dx (d_x - b_x + beta/lam)``.
    At a corner only the sum of the two ghosts is constrained; the
    correction is split evenly between them.
    """
    qx = np.ascontiguousarray(np.asarray(d_x, float) - np.asarray(b_x, float))
    qy = np.ascontiguousarray(np.asarray(d_y, float) - np.asarray(b_y, float))
    n_y, n_x = qx.shape
    g = Ghosts(np.empty(n_y), np.empty(n_y), np.empty(n_x), np.empty(n_x))
    _corrections(qx, qy, _beta_array(beta, qx.shape), float(lam), float(dx), *g)
    return g


def ghost_values(u, d_x, d_y, b_x, b_y, beta, lam: float, dx: float) -> Ghosts:
    """All ghost values outside the four walls."""
    u = np.asarray(_values(u), float)
    c = ghost_corrections(d_x, d_y, b_x, b_y, beta, lam, dx)
    return Ghosts(u[:, 1] + c.left, u[:, -2] + c.right,
                  u[1, :] + c.bottom, u[-2, :] + c.top)


def ghost_edge_values(u, d_x, d_y, b_x, b_y, beta, lam: float, dx: float) -> Ghosts:
    """Edge ghosts; entries next to the corners are ``nan`` (see the corner rule)."""
    g = ghost_values(u, d_x, d_y, b_x, b_y, beta, lam, dx)
    for a in g:
        a[0] = a[-1] = np.nan
    return g


def ghost_corner_values(u, d_x, d_y, b_x, b_y, beta, lam: float, dx: float) -> dict:
    """Constrained ghost-pair sums at the corners.

    Keys ``"bl", "br", "tl", "tr"``; e.g. ``"bl"`` is ``u[-1,0] + u[0,-1]``.
    """
    g = ghost_values(u, d_x, d_y, b_x, b_y, beta, lam, dx)
    return {
        "bl": g.left[0] + g.bottom[0],
        "br": g.right[0] + g.bottom[-1],
        "tl": g.left[-1] + g.top[0],
        "tr": g.right[-1] + g.top[-1],
    }


def shrink_step(u, b_x, b_y, lam: float, dx: float | None = None, *,
                ghosts: Ghosts | None = None, variant: str = "lagged",
                grad=None):
    """d-update from ``v = grad u + b``.

    Either pass ``u`` with ``dx`` (and optionally ``ghosts``), or the
    precomputed gradient as ``grad=(gx, gy)``.
    """
    if grad is None:
        from .grid import central_gradient
        grad = central_gradient(_values(u), dx, ghosts)
    gx, gy = (np.ascontiguousarray(_values(a), dtype=float) for a in grad)
    b_x = np.ascontiguousarray(b_x, dtype=float)
    b_y = np.ascontiguousarray(b_y, dtype=float)
    out_x, out_y = np.empty_like(gx), np.empty_like(gx)
    _shrink(gx, gy, b_x, b_y, float(lam), variant == "standard", out_x, out_y)
    return out_x, out_y


def _rhs(f, d_x, d_y, b_x, b_y, mu, lam, dx):
    qx = np.ascontiguousarray(d_x - b_x)
    qy = np.ascontiguousarray(d_y - b_y)
    div = np.empty_like(qx)
    _divergence(qx, qy, dx, div)
    return dx * dx * (mu * f - lam * div)


def u_update(state: BregmanState, f, beta, params: SolverParams, dx: float,
             sweeps: int = 1) -> np.ndarray:
    """Gauss-Seidel sweep(s) of the u-equation, in place on ``state.u``.

    Discretizes ``(mu - lam Laplace) u = mu f - lam div(d - b)`` with the
    capillary ghost closure built from the current ``d, b``.
    """
    f = np.ascontiguousarray(_values(f), dtype=float)
    c = ghost_corrections(state.d_x, state.d_y, state.b_x, state.b_y, beta,
                          params.lam, dx)
    rhs = _rhs(f, state.d_x, state.d_y, state.b_x, state.b_y, params.mu, params.lam, dx)
    denom = params.mu * dx * dx + 4.0 * params.lam
    for _ in range(sweeps):
        _gs_sweep(state.u, rhs, params.lam, denom, *c)
    return state.u


def _ghost_gradient(u, d_x, d_y, b_x, b_y, beta, lam, dx):
    c = ghost_corrections(d_x, d_y, b_x, b_y, beta, lam, dx)
    gx, gy = np.empty_like(u), np.empty_like(u)
    _gradient(u, dx, *c, gx, gy)
    return gx, gy


def b_update(state: BregmanState, beta, params: SolverParams, dx: float,
             b_prev=None):
    """``b <- b + grad u - d`` in place.

    Wall gradients use ghosts built from the current ``u, d`` and the
    Bregman variable of the previous iteration (``b_prev``, defaulting to
    the current ``b``).
    """
    bx0, by0 = (state.b_x, state.b_y) if b_prev is None else b_prev
    gx, gy = _ghost_gradient(state.u, state.d_x, state.d_y, bx0, by0, beta,
                             params.lam, dx)
    state.b_x += gx - state.d_x
    state.b_y += gy - state.d_y
    return state.b_x, state.b_y


def bregman_iteration(state: BregmanState, f, beta, params: SolverParams,
                      dx: float, active: np.ndarray | None = None) -> float:
    """One shrink / u / b cycle; returns the weighted L2 change of ``u``.

    Only nodes where ``active`` is true are updated (all by default).
    """
    beta_a = _beta_array(beta, state.u.shape)
    if active is None:
        active = np.ones(state.u.shape, dtype=np.bool_)
    change = _fused_iteration(state.u, np.ascontiguousarray(f, dtype=float),
                              state.d_x, state.d_y, state.b_x, state.b_y, beta_a,
                              active, params.mu, params.lam, float(dx),
                              params.shrink == "standard")
    state.iteration += 1
    return math.sqrt(change) * dx


def bregman_iteration_reference(state: BregmanState, f, beta, params: SolverParams,
                                dx: float) -> float:
    """Same cycle as :func:`bregman_iteration`, composed from the public steps."""
    beta_a = _beta_array(beta, state.u.shape)
    gx, gy = _ghost_gradient(state.u, state.d_x, state.d_y, state.b_x, state.b_y,
                             beta_a, params.lam, dx)
    state.d_x, state.d_y = shrink_step(None, state.b_x, state.b_y, params.lam,
                                       grad=(gx, gy), variant=params.shrink)
    u_old = state.u.copy()
    u_update(state, f, beta_a, params, dx)
    b_update(state, beta_a, params, dx)
    state.iteration += 1
    return float(np.sqrt(np.sum((state.u - u_old) ** 2)) * dx)


def solve_subproblem(f, beta, params: SolverParams, *, dx: float | None = None,
                     state: BregmanState | None = None, verbose: bool = False,
                     energy=None, stream=None,
                     active: np.ndarray | None = None) -> SolveResult:
    """Minimize ``C_beta(u) + 1/(2h)||u - f||^2`` by split Bregman.

    Iterates while the change ``||u_k - u_{k-1}||`` (L2 with area weight
    ``dx^2``) is at least ``tol``, at least ``min_iters`` and at most
    ``max_iters`` times.  ``state`` seeds ``d, b`` (warm start); ``u``
    always starts from ``f``.  ``active`` restricts the updates to a band
    of nodes; elsewhere ``u = f`` and ``d = b = 0``.  Hitting ``max_iters`` issues a
    ``ConvergenceWarning`` and returns the last iterate.

    In verbose mode one line ``iter residual energy`` per iteration goes to
    ``stream`` (default: the module logger); ``energy(u)`` supplies the
    energy column.
    """
    if isinstance(f, ScalarField):
        dx = f.grid.dx if dx is None else dx
    if dx is None:
        raise TypeError("dx is required for raw arrays")
    f_a = np.ascontiguousarray(_values(f), dtype=float)
    beta_a = _beta_array(beta, f_a.shape)
    if np.abs(beta_a).max(initial=0.0) > 1.0 + 1e-12:
        raise ValueError("|beta| must not exceed 1")
    if state is None:
        st = BregmanState.initial(f_a)
    else:
        st = BregmanState(f_a.copy(), state.d_x.copy(), state.d_y.copy(),
                          state.b_x.copy(), state.b_y.copy())
    if active is not None:
        active = np.ascontiguousarray(active, dtype=np.bool_)
        for a in (st.d_x, st.d_y, st.b_x, st.b_y):
            a[~active] = 0.0
    history = []
    res = np.inf
    k = 0
    while k < params.max_iters:
        res = bregman_iteration(st, f_a, beta_a, params, dx, active)
        k += 1
        if verbose:
            e = energy(st.u) if energy is not None else float("nan")
            line = f"{k} {res:.17g} {e:.17g}"
            history.append((k, res, e))
            if stream is not None:
                print(line, file=stream)
            else:
                log.info(line)
        if res < params.tol and k >= params.min_iters:
            break
    converged = res < params.tol
    if not converged:
        warnings.warn(f"split Bregman stopped at max_iters={params.max_iters} "
                      f"with residual {res:.3e}", ConvergenceWarning, stacklevel=2)
    return SolveResult(st.u, k, res, converged, st, history)
