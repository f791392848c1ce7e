"""Signed distance by first-order fast marching.

The rectangle is convex, so the geodesic distance inside the domain equals
the Euclidean one and the grid itself is the only obstacle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .geometry import EmptyInterfaceError, _axis_seeds, narrow_band_seed
from .grid import GridSpec, ScalarField, _values

__all__ = [
    "SignedDistanceField",
    "fast_march",
    "fast_march_dense",
    "signed_distance",
    "gradient_seeds",
]


@dataclass(frozen=True)
class SignedDistanceField:
    field: ScalarField
    max_norm: float

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def grid(self) -> GridSpec:
        return self.field.grid


# Binary min-heap over (value, linear index) pairs; ties break on the index
# so the accept order is reproducible.

@nb.njit(cache=True, inline="always")
def _less(hv, hk, a, b):
    return hv[a] < hv[b] or (hv[a] == hv[b] and hk[a] < hk[b])


@nb.njit(cache=True)
def _push(hv, hk, size, v, k):
    pos = size
    hv[pos] = v
    hk[pos] = k
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(hv, hk, pos, parent):
            hv[pos], hv[parent] = hv[parent], hv[pos]
            hk[pos], hk[parent] = hk[parent], hk[pos]
            pos = parent
        else:
            break
    return size + 1


@nb.njit(cache=True)
def _pop(hv, hk, size):
    v, k = hv[0], hk[0]
    size -= 1
    hv[0] = hv[size]
    hk[0] = hk[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and _less(hv, hk, left + 1, left):
            child = left + 1
        if _less(hv, hk, child, pos):
            hv[pos], hv[child] = hv[child], hv[pos]
            hk[pos], hk[child] = hk[child], hk[pos]
            pos = child
        else:
            break
    return v, k, size


@nb.njit(cache=True)
def _march(seed, dx, cutoff):
    n_y, n_x = seed.shape
    n = n_y * n_x
    d = np.full(n, np.inf)
    state = np.zeros(n, np.int8)  # 0 far, 1 trial, 2 accepted, 3 frozen seed
    cap = 5 * n + 16
    hv = np.empty(cap)
    hk = np.empty(cap, np.int64)
    size = 0
    flat = seed.ravel()
    for k in range(n):
        if np.isfinite(flat[k]):
            d[k] = flat[k]
            state[k] = 3
            size = _push(hv, hk, size, d[k], k)
    while size > 0:
        v, k, size = _pop(hv, hk, size)
        if state[k] == 2 or v > d[k]:
            continue
        state[k] = 2
        if v > cutoff:
            continue
        i, j = k // n_x, k % n_x
        for di, dj in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            ii, jj = i + di, j + dj
            if ii < 0 or ii >= n_y or jj < 0 or jj >= n_x:
                continue
            kk = ii * n_x + jj
            if state[kk] >= 2:
                continue
            # smallest accepted neighbour along each axis
            a = np.inf
            if jj > 0 and state[kk - 1] >= 2:
                a = d[kk - 1]
            if jj < n_x - 1 and state[kk + 1] >= 2 and d[kk + 1] < a:
                a = d[kk + 1]
            b = np.inf
            if ii > 0 and state[kk - n_x] >= 2:
                b = d[kk - n_x]
            if ii < n_y - 1 and state[kk + n_x] >= 2 and d[kk + n_x] < b:
                b = d[kk + n_x]
            if abs(a - b) >= dx or not (np.isfinite(a) and np.isfinite(b)):
                cand = min(a, b) + dx
            else:
                cand = 0.5 * (a + b + math.sqrt(2.0 * dx * dx - (a - b) ** 2))
            if cand < d[kk]:
                d[kk] = cand
                state[kk] = 1
                size = _push(hv, hk, size, cand, kk)
    for k in range(n):
        if state[k] != 2 and state[k] != 3:
            d[k] = cutoff
        elif d[k] > cutoff:
            d[k] = cutoff
    return d.reshape(n_y, n_x)


def fast_march_dense(seed: np.ndarray, dx: float, cutoff: float = np.inf) -> np.ndarray:
    """Fast marching from a dense seed array (``inf`` marks non-seed nodes).

    Seed values are kept fixed.  With a finite ``cutoff`` the front stops
    once it passes that distance and unreached nodes get ``cutoff``.
    """
    seed = np.ascontiguousarray(seed, dtype=float)
    if not np.isfinite(seed).any():
        raise ValueError("fast marching needs at least one seed")
    if np.any(seed[np.isfinite(seed)] < 0):
        raise ValueError("seed values must be nonnegative")
    return _march(seed, float(dx), float(cutoff))


def fast_march(seeds, grid: GridSpec, cutoff: float = np.inf) -> ScalarField:
    """Unsigned distance field from ``[((i, j), value), ...]`` seeds."""
    if len(seeds) == 0:
        raise ValueError("fast marching needs at least one seed")
    dense = np.full(grid.shape, np.inf)
    for (i, j), v in seeds:
        dense[i, j] = min(dense[i, j], v)
    return ScalarField(grid, fast_march_dense(dense, grid.dx, cutoff))


@nb.njit(cache=True)
def _gradient_seeds(w, dx, near):
    n_y, n_x = w.shape
    out = np.full((n_y, n_x), np.inf)
    for i in range(n_y):
        for j in range(n_x):
            if not near[i, j]:
                continue
            if j == 0:
                gx = (w[i, 1] - w[i, 0]) / dx
            elif j == n_x - 1:
                gx = (w[i, j] - w[i, j - 1]) / dx
            else:
                gx = (w[i, j + 1] - w[i, j - 1]) / (2.0 * dx)
            if i == 0:
                gy = (w[1, j] - w[0, j]) / dx
            elif i == n_y - 1:
                gy = (w[i, j] - w[i - 1, j]) / dx
            else:
                gy = (w[i + 1, j] - w[i - 1, j]) / (2.0 * dx)
            g = math.sqrt(gx * gx + gy * gy)
            if g > 0.0:
                out[i, j] = abs(w[i, j]) / g
    return out


def gradient_seeds(w, dx: float, width: int = 1) -> np.ndarray:
    """Seed distances ``|w| / |grad w|`` near the zero level of ``w``.

    Covers nodes within ``width`` grid steps of a sign change.  Accurate to
    second order when ``w`` is close to a distance function, which is the
    case for the minimizers produced by the scheme.  Nodes where the
    gradient estimate is unusable fall back to axis interpolation.
    """
    from .geometry import _dilate

    w = np.ascontiguousarray(_values(w), dtype=float)
    axis = _axis_seeds(w, dx)
    near = np.isfinite(axis)
    if not near.any():
        raise EmptyInterfaceError()
    band = _dilate(near, width - 1)
    out = _gradient_seeds(w, dx, band)
    fallback = near & ~np.isfinite(out)
    out[fallback] = axis[fallback]
    return out


def signed_distance(level, grid: GridSpec | None = None, *, seeds: np.ndarray | None = None,
                    cutoff: float = np.inf) -> SignedDistanceField:
    """Signed distance, negative inside ``{level <= 0}``.

    By default the narrow band is seeded with axis interpolation of
    ``level``; ``seeds`` overrides that with a dense array of unsigned
    distances (``inf`` off the band).
    """
    if isinstance(level, ScalarField):
        grid = level.grid
    if grid is None:
        raise TypeError("grid is required for raw arrays")
    w = _values(level)
    inside = w <= 0.0
    if inside.all() or not inside.any():
        raise EmptyInterfaceError()
    if seeds is None:
        dense = np.full(grid.shape, np.inf)
        for (i, j), v in narrow_band_seed(w, grid):
            dense[i, j] = v
    else:
        dense = seeds
    d = fast_march_dense(dense, grid.dx, cutoff)
    d = np.where(inside, -d, d)
    return SignedDistanceField(ScalarField(grid, d), float(np.abs(d).max()))
