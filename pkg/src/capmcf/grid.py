"""Uniform rectangular grids, nodal scalar fields and central differences.

Nodes are indexed ``(i, j)`` with row ``i`` along ``y`` and column ``j``
along ``x``; arrays are stored row-major with shape ``(n_y, n_x)``.  Python
indices are zero-based, so node ``(i, j)`` sits at
``x = alpha_x + (j + 1) * dx`` and ``y = alpha_y + (i + 1) * dx``.
Rows/columns ``0`` and ``n - 1`` are the boundary nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "ConfigError",
    "GridSpec",
    "ScalarField",
    "Ghosts",
    "make_grid",
    "mirror_ghosts",
    "central_gradient",
    "dump_field",
    "load_field",
]


class ConfigError(ValueError):
    """Raised for invalid user-facing configuration."""


@dataclass(frozen=True)
class GridSpec:
    alpha_x: float
    beta_x: float
    alpha_y: float
    beta_y: float
    n_x: int
    n_y: int
    dx: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def x(self) -> np.ndarray:
        return self.alpha_x + self.dx * np.arange(1, self.n_x + 1)

    @property
    def y(self) -> np.ndarray:
        return self.alpha_y + self.dx * np.arange(1, self.n_y + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` coordinate arrays of shape ``(n_y, n_x)``."""
        return np.meshgrid(self.x, self.y)

    @property
    def area(self) -> float:
        return (self.beta_x - self.alpha_x) * (self.beta_y - self.alpha_y)

    @property
    def diameter(self) -> float:
        return math.hypot(self.beta_x - self.alpha_x, self.beta_y - self.alpha_y)

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.beta_x - self.alpha_x + self.beta_y - self.alpha_y)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask

    def boundary_weights(self) -> np.ndarray:
        """Boundary measure carried by each node (zero in the interior).

        Wall nodes carry ``dx``; each corner closes two walls and carries
        ``2 dx``.  The weights sum to the exact perimeter of the rectangle.
        """
        w = np.zeros(self.shape)
        w[0, :] += self.dx
        w[-1, :] += self.dx
        w[:, 0] += self.dx
        w[:, -1] += self.dx
        return w


def make_grid(alpha_x: float, beta_x: float, alpha_y: float, beta_y: float,
              n_x: int, n_y: int) -> GridSpec:
    """Build a square-cell grid on ``[alpha_x, beta_x] x [alpha_y, beta_y]``.

    >>> make_grid(0, 2, 0, 1, 800, 400).dx
    0.0025
    """
    if not (alpha_x < beta_x and alpha_y < beta_y):
        raise ConfigError(
            f"domain bounds must be ordered, got x=[{alpha_x}, {beta_x}], "
            f"y=[{alpha_y}, {beta_y}]")
    if int(n_x) != n_x or int(n_y) != n_y or n_x < 3 or n_y < 3:
        raise ConfigError(f"n_x and n_y must be integers >= 3, got {n_x}, {n_y}")
    dx_x = (beta_x - alpha_x) / n_x
    dx_y = (beta_y - alpha_y) / n_y
    if not math.isclose(dx_x, dx_y, rel_tol=1e-12, abs_tol=0.0):
        raise ConfigError(
            f"cells are not square: x spacing {dx_x!r} vs y spacing {dx_y!r}")
    return GridSpec(float(alpha_x), float(beta_x), float(alpha_y),
                    float(beta_y), int(n_x), int(n_y), dx_x)


@dataclass(frozen=True)
class ScalarField:
    """Nodal values on a grid.  The value array is made read-only."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


class Ghosts(NamedTuple):
    """Fictitious values just outside each wall.

    ``left[i]`` is ``u[i, -1]``, ``right[i]`` is ``u[i, n_x]``,
    ``bottom[j]`` is ``u[-1, j]`` and ``top[j]`` is ``u[n_y, j]``.
    """

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray


def mirror_ghosts(u: np.ndarray) -> Ghosts:
    """Homogeneous Neumann ghosts: ``u_{i,0} = u_{i,2}`` and so on."""
    u = np.asarray(u)
    return Ghosts(u[:, 1].copy(), u[:, -2].copy(), u[1, :].copy(), u[-2, :].copy())


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def central_gradient(u, dx: float | None = None, ghosts: Ghosts | None = None):
    """Central differences ``(u[i,j+1] - u[i,j-1]) / 2dx`` in both directions.

    Interior nodes never touch ``ghosts``; wall nodes read the neighbour
    outside the grid from ``ghosts`` (mirror ghosts if omitted, i.e. zero
    normal derivative).  Returns ScalarFields when given one, arrays
    otherwise.
    """
    grid = u.grid if isinstance(u, ScalarField) else None
    if dx is None:
        if grid is None:
            raise TypeError("dx is required for raw arrays")
        dx = grid.dx
    a = _values(u)
    g = mirror_ghosts(a) if ghosts is None else ghosts
    gx = np.empty_like(a)
    gy = np.empty_like(a)
    inv = 0.5 / dx
    gx[:, 1:-1] = (a[:, 2:] - a[:, :-2]) * inv
    gx[:, 0] = (a[:, 1] - g.left) * inv
    gx[:, -1] = (g.right - a[:, -2]) * inv
    gy[1:-1, :] = (a[2:, :] - a[:-2, :]) * inv
    gy[0, :] = (a[1, :] - g.bottom) * inv
    gy[-1, :] = (g.top - a[-2, :]) * inv
    if grid is not None:
        return ScalarField(grid, gx), ScalarField(grid, gy)
    return gx, gy


def dump_field(path, u, grid: GridSpec | None = None) -> None:
    """Write ``u`` as text: header ``n_y n_x dx`` then one row per line."""
    if isinstance(u, ScalarField):
        grid = u.grid
    a = _values(u)
    n_y, n_x = a.shape
    dx = grid.dx if grid is not None else float("nan")
    lines = [f"{n_y} {n_x} {dx!r}"]
    lines.extend(" ".join(repr(float(v)) for v in row) for row in a)
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> tuple[np.ndarray, float]:
    """Read a field dump; returns ``(values, dx)``."""
    with open(path) as fh:
        header = fh.readline().split()
        n_y, n_x, dx = int(header[0]), int(header[1]), float(header[2])
        values = np.loadtxt(fh, ndmin=2)
    if values.shape != (n_y, n_x):
        raise ValueError(f"{path}: expected {n_y}x{n_x} values, got {values.shape}")
    return values, dx
