"""Time stepping: signed distance -> capillary split Bregman -> threshold.

Each step replaces the current set ``E`` by ``{w < 0}`` where ``w``
minimizes ``C_beta(u) + 1/(2h) ||u - d_E||^2``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .bregman import BoundaryField, BregmanState, SolverParams, solve_subproblem
from .capillary import ContactAngleSpec, build_beta, detect_contact_arcs
from .distance import gradient_seeds, signed_distance
from .geometry import EmptyInterfaceError, Polygon, polygon_band_seed, sign_grid
from .grid import GridSpec, ScalarField, dump_field, load_field, make_grid

__all__ = [
    "EvolutionState",
    "StepOptions",
    "SchemeError",
    "initial_state",
    "step",
    "evolve",
    "run",
    "RunResult",
    "save_snapshot",
    "load_snapshot",
]

log = logging.getLogger(__name__)

TIE_EPS = 1e-12


class SchemeError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepOptions:
    """How a step is carried out beyond the solver parameters.

    ``fixed_beta`` freezes the boundary data instead of rebuilding it from
    the contact points every step.  ``band`` (in grid steps) limits fast
    marching and the solver to nodes within that distance of the interface;
    ``None`` works on the whole grid.
    """

    fixed_beta: BoundaryField | None = None
    band: float | None = None
    seed_width: int = 1


@dataclass
class EvolutionState:
    grid: GridSpec
    k: int
    h: float
    level: np.ndarray                  # negative inside the current set
    w: np.ndarray | None = None        # last minimizer
    beta: BoundaryField | None = None
    status: str = "running"            # running | extinct | full
    polygon: Polygon | None = None     # initial data, used only at k == 0
    bregman: BregmanState | None = None
    iterations: int = 0
    residual: float = float("nan")
    converged: bool = True
    ties: int = 0
    history: list = field(default_factory=list)

    @property
    def t(self) -> float:
        return self.k * self.h

    @property
    def inside(self) -> np.ndarray:
        return self.level < 0.0 if self.k > 0 else self.level <= 0.0

    @property
    def terminal(self) -> bool:
        return self.status != "running"


def initial_state(grid: GridSpec, h: float, *, polygon: Polygon | None = None,
                  level: np.ndarray | None = None) -> EvolutionState:
    """Starting state from a polygon (inside = nonzero winding) or a level function."""
    if (polygon is None) == (level is None):
        raise ValueError("give exactly one of polygon or level")
    if polygon is not None:
        lv = sign_grid(polygon, grid).values.copy()
    else:
        lv = np.array(level, dtype=float)
        if lv.shape != grid.shape:
            raise ValueError("level shape does not match the grid")
    return EvolutionState(grid=grid, k=0, h=h, level=lv, polygon=polygon)


def _distance(state: EvolutionState, opts: StepOptions):
    grid = state.grid
    cutoff = np.inf if opts.band is None else opts.band * grid.dx
    if state.k == 0 and state.polygon is not None:
        seeds = polygon_band_seed(state.polygon, ScalarField(grid, state.level),
                                  width=max(opts.seed_width, 2))
        level = state.level
    else:
        # strict threshold of the previous minimizer: zero counts as outside
        level = np.where(state.level == 0.0, 1e-300, state.level)
        seeds = gradient_seeds(level, grid.dx, opts.seed_width)
    return signed_distance(level, grid, seeds=seeds, cutoff=cutoff)


def step(state: EvolutionState, spec: ContactAngleSpec | None, params: SolverParams,
         opts: StepOptions = StepOptions(), *, verbose: bool = False,
         stream=None) -> EvolutionState:
    """Advance one time step.

    Raises :class:`SchemeError` if the current set is empty or the whole
    domain.  The returned state is flagged ``extinct`` / ``full`` when the
    new set is empty / everything.
    """
    if state.terminal:
        raise SchemeError(f"cannot step from a terminal state ({state.status})")
    inside = state.inside
    if not inside.any():
        raise SchemeError("current set is empty")
    if inside.all():
        raise SchemeError("current set fills the domain")
    grid = state.grid
    try:
        sdf = _distance(state, opts)
    except EmptyInterfaceError as exc:
        raise SchemeError(str(exc)) from exc
    f = sdf.values

    if opts.fixed_beta is not None:
        beta = opts.fixed_beta
    elif spec is None:
        beta = BoundaryField.zeros(grid)
    else:
        arcs = detect_contact_arcs(f, grid, spec.rho)
        beta = build_beta(spec, arcs, state.k * state.h, grid)

    active = None
    if opts.band is not None:
        active = np.abs(f) < opts.band * grid.dx
    warm = state.bregman if params.warm_start else None
    energy = None
    if verbose:
        from .capillary import chambolle_energy

        def energy(u):
            return chambolle_energy(u, f, beta, params.h, grid.dx)

    res = solve_subproblem(f, beta, params, dx=grid.dx, state=warm, active=active,
                           verbose=verbose, energy=energy, stream=stream)
    w = res.u
    new_inside = w < 0.0
    status = "running"
    if not new_inside.any():
        status = "extinct"
    elif new_inside.all():
        status = "full"
    ties = int(np.count_nonzero(np.abs(w) < TIE_EPS))
    if ties:
        log.warning("step %d: %d nodes with |w| < %g", state.k + 1, ties, TIE_EPS)
    return replace(state, k=state.k + 1, level=w, w=w, beta=beta, status=status,
                   polygon=None, bregman=res.state if params.warm_start else None,
                   iterations=res.iterations, residual=res.residual,
                   converged=res.converged, ties=ties, history=res.history)


def evolve(state: EvolutionState, spec: ContactAngleSpec | None, params: SolverParams,
           T: float, opts: StepOptions = StepOptions(), **kw):
    """Yield the initial state and every subsequent state up to time ``T``.

    Stops early on extinction or when the set fills the domain.
    """
    yield state
    n_steps = int(math.floor(T / state.h + 1e-9))
    while state.k < n_steps and not state.terminal:
        state = step(state, spec, params, opts, **kw)
        yield state


@dataclass
class RunResult:
    """Outcome of :func:`run`: emitted frames, the last state, solver counts.

    ``failure`` holds the error message when the run stopped on an
    exception; the frames emitted up to then are kept.
    """

    frames: list
    final: EvolutionState
    iterations: list
    failure: str | None = None
    frame_steps: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failure is None


def run(config, on_frame: Callable[[EvolutionState], None] | None = None, *,
        state: EvolutionState | None = None, keep_frames: bool = True,
        verbose: bool = False, stream=None) -> RunResult:
    """Evolve the experiment described by an ``ExperimentConfig``.

    Frames are the states with ``k`` a multiple of ``config.stride`` plus
    the final state; each is passed to ``on_frame``.  ``state`` resumes from
    a snapshot instead of the configured initial data.
    """
    grid = config.grid
    params = config.solver_params()
    opts = StepOptions(fixed_beta=config.fixed_beta(), band=config.band,
                       seed_width=config.seed_width)
    spec = config.contact_spec()
    if state is None:
        state = initial_state(grid, params.h, polygon=config.initial_polygon())
    frames, iterations, frame_steps = [], [], []
    last_emitted = -1
    failure = None

    def emit(st):
        nonlocal last_emitted
        if st.k == last_emitted:
            return
        last_emitted = st.k
        frame_steps.append(st.k)
        if keep_frames:
            frames.append(st)
        if on_frame is not None:
            on_frame(st)

    current = state
    try:
        for current in evolve(state, spec, params, config.T, opts,
                              verbose=verbose, stream=stream):
            if current.k > state.k:
                iterations.append(current.iterations)
            if current.k % config.stride == 0:
                emit(current)
    except Exception as exc:  # keep the partial trajectory
        failure = f"{type(exc).__name__}: {exc}"
        log.error("run failed at step %d: %s", current.k + 1, failure)
    emit(current)
    return RunResult(frames, current, iterations, failure, frame_steps)


# ---------------------------------------------------------------------------
# snapshots

_SNAPSHOT_FIELDS = ("level", "beta", "d_x", "d_y", "b_x", "b_y")


def save_snapshot(directory, state: EvolutionState) -> Path:
    """Write ``state`` to ``directory`` as field dumps plus ``state.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = state.grid
    meta = {"k": state.k, "h": state.h, "status": state.status,
            "grid": [g.alpha_x, g.beta_x, g.alpha_y, g.beta_y, g.n_x, g.n_y],
            "has_bregman": state.bregman is not None}
    if state.k == 0 and state.polygon is not None:
        meta["polygon"] = state.polygon.vertices.tolist()
    dump_field(d / "level.txt", state.level, g)
    if state.beta is not None:
        dump_field(d / "beta.txt", state.beta.values, g)
    if state.bregman is not None:
        for name in _SNAPSHOT_FIELDS[2:]:
            dump_field(d / f"{name}.txt", getattr(state.bregman, name), g)
    (d / "state.json").write_text(json.dumps(meta, indent=1) + "\n")
    return d


def load_snapshot(directory) -> EvolutionState:
    """Inverse of :func:`save_snapshot`."""
    d = Path(directory)
    meta = json.loads((d / "state.json").read_text())
    grid = make_grid(*meta["grid"])
    level, _ = load_field(d / "level.txt")
    beta = None
    if (d / "beta.txt").exists():
        beta = BoundaryField(grid, load_field(d / "beta.txt")[0])
    bregman = None
    if meta["has_bregman"]:
        arrs = {n: load_field(d / f"{n}.txt")[0] for n in _SNAPSHOT_FIELDS[2:]}
        bregman = BregmanState(level.copy(), **arrs)
    polygon = Polygon(np.array(meta["polygon"])) if "polygon" in meta else None
    k = int(meta["k"])
    return EvolutionState(grid=grid, k=k, h=float(meta["h"]), level=level,
                          w=level if k > 0 else None, beta=beta,
                          status=meta["status"], polygon=polygon, bregman=bregman)
