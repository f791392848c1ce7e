"""Run artifacts: contour CSV, field dumps, PGM quick-looks and the manifest."""
from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import extract_zero_contour, polygon_band_seed
from .grid import ScalarField, dump_field

__all__ = [
    "CSV_HEADER",
    "OutputError",
    "frame_level",
    "frame_contours",
    "emit_frame",
    "read_contours",
    "write_pgm",
    "write_manifest",
]

CSV_HEADER = "frame,t,poly_id,vertex_id,x,y"


class OutputError(OSError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def frame_level(state) -> np.ndarray:
    """Level function whose zero set is the frame's interface.

    At ``k = 0`` with polygonal data this is the exact signed distance to
    the polygon on a band around it, so the first frame reproduces the
    polygon rather than a sign-snapped staircase.
    """
    if state.k == 0 and state.polygon is not None:
        sign = np.where(state.level <= 0.0, -1.0, 1.0)
        dist = polygon_band_seed(state.polygon, ScalarField(state.grid, sign), width=2)
        far = 3.0 * state.grid.dx
        return sign * np.where(np.isfinite(dist), dist, far)
    return state.level


def frame_contours(state) -> list[np.ndarray]:
    return extract_zero_contour(frame_level(state), state.grid)


def _write(path: Path, mode: str, text: str) -> None:
    try:
        with open(path, mode) as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_pgm(path, w, *, maxval: int = 255) -> None:
    """Plain (P2) grayscale image of ``w``: black inside, white outside.

    Values are scaled symmetrically by ``max |w|`` so zero maps to mid-gray;
    the first image row is the top of the domain.
    """
    a = np.asarray(w, dtype=float)
    s = float(np.abs(a).max()) or 1.0
    g = np.rint(0.5 * maxval * (1.0 + np.clip(a / s, -1.0, 1.0))).astype(int)
    g = g[::-1]
    n_y, n_x = g.shape
    lines = ["P2", f"{n_x} {n_y}", str(maxval)]
    lines.extend(" ".join(map(str, row)) for row in g)
    _write(Path(path), "w", "\n".join(lines) + "\n")


def emit_frame(state, config, out_dir=None) -> list[Path]:
    """Write one frame's artifacts and return the paths touched.

    Appends the frame's contour vertices to ``contours.csv`` (creating it
    with a header if needed).  When ``config.dump_fields`` is set and
    ``k`` is a multiple of ``config.stride`` the field is also written to
    ``w_<k>.txt`` (and ``w_<k>.pgm`` if ``config.pgm``).

    Raises :class:`OutputError` naming the offending path.
    """
    out = Path(out_dir if out_dir is not None else config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc.strerror or exc}") from exc
    csv = out / "contours.csv"
    rows = []
    if not csv.exists():
        rows.append(CSV_HEADER)
    t = _fmt(state.k * state.h)
    for pid, c in enumerate(frame_contours(state)):
        for vid, (x, y) in enumerate(c):
            rows.append(f"{state.k},{t},{pid},{vid},{_fmt(x)},{_fmt(y)}")
    _write(csv, "a", "".join(r + "\n" for r in rows))
    touched = [csv]
    if config.dump_fields and state.k % config.stride == 0:
        level = frame_level(state)
        p = out / f"w_{state.k}.txt"
        try:
            dump_field(p, level, state.grid)
        except OSError as exc:
            raise OutputError(f"cannot write {p}: {exc.strerror or exc}") from exc
        touched.append(p)
        if config.pgm:
            q = out / f"w_{state.k}.pgm"
            write_pgm(q, level)
            touched.append(q)
    return touched


def read_contours(path) -> dict[int, dict]:
    """Parse ``contours.csv`` into ``{frame: {"t": t, "polys": [array, ...]}}``."""
    frames: dict[int, dict] = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            fr, t, pid, vid, x, y = line.rstrip("\n").split(",")
            fd = frames.setdefault(int(fr), {"t": float(t), "polys": {}})
            fd["polys"].setdefault(int(pid), []).append((float(x), float(y)))
    for fd in frames.values():
        fd["polys"] = [np.array(fd["polys"][k]) for k in sorted(fd["polys"])]
    return frames


def write_manifest(out_dir, config, result) -> Path:
    """Record everything needed to replay the run plus its solver statistics."""
    out = Path(out_dir)
    man = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config.self_contained().to_dict(),
        "h": config.time_step,
        "dx": config.grid.dx,
        "steps": result.final.k,
        "t_final": result.final.k * result.final.h,
        "status": result.final.status,
        "failure": result.failure,
        "frames": list(result.frame_steps),
        "iterations": list(map(int, result.iterations)),
    }
    p = out / "manifest.json"
    _write(p, "w", json.dumps(man, indent=1) + "\n")
    return p
