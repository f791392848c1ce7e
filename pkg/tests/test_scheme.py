import math

import numpy as np
import pytest

from capmcf.bregman import SolverParams
from capmcf.config import parse_config
from capmcf.geometry import Polygon, extract_zero_contour, polygon_area
from capmcf.grid import make_grid
from capmcf.oracle import circle_radius
from capmcf.scheme import (SchemeError, StepOptions, evolve, initial_state,
                           load_snapshot, run, save_snapshot, step)


def fast_params(h):
    return SolverParams(h=h, tol=0.01 * h, max_iters=500, shrink="standard",
                        warm_start=True)


def disk(grid, r, cx=0.0, cy=0.0):
    X, Y = grid.mesh()
    return np.hypot(X - cx, Y - cy) - r


def radius_of(level, grid):
    polys = extract_zero_contour(level, grid)
    return math.sqrt(sum(abs(polygon_area(p)) for p in polys) / math.pi)


def test_circle_follows_area_law():
    g = make_grid(-1, 1, -1, 1, 100, 100)
    h = 0.5 * g.dx ** 2
    st = initial_state(g, h, level=disk(g, 0.6))
    r_start = radius_of(st.level, g)
    T = 0.03
    for st in evolve(st, None, fast_params(h), T, StepOptions(band=12)):
        pass
    assert st.k == round(T / h)
    expected = circle_radius(r_start, T)
    assert abs(radius_of(st.level, g) - expected) <= 1.5 * g.dx


def test_evolve_with_zero_time_yields_initial_state_only():
    g = make_grid(-1, 1, -1, 1, 20, 20)
    st = initial_state(g, 1e-3, level=disk(g, 0.5))
    states = list(evolve(st, None, fast_params(1e-3), 0.0))
    assert len(states) == 1 and states[0] is st


def test_empty_and_full_sets_are_errors():
    g = make_grid(0, 1, 0, 1, 10, 10)
    params = fast_params(1e-3)
    with pytest.raises(SchemeError, match="empty"):
        step(initial_state(g, 1e-3, level=np.ones(g.shape)), None, params)
    with pytest.raises(SchemeError, match="fills"):
        step(initial_state(g, 1e-3, level=-np.ones(g.shape)), None, params)


def test_small_circle_goes_extinct_and_stops():
    g = make_grid(-1, 1, -1, 1, 40, 40)
    h = 0.5 * g.dx ** 2
    st = initial_state(g, h, level=disk(g, 0.08))
    states = list(evolve(st, None, fast_params(h), 1.0))
    last = states[-1]
    assert last.status == "extinct"
    assert last.k < round(1.0 / h)
    assert not last.inside.any()
    with pytest.raises(SchemeError, match="terminal"):
        step(last, None, fast_params(h))


def test_nested_sets_stay_nested():
    g = make_grid(-1, 1, -1, 1, 60, 60)
    h = 0.5 * g.dx ** 2
    params = fast_params(h)
    small = evolve(initial_state(g, h, level=disk(g, 0.3, 0.05, 0.0)), None, params, 0.01)
    large = evolve(initial_state(g, h, level=disk(g, 0.6)), None, params, 0.01)
    n = 0
    for a, b in zip(small, large):
        assert not np.any(a.inside & ~b.inside)
        n += 1
    assert n == round(0.01 / h) + 1


def test_zero_values_count_as_outside_after_first_step():
    g = make_grid(-1, 1, -1, 1, 20, 20)
    level = disk(g, 0.5)
    st0 = initial_state(g, 1e-3, level=level)
    assert st0.inside[level == 0].all() if (level == 0).any() else True
    lv = level.copy()
    lv[10, 10] = 0.0
    st = initial_state(g, 1e-3, level=lv)
    assert st.inside[10, 10]
    from dataclasses import replace
    assert not replace(st, k=1).inside[10, 10]


def test_tie_counter_reports_near_zero_values():
    g = make_grid(-1, 1, -1, 1, 40, 40)
    h = 0.5 * g.dx ** 2
    st = step(initial_state(g, h, level=disk(g, 0.5)), None, fast_params(h))
    assert st.ties == int(np.count_nonzero(np.abs(st.w) < 1e-12))


def small_config(tmp_path, **kw):
    verts = [[0.5 * math.cos(a), 0.5 * math.sin(a)]
             for a in np.linspace(0, 2 * math.pi, 64, endpoint=False)]
    cfg = dict(domain=[-1, 1, -1, 1], n_x=40, n_y=40, vertices=verts, T=0.004,
               shrink="standard", warm_start=True, tol_h=0.01, band=12,
               out=str(tmp_path), stride=4)
    cfg.update(kw)
    return parse_config(cfg)


def test_run_frames_follow_stride(tmp_path):
    cfg = small_config(tmp_path)
    seen = []
    res = run(cfg, seen.append)
    n = round(cfg.T / cfg.time_step)
    assert res.ok and res.final.k == n
    expected = sorted(set(range(0, n + 1, 4)) | {n})
    assert res.frame_steps == expected == [s.k for s in seen]
    assert len(res.iterations) == n


def test_snapshot_resume_is_bit_exact(tmp_path):
    full = run(small_config(tmp_path, T=0.004)).final
    half = run(small_config(tmp_path, T=0.002)).final
    save_snapshot(tmp_path / "snap", half)
    back = load_snapshot(tmp_path / "snap")
    np.testing.assert_array_equal(back.level, half.level)
    resumed = run(small_config(tmp_path, T=0.004), state=back).final
    assert resumed.k == full.k
    np.testing.assert_array_equal(resumed.level, full.level)


def test_snapshot_at_start_keeps_polygon(tmp_path):
    cfg = small_config(tmp_path)
    st = initial_state(cfg.grid, cfg.time_step, polygon=cfg.initial_polygon())
    back = load_snapshot(save_snapshot(tmp_path / "s0", st))
    np.testing.assert_array_equal(back.polygon.vertices, st.polygon.vertices)
    assert back.k == 0 and back.bregman is None


def test_run_keeps_partial_trajectory_on_failure(tmp_path, monkeypatch):
    import capmcf.scheme as scheme

    real = scheme.step
    calls = {"n": 0}

    def flaky(state, *a, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise SchemeError("boom")
        return real(state, *a, **kw)

    monkeypatch.setattr(scheme, "step", flaky)
    res = run(small_config(tmp_path, stride=1))
    assert not res.ok and "boom" in res.failure
    assert res.final.k == 2 and res.frame_steps == [0, 1, 2]


def test_polygon_initial_state_matches_winding():
    g = make_grid(0, 1, 0, 1, 10, 10)
    sq = Polygon(np.array([[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]]))
    st = initial_state(g, 1e-3, polygon=sq)
    X, Y = g.mesh()
    inside = (X > 0.2) & (X < 0.8) & (Y > 0.2) & (Y < 0.8)
    np.testing.assert_array_equal(st.inside[inside], True)
    with pytest.raises(ValueError):
        initial_state(g, 1e-3)
