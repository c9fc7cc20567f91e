"""Numeric reference tools shared by several test modules."""

from __future__ import annotations

import math

import numpy as np

from crosscoord.planner import PlanMember, PlannerParams, Window, plan, profile_eval


def speed_trace(profile, times: np.ndarray) -> np.ndarray:
    """Piecewise-linear speed of ``profile`` at each absolute time in ``times``."""
    durs = np.array([seg[0] for seg in profile.segments])
    starts = profile.start_time + np.concatenate([[0.0], np.cumsum(durs)])
    speed = np.full(times.shape, profile.terminal_speed)
    for k, (_, v, a) in enumerate(profile.segments):
        inside = (times >= starts[k]) & (times <= starts[k + 1])
        speed[inside] = v + a * (times[inside] - starts[k])
    speed[times < profile.start_time] = profile.v0
    return speed


def integrate(profile, horizon: float, step: float = 1e-3):
    """Times, speeds and distances from integrating the speed trace at ``step``.

    The grid also contains every segment boundary, so the trapezoid rule is
    exact on the piecewise-linear speed and the result can be compared with
    closed forms at tight tolerances.
    """
    t0 = profile.start_time
    bounds = t0 + np.cumsum([0.0] + [seg[0] for seg in profile.segments])
    grid = np.union1d(t0 + np.arange(0.0, horizon + step, step), bounds[bounds <= t0 + horizon])
    speed = speed_trace(profile, grid)
    dist = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(grid))])
    return grid, speed, dist


def crossing_time(grid, speed, dist, target: float) -> float:
    """Exact time the integrated distance reaches ``target`` (speed is linear per step)."""
    k = int(np.searchsorted(dist, target))
    if k == 0:
        return float(grid[0])
    h = grid[k] - grid[k - 1]
    v0, v1 = speed[k - 1], speed[k]
    acc = (v1 - v0) / h
    rest = target - dist[k - 1]
    if abs(acc) < 1e-12:
        return float(grid[k - 1] + rest / v0)
    return float(grid[k - 1] + 2 * rest / (v0 + math.sqrt(max(v0 * v0 + 2 * acc * rest, 0.0))))


def plan_subset(v0, v_opt, a_max=2.5, windows=None, last_leave=None, t_clock=0.0, **params):
    members = [
        PlanMember(f"m{k}", float(vo), float(vi), list(windows[k]) if windows else [])
        for k, (vi, vo) in enumerate(zip(v0, v_opt))
    ]
    return plan(members, last_leave or {}, t_clock, PlannerParams(a_max=a_max, **params))


def window(cp: str, d: float, l_enter: float = 5.0, l_safe: float = 8.0) -> Window:
    return Window(cp, d, l_enter, l_safe)
