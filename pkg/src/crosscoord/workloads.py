"""Random instance generators shared by the test suite and the benchmark scripts."""

from __future__ import annotations

import itertools

import numpy as np

from .geometry import GeometryConfig, IntersectionModel, build_intersection
from .optimizer import ConflictInput, MilpProblem, assemble
from .scenario import Departure, Scenario


def random_milp(
    rng: np.random.Generator,
    n_max: int = 8,
    p_max: int = 16,
    l_range: tuple[float, float] = (20.0, 300.0),
    bounds: tuple[float, float] = (5.0, 20.0),
    l_enter: float = 4.0,
    l_safe: float = 5.0,
) -> tuple[list[ConflictInput], int, tuple[float, float]]:
    """Up to ``p_max`` conflicts over distinct vehicle pairs among at most ``n_max`` vehicles."""
    n = int(rng.integers(1, n_max + 1))
    pairs = list(itertools.combinations(range(n), 2))
    p = int(rng.integers(0, min(p_max, len(pairs)) + 1))
    chosen = rng.choice(len(pairs), size=p, replace=False) if p else []
    conflicts = []
    for k in sorted(chosen):
        i, j = pairs[k]
        li, lj = rng.uniform(*l_range, size=2)
        conflicts.append(ConflictInput(i, j, float(li), float(lj), l_enter, l_safe))
    return conflicts, n, bounds


def snapshot_problem(
    rng: np.random.Generator,
    model: IntersectionModel | None = None,
    vehicle_length: float = 4.5,
    bounds: tuple[float, float] = (5.0, 20.0),
) -> MilpProblem:
    """One vehicle per coordinated movement at a random point upstream of its conflicts."""
    model = model or build_intersection(GeometryConfig())
    lanes = [m.id for m in model.coordinated]
    arcs = {}
    for mid in lanes:
        path = model.movement(mid)
        room = [
            cp.offset_for(mid) - model.conflict_frame(path.approach_length, mid, cp, vehicle_length)[1]
            for cp in model.conflicts_of(mid)
        ]
        arcs[mid] = float(rng.uniform(0.0, max(min(room, default=path.approach_length) - 1.0, 0.0)))
    conflicts = []
    for cp in model.conflicts:
        a, b = cp.pair
        if a not in arcs or b not in arcs:
            continue
        la, l_enter, l_safe = model.conflict_frame(
            model.movement(a).approach_length - arcs[a], a, cp, vehicle_length
        )
        lb, _, _ = model.conflict_frame(model.movement(b).approach_length - arcs[b], b, cp, vehicle_length)
        conflicts.append(ConflictInput(lanes.index(a), lanes.index(b), la, lb, l_enter, l_safe))
    return assemble(conflicts, len(lanes), bounds)


def random_subset(
    rng: np.random.Generator,
    size: int | None = None,
    v0_range: tuple[float, float] = (8.0, 18.0),
    spread: float = 8.0,
    bounds: tuple[float, float] = (5.0, 20.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Initial and optimal velocities for one synchronized subset."""
    size = int(rng.integers(1, 9)) if size is None else size
    v0 = rng.uniform(*v0_range, size=size)
    v_opt = np.clip(v0 + rng.uniform(-spread, spread, size=size), *bounds)
    return v0, v_opt


def fuzz_scenario(seed: int, max_per_lane: int = 5, gap_range=(1.5, 6.0), **overrides) -> Scenario:
    """Random departures on every movement with per-vehicle initial speeds."""
    rng = np.random.default_rng(seed)
    geometry = overrides.pop("geometry", GeometryConfig())
    deps = []
    for mid in geometry.movements:
        t = rng.uniform(0.0, 3.0)
        for _ in range(int(rng.integers(0, max_per_lane + 1))):
            deps.append(Departure(mid, round(float(t), 1), round(float(rng.uniform(8.0, 20.0)), 2)))
            t += rng.uniform(*gap_range)
    deps.sort(key=lambda d: d.depart_time)
    return Scenario(geometry=geometry, departures=tuple(deps), seed=seed, **{"max_time": 300.0, **overrides})
