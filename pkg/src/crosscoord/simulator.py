"""Fixed-step world: spawning, car-following, coordination rounds and safety audit.

Vehicles on coordinated lanes hold their speed (braking for the leader and
for a stop line just upstream of their first conflict zone) until a round
commits them to a synchronized profile. Committed vehicles then follow their
profile exactly. Right turns never interact with the MILP and drive freely.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import IntersectionModel, build_intersection
from .optimizer import ConflictInput, assemble, pairwise_feasible, priority_matrix, solve
from .planner import (
    Leader,
    PlanMember,
    PlannerParams,
    PlanningError,
    VelocityProfile,
    Window,
    plan,
    profile_eval,
)
from .scenario import Scenario
from .selector import extract_subset

log = logging.getLogger(__name__)

PENDING = "pending"
COMMITTED = "committed"
FREE = "free"  # exempt movements
DONE = "done"

STOP_BUFFER = 0.5  # meters between the stop line and the entry threshold
OVERLAP_TOL = 1e-6  # seconds
SEED_DELAY = 0.05  # first delay tried for a subset that already cruises at its targets


@dataclass
class Vehicle:
    id: str
    movement: str
    spawn_time: float
    arc: float
    speed: float
    status: str
    profile: VelocityProfile | None = None
    profile_base: float = 0.0
    round: int | None = None
    exit_time: float | None = None


@dataclass
class RoundRecord:
    index: int
    time: float
    candidates: list[str]
    members: list[str]
    status: str  # committed | planner_error
    solve_time: float = 0.0
    nodes: int = 0
    rescale_count: int = 0
    virtual_delay: float = 0.0
    velocities: dict[str, float] = field(default_factory=dict)
    v0: dict[str, float] = field(default_factory=dict)
    t_acc: dict[str, float] = field(default_factory=dict)
    orders: list[tuple[str, str, str]] = field(default_factory=list)  # (cp, first, second)
    infeasible: bool = False  # the full candidate set had no feasible MILP
    message: str = ""

    def to_dict(self) -> dict:
        r6 = lambda d: {k: round(v, 6) for k, v in sorted(d.items())}  # noqa: E731
        return {
            "index": self.index,
            "time": round(self.time, 6),
            "status": self.status,
            "infeasible": self.infeasible,
            "candidates": self.candidates,
            "members": self.members,
            "nodes": self.nodes,
            "rescale_count": self.rescale_count,
            "virtual_delay": round(self.virtual_delay, 6),
            "v_opt": r6(self.velocities),
            "v0": r6(self.v0),
            "t_acc": r6(self.t_acc),
            "orders": [list(o) for o in self.orders],
            "message": self.message,
        }


@dataclass
class SimResult:
    scenario: Scenario
    trajectories: list[tuple]  # (t, id, movement, arc, speed, x, y)
    makespan: float
    rounds: list[RoundRecord]
    vehicles: dict[str, Vehicle]
    end_time: float
    completed: bool
    violations: list[dict] = field(default_factory=list)

    @property
    def committed_rounds(self) -> list[RoundRecord]:
        return [r for r in self.rounds if r.status == "committed"]

    @property
    def subset_sizes(self) -> list[int]:
        return [len(r.members) for r in self.committed_rounds]

    @property
    def rescale_counts(self) -> list[int]:
        return [r.rescale_count for r in self.committed_rounds]

    @property
    def solve_times(self) -> list[float]:
        return [r.solve_time for r in self.rounds]

    @property
    def infeasible_rounds(self) -> int:
        return sum(r.infeasible for r in self.rounds)

    @property
    def aborted_rounds(self) -> int:
        return sum(r.status == "planner_error" for r in self.rounds)

    def metrics(self) -> dict:
        return {
            "completed": self.completed,
            "makespan": round(self.makespan, 6) if math.isfinite(self.makespan) else None,
            "end_time": round(self.end_time, 6),
            "n_vehicles": len(self.vehicles),
            "n_rounds": len(self.rounds),
            "subset_sizes": self.subset_sizes,
            "rescale_counts": self.rescale_counts,
            "solver_nodes": [r.nodes for r in self.rounds],
            "infeasible_rounds": self.infeasible_rounds,
            "aborted_rounds": self.aborted_rounds,
            "violations": self.violations,
            "rounds": [r.to_dict() for r in self.rounds],
        }


class World:
    def __init__(self, scenario: Scenario, model: IntersectionModel | None = None):
        self.sc = scenario
        self.model = model or build_intersection(scenario.geometry)
        self.params = PlannerParams(
            a_max=scenario.a_max,
            k_rescale=scenario.k_rescale,
            max_rescales=scenario.max_rescales,
            seed_delay=SEED_DELAY,
        )
        self.lanes = [m.id for m in self.model.coordinated]  # MILP column order
        self.lane_index = {mid: k for k, mid in enumerate(self.lanes)}
        self.paths = {m.id: m for m in self.model.movements}
        self.cps = {mid: self.model.conflicts_of(mid) for mid in self.paths}
        self.l_enter = self.model.config.conflict_half_width + scenario.vehicle_length / 2 + self.model.enter_margin
        self.l_safe = self.model.config.conflict_half_width + scenario.vehicle_length / 2 + self.model.safe_margin
        # where a vehicle may be removed: past its last conflict zone (or the path end)
        self.done_arc = {}
        self.stop_arc = {}
        for mid, path in self.paths.items():
            cps = self.cps[mid]
            if cps:
                s = [cp.offset_for(mid) for cp in cps]
                self.done_arc[mid] = max(s) + self.l_safe
                self.stop_arc[mid] = min(s) - self.l_enter - STOP_BUFFER
            else:
                self.done_arc[mid] = path.approach_length
                self.stop_arc[mid] = math.inf
        rng = np.random.default_rng(scenario.seed)
        self.queue = []
        counters: dict[str, int] = {}
        for d in scenario.departures:
            counters[d.movement] = counters.get(d.movement, 0) + 1
            v0 = d.v0 if d.v0 is not None else scenario.v0_default
            if scenario.v0_jitter > 0:
                v0 = float(np.clip(v0 + rng.uniform(-1, 1) * scenario.v0_jitter, 0.1, scenario.v_max))
            self.queue.append((d.depart_time, f"{d.movement}-{counters[d.movement]}", d.movement, v0))
        self.step_index = 0
        self.vehicles: dict[str, Vehicle] = {}
        self.active: dict[str, list[Vehicle]] = {mid: [] for mid in self.paths}  # front first
        self.last_leave: dict[str, float] = {}
        self.ramp_end = -math.inf
        self.rounds: list[RoundRecord] = []
        self.trajectories: list[tuple] = []

    @property
    def t(self) -> float:
        return round(self.step_index * self.sc.dt, 9)

    # --- bookkeeping ---------------------------------------------------------------

    def spawn(self) -> None:
        """Admit due departures; a departure waits while its lane entrance is occupied."""
        waiting, blocked = [], set()
        for item in self.queue:
            due, vid, mid, v0 = item
            if due > self.t + 1e-9:
                waiting.append(item)
                continue
            lane = self.active[mid]
            room = lane[-1].arc - self.sc.vehicle_length if lane else math.inf
            if mid in blocked or room < 0:
                blocked.add(mid)
                waiting.append(item)
                continue
            speed = min(v0, room / (self.sc.dt + self.sc.headway))
            status = FREE if self.paths[mid].exempt else PENDING
            veh = Vehicle(vid, mid, self.t, 0.0, speed, status)
            self.vehicles[vid] = veh
            lane.append(veh)
        self.queue = waiting

    def retire(self) -> None:
        for mid, lane in self.active.items():
            keep = []
            for veh in lane:
                if veh.arc >= self.done_arc[mid] - 1e-9:
                    veh.status = DONE
                    veh.exit_time = self._exit_time(veh)
                else:
                    keep.append(veh)
            self.active[mid] = keep

    def _exit_time(self, veh: Vehicle) -> float:
        if veh.profile is not None:
            return veh.profile.time_at_distance(self.done_arc[veh.movement] - veh.profile_base)
        return self.t

    def record(self) -> None:
        t = self.t
        for mid in self.paths:
            path = self.paths[mid]
            for veh in self.active[mid]:
                x, y = path.point_at(veh.arc)
                self.trajectories.append((t, veh.id, mid, veh.arc, veh.speed, x, y))

    def finished(self) -> bool:
        return not self.queue and not any(self.active.values())

    # --- motion --------------------------------------------------------------------

    def advance(self) -> None:
        sc = self.sc
        t_next = round((self.step_index + 1) * sc.dt, 9)
        for mid, lane in self.active.items():
            leader_arc = math.inf
            for veh in lane:  # front to back, so the leader is already advanced
                if veh.status == COMMITTED:
                    d, v = profile_eval(veh.profile, t_next)
                    veh.arc, veh.speed = veh.profile_base + d, v
                else:
                    target = veh.speed
                    if veh.status == FREE:
                        target = min(veh.speed + sc.a_max * sc.dt, sc.v_max)
                    caps = [target]
                    if math.isfinite(leader_arc):
                        room = leader_arc - veh.arc - sc.vehicle_length
                        caps.append(room / (sc.dt + sc.headway))
                    if veh.status == PENDING:
                        room = self.stop_arc[mid] - veh.arc
                        caps.append(math.sqrt(2 * sc.a_max * max(room, 0.0)))
                        caps.append(room / sc.dt)
                    veh.speed = max(min(caps), 0.0)
                    veh.arc += veh.speed * sc.dt
                leader_arc = veh.arc
        self.step_index += 1

    # --- coordination ----------------------------------------------------------------

    def round_due(self) -> bool:
        cands = [v for v in (self._candidate(mid) for mid in self.lanes) if v is not None]
        if not cands:
            return False
        if self.t >= self.ramp_end - 1e-9:
            return True
        # a candidate closing on its stop line is committed early enough to absorb a delay smoothly
        return any(self._must_brake_soon(v) for v in cands)

    def _must_brake_soon(self, veh: Vehicle) -> bool:
        room = self.stop_arc[veh.movement] - veh.arc
        return veh.speed**2 / (2 * self.sc.a_max) + veh.speed * self.sc.commit_lead >= room

    def _candidate(self, mid: str) -> Vehicle | None:
        for veh in self.active[mid]:
            if veh.status == PENDING:
                dist = self.paths[mid].distance_to_center(veh.arc)
                return veh if dist <= self.sc.coordination_radius else None
        return None

    def _problem(self, cands: dict[str, Vehicle]):
        conflicts, cp_of = [], []
        for cp in self.model.conflicts:
            a, b = cp.pair
            if a in cands and b in cands:
                la = cp.offset_for(a) - cands[a].arc
                lb = cp.offset_for(b) - cands[b].arc
                conflicts.append(
                    ConflictInput(self.lane_index[a], self.lane_index[b], la, lb, self.l_enter, self.l_safe)
                )
                cp_of.append(cp)
        return assemble(conflicts, len(self.lanes), (self.sc.v_min, self.sc.v_max)), cp_of

    def _urgency(self, cands: dict[str, Vehicle]) -> list[str]:
        """Candidates ordered by remaining room before their first conflict zone."""
        return sorted(cands, key=lambda m: (self.stop_arc[m] - cands[m].arc, self.lane_index[m]))

    def _feasible_core(self, cands: dict[str, Vehicle]) -> dict[str, Vehicle]:
        """Greedy subset, most urgent first, whose MILP stays feasible."""
        core: dict[str, Vehicle] = {}
        for mid in self._urgency(cands):
            trial = {**core, mid: cands[mid]}
            problem, _ = self._problem(trial)
            if pairwise_feasible(problem) and solve(problem).optimal:
                core = trial
        return core

    def _leader(self, veh: Vehicle) -> Leader | None:
        lane = self.active[veh.movement]
        k = lane.index(veh)
        if k == 0:
            return None
        ahead = lane[k - 1]  # the candidate is the front-most pending vehicle, so this one is committed
        if ahead.profile is None:
            return None
        until = ahead.profile.time_at_distance(self.done_arc[ahead.movement] - ahead.profile_base)
        return Leader(ahead.profile, ahead.profile_base - veh.arc, self.sc.vehicle_length, until)

    def _plan_members(self, members, cands, sol):
        plan_in = []
        for mid in members:
            veh = cands[mid]
            windows = [
                Window(cp.key, cp.offset_for(mid) - veh.arc, self.l_enter, self.l_safe) for cp in self.cps[mid]
            ]
            plan_in.append(
                PlanMember(mid, float(sol.velocities[self.lane_index[mid]]), veh.speed, windows, self._leader(veh))
            )
        return plan(plan_in, self.last_leave, self.t, self.params)

    def coordination_round(self) -> RoundRecord:
        sc, t = self.sc, self.t
        cands = {mid: self._candidate(mid) for mid in self.lanes}
        cands = {mid: v for mid, v in cands.items() if v is not None}
        rec = RoundRecord(len(self.rounds), t, [v.id for v in cands.values()], [], "committed")
        self.rounds.append(rec)

        problem, cp_of = self._problem(cands)
        sol = solve(problem)
        rec.solve_time, rec.nodes = sol.solve_time, sol.nodes
        if not sol.optimal:
            # waiting vehicles do not move, so retrying the same set would never succeed
            rec.infeasible = True
            cands = self._feasible_core(cands)
            problem, cp_of = self._problem(cands)
            sol = solve(problem)
            rec.message = f"full set infeasible; fell back to {sorted(v.id for v in cands.values())}"
            log.info("t=%.2f round %d: %s", t, rec.index, rec.message)
        s = priority_matrix(sol, problem.conflict_index, len(self.lanes))
        flag = extract_subset(sol.velocities, s, sc.v_max)
        members = [mid for mid in self._urgency(cands) if flag[self.lane_index[mid]] == 1]
        rec.velocities = {cands[m].id: float(sol.velocities[self.lane_index[m]]) for m in cands}

        result, errors = None, []
        while members:
            try:
                result = self._plan_members(members, cands, sol)
                break
            except PlanningError as exc:
                errors.append(str(exc))
                members = members[:-1]  # the least urgent member waits
        if errors:
            rec.message = "; ".join(filter(None, [rec.message, *errors]))
        if result is None:
            rec.status = "planner_error"
            log.info("t=%.2f round %d aborted: %s", t, rec.index, rec.message)
            return rec

        for k, (i, j, _col) in enumerate(problem.conflict_index):
            a, b = self.lanes[i], self.lanes[j]
            if a in members and b in members:
                first, second = (a, b) if sol.binaries[k] >= 0.5 else (b, a)
                rec.orders.append((cp_of[k].key, cands[first].id, cands[second].id))

        for mid in members:
            veh = cands[mid]
            veh.status = COMMITTED
            veh.profile = result.profiles[mid]
            veh.profile_base = veh.arc
            veh.round = rec.index
            for cp, (_entry, leave) in result.occupancy[mid].items():
                self.last_leave[cp] = max(self.last_leave.get(cp, -math.inf), leave)
        self.ramp_end = max([self.ramp_end, t, *(p.end_time for p in result.profiles.values())])
        members = sorted(members, key=self.lane_index.get)
        rec.members = [cands[m].id for m in members]
        rec.v0 = {cands[m].id: cands[m].speed for m in members}
        rec.t_acc = {cands[m].id: result.t_acc[m] for m in members}
        rec.rescale_count = result.rescale_count
        rec.virtual_delay = result.virtual_delay
        log.info("t=%.2f round %d commits %s", t, rec.index, rec.members)
        return rec


def step(world: World) -> None:
    """One tick: spawn, maybe coordinate, record, retire, then move to the next tick."""
    world.spawn()
    if world.round_due():
        world.coordination_round()
    world.record()
    world.retire()  # after recording, so every threshold crossing is bracketed by samples
    world.advance()


def run(scenario: Scenario, model: IntersectionModel | None = None) -> SimResult:
    world = World(scenario, model)
    while True:
        world.spawn()
        if world.round_due():
            world.coordination_round()
        world.record()
        world.retire()
        if world.finished() or world.t >= scenario.max_time:
            break
        world.advance()
    completed = world.finished()
    exits = [v.exit_time for v in world.vehicles.values() if v.exit_time is not None]
    makespan = max(exits, default=0.0) if completed else math.inf
    res = SimResult(
        scenario, world.trajectories, makespan, world.rounds, world.vehicles, world.t, completed
    )
    res.violations = check_safety(res, world.model)
    return res


# --- auditing --------------------------------------------------------------------------


def _crossing_time(t, s, v, target: float) -> float | None:
    """Time the sampled trajectory passes ``target``, using cubic Hermite interpolation."""
    k = int(np.searchsorted(s, target, side="left"))
    if k == 0:
        return float(t[0]) if s[0] >= target else None
    if k >= len(s):
        return None
    t0, t1, s0, s1, v0, v1 = t[k - 1], t[k], s[k - 1], s[k], v[k - 1], v[k]
    h = t1 - t0
    if s1 - s0 <= 0:
        return float(t1)

    def pos(u):
        u2, u3 = u * u, u * u * u
        return (
            (2 * u3 - 3 * u2 + 1) * s0
            + (u3 - 2 * u2 + u) * h * v0
            + (-2 * u3 + 3 * u2) * s1
            + (u3 - u2) * h * v1
        )

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if pos(mid) < target:
            lo = mid
        else:
            hi = mid
    return float(t0 + 0.5 * (lo + hi) * h)


def occupancy_from_trajectories(result: SimResult, model: IntersectionModel):
    """{cp_key: [(vehicle_id, movement, entry, exit)]} reconstructed from sampled positions."""
    sc = result.scenario
    base = model.config.conflict_half_width + sc.vehicle_length / 2
    l_enter, l_safe = base + model.enter_margin, base + model.safe_margin
    by_vehicle: dict[str, list] = {}
    for row in result.trajectories:
        by_vehicle.setdefault(row[1], []).append(row)
    out: dict[str, list] = {cp.key: [] for cp in model.conflicts}
    for vid, rows in by_vehicle.items():
        mid = rows[0][2]
        t = np.array([r[0] for r in rows])
        s = np.array([r[3] for r in rows])
        v = np.array([r[4] for r in rows])
        for cp in model.conflicts_of(mid):
            c = cp.offset_for(mid)
            entry = _crossing_time(t, s, v, c - l_enter)
            if entry is None:
                continue
            exit_ = _crossing_time(t, s, v, c + l_safe)
            if exit_ is None:
                veh = result.vehicles[vid]
                exit_ = veh.exit_time if veh.exit_time is not None else math.inf
            out[cp.key].append((vid, mid, entry, exit_))
    return out


def check_safety(result: SimResult, model: IntersectionModel) -> list[dict]:
    """Every pair of vehicles on conflicting movements whose windows overlap at a conflict point."""
    violations = []
    for cp_key, occ in occupancy_from_trajectories(result, model).items():
        for k, (va, ma, ea, xa) in enumerate(occ):
            for vb, mb, eb, xb in occ[k + 1 :]:
                if ma == mb:
                    continue
                start, end = max(ea, eb), min(xa, xb)
                if start < end - OVERLAP_TOL:
                    violations.append(
                        {
                            "cp": cp_key,
                            "vehicles": sorted([va, vb]),
                            "time": round(float(start), 6),
                            "overlap": round(float(end - start), 6),
                        }
                    )
    violations.sort(key=lambda d: (d["time"], d["cp"], d["vehicles"]))
    return violations


def check_priority_realization(result: SimResult, model: IntersectionModel) -> list[tuple]:
    """Planned orders that the trajectories did not honour."""
    occ = occupancy_from_trajectories(result, model)
    windows = {(cp, vid): (e, x) for cp, rows in occ.items() for vid, _m, e, x in rows}
    bad = []
    for rec in result.committed_rounds:
        for cp, first, second in rec.orders:
            (_, x_first), (e_second, _) = windows[(cp, first)], windows[(cp, second)]
            if x_first > e_second + OVERLAP_TOL:
                bad.append((rec.index, cp, first, second))
    return bad


def min_lane_gaps(result: SimResult) -> dict[str, float]:
    """Smallest bumper-to-bumper gap observed on each lane."""
    length = result.scenario.vehicle_length
    by_time: dict[tuple[float, str], list[float]] = {}
    for t, _vid, mid, arc, *_ in result.trajectories:
        by_time.setdefault((t, mid), []).append(arc)
    gaps: dict[str, float] = {}
    for (_t, mid), arcs in by_time.items():
        if len(arcs) > 1:
            arcs = sorted(arcs)
            g = min(b - a for a, b in zip(arcs, arcs[1:])) - length
            gaps[mid] = min(gaps.get(mid, math.inf), g)
    return gaps


# --- output ----------------------------------------------------------------------------

CSV_HEADER = ("t", "vehicle_id", "movement", "arc_position", "speed", "x", "y")


def write_trajectories(result: SimResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, vid, mid, arc, v, x, y in result.trajectories:
            w.writerow([f"{t:.3f}", vid, mid, f"{arc:.4f}", f"{v:.4f}", f"{x:.4f}", f"{y:.4f}"])


def write_outputs(result: SimResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": out / "trajectories.csv",
        "metrics": out / "metrics.json",
        "timings": out / "timings.json",
    }
    write_trajectories(result, paths["trajectories"])
    paths["metrics"].write_text(json.dumps(result.metrics(), indent=2, sort_keys=True) + "\n")
    timings = {"solve_times_ms": [round(1000 * s, 3) for s in result.solve_times]}
    paths["timings"].write_text(json.dumps(timings, indent=2) + "\n")
    return paths
