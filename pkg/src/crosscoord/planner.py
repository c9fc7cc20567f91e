"""Synchronous velocity profiles and the transfer condition between rounds.

Every member of a subset gets a ramp after which it moves exactly as if it
had driven at its optimal velocity starting ``tau`` seconds late. Because
``tau`` is common to the subset, the relative timing the MILP planned at
each conflict point is preserved.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np


class PlanningError(RuntimeError):
    pass


class UnsynchronizableError(PlanningError):
    pass


class TransferError(PlanningError):
    pass


@dataclass(frozen=True)
class PlannerParams:
    a_max: float = 2.5
    k_rescale: float = 1.2
    max_rescales: int = 100
    seed_delay: float | None = None  # delay tried when tau = 0 still violates; None raises instead
    v_floor: float = 0.0  # speed a deep dip holds at; zero means waiting at a standstill
    flat_ramp_fraction: float = 0.1  # ramps gentler than this share of a_max become dips

    def __post_init__(self):
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")
        if not self.k_rescale > 1:
            raise ValueError("k_rescale must be greater than 1")
        if self.max_rescales < 1:
            raise ValueError("max_rescales must be at least 1")
        if self.v_floor < 0:
            raise ValueError("v_floor must be non-negative")
        if self.seed_delay is not None and not self.seed_delay > 0:
            raise ValueError("seed_delay must be positive")


@dataclass(frozen=True)
class VelocityProfile:
    start_time: float
    segments: tuple[tuple[float, float, float], ...]  # (duration, start_speed, accel)
    terminal_speed: float
    v0: float

    @property
    def ramp_duration(self) -> float:
        return sum(seg[0] for seg in self.segments)

    @property
    def ramp_distance(self) -> float:
        return sum(d * v + 0.5 * a * d * d for d, v, a in self.segments)

    @property
    def delay(self) -> float:
        """Lag behind a constant-speed run at the terminal speed once the ramp ends."""
        return self.ramp_duration - self.ramp_distance / self.terminal_speed

    @property
    def end_time(self) -> float:
        return self.start_time + self.ramp_duration

    def max_abs_accel(self) -> float:
        return max((abs(a) for _, _, a in self.segments), default=0.0)

    def time_at_distance(self, x: float) -> float:
        """Absolute time at which the vehicle has covered ``x`` meters."""
        if x <= 0:
            return self.start_time
        t = self.start_time
        for dur, v, a in self.segments:
            seg_len = dur * v + 0.5 * a * dur * dur
            if x <= seg_len:
                if abs(a) < 1e-15:
                    return t + x / v
                # stable root of 0.5 a s^2 + v s - x = 0
                return t + 2 * x / (v + math.sqrt(max(v * v + 2 * a * x, 0.0)))
            x -= seg_len
            t += dur
        return self.start_time + self.delay + (x + self.ramp_distance) / self.terminal_speed


def profile_eval(profile: VelocityProfile, t: float) -> tuple[float, float]:
    """(distance since start, speed) at absolute time ``t``."""
    if t < profile.start_time - 1e-12:
        raise ValueError(f"t={t} precedes profile start {profile.start_time}")
    tau = max(t - profile.start_time, 0.0)
    dist = 0.0
    for dur, v, a in profile.segments:
        if tau <= dur:
            return dist + v * tau + 0.5 * a * tau * tau, v + a * tau
        dist += v * dur + 0.5 * a * dur * dur
        tau -= dur
    return dist + profile.terminal_speed * tau, profile.terminal_speed


def binding_delay(v_opt, v0, a_max: float) -> float:
    """Smallest common delay every member can absorb within ``a_max``."""
    v_opt = np.asarray(v_opt, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    gain = np.clip(v_opt - v0, 0.0, None)
    return float(np.max(gain**2 / (2 * a_max * v_opt), initial=0.0))


def _dip(v0: float, v_opt: float, tau: float, a: float, v_floor: float):
    """Decelerate, optionally hold, accelerate back; total deficit tau * v_opt."""
    depth = math.sqrt(max(a * tau * v_opt + 0.5 * (v0 - v_opt) ** 2, 0.0))
    u = v_opt - depth
    if u >= v_floor:
        segs = [((v0 - u) / a, v0, -a), ((v_opt - u) / a, u, a)]
    else:
        # a vehicle already creeping below the floor waits at a standstill instead
        u = v_floor if v0 >= v_floor else 0.0
        if v_opt <= u:
            raise UnsynchronizableError(
                f"cannot absorb delay {tau:.3f}s from v0={v0:.3f} to v_opt={v_opt:.3f}"
            )
        base = (2 * (v_opt - u) ** 2 - (v0 - v_opt) ** 2) / (2 * a)
        hold = (tau * v_opt - base) / (v_opt - u)
        segs = [((v0 - u) / a, v0, -a), (hold, u, 0.0), ((v_opt - u) / a, u, a)]
    return tuple(s for s in segs if s[0] > 0)


def member_profile(v0: float, v_opt: float, tau: float, params: PlannerParams, t_clock: float = 0.0):
    a = params.a_max
    if v_opt <= 0 or v0 < 0:
        raise UnsynchronizableError(f"need v_opt > 0 and v0 >= 0, got {v_opt}, {v0}")
    if tau <= 0 and v_opt == v0:
        return VelocityProfile(t_clock, (), v_opt, v0)
    segs = None
    if v_opt > v0:
        gain = v_opt - v0
        dur = 2 * tau * v_opt / gain
        segs = ((dur, v0, gain / dur),)
        # a near-flat ramp over a tiny speed gain can last minutes; a dip is bounded
        if v0 > 0 and gain / dur < params.flat_ramp_fraction * a:
            try:
                dip = _dip(v0, v_opt, tau, a, params.v_floor)
            except UnsynchronizableError:
                dip = None
            if dip is not None and sum(s[0] for s in dip) < dur:
                segs = dip
    else:
        if v0 <= 0:
            raise UnsynchronizableError("stationary vehicle cannot dip")
        segs = _dip(v0, v_opt, tau, a, params.v_floor)
    return VelocityProfile(t_clock, segs, v_opt, v0)


def sync_accel_times(v_opt, v0, a_max: float, params: PlannerParams | None = None):
    """Ramp durations and the common virtual delay for one subset."""
    params = params or PlannerParams(a_max=a_max)
    if params.a_max != a_max:
        params = dataclasses.replace(params, a_max=a_max)
    v_opt = np.asarray(v_opt, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if np.any(v_opt <= 0) or np.any(v0 < 0):
        raise UnsynchronizableError("velocities must be positive")
    tau = binding_delay(v_opt, v0, a_max)
    profiles = [member_profile(a, b, tau, params) for a, b in zip(v0, v_opt)]
    return np.array([p.ramp_duration for p in profiles]), tau


@dataclass(frozen=True)
class Window:
    """A member's view of one conflict point: distance ahead and thresholds."""

    cp: str
    d: float
    l_enter: float
    l_safe: float


@dataclass(frozen=True)
class Leader:
    """The committed vehicle ahead of a member on the same lane."""

    profile: VelocityProfile
    offset: float  # its distance ahead of the member, measured from its own profile start
    min_gap: float  # centre-to-centre distance that must be kept
    until: float  # absolute time after which it no longer shares the lane


@dataclass
class PlanMember:
    lane: str
    v_opt: float
    v0: float
    windows: list[Window]
    leader: Leader | None = None


def closes_on_leader(profile: VelocityProfile, leader: Leader, step: float = 0.05) -> bool:
    """True if the member gets closer than ``min_gap`` to its leader before ``until``."""
    times = np.arange(profile.start_time, max(leader.until, profile.start_time) + step, step)
    for t in times:
        ahead = leader.offset + profile_eval(leader.profile, max(t, leader.profile.start_time))[0]
        if ahead - profile_eval(profile, t)[0] < leader.min_gap - 1e-9:
            return True
    return False


@dataclass
class PlanningResult:
    profiles: dict[str, VelocityProfile]
    t_acc: dict[str, float]
    virtual_delay: float
    t_arrive: dict[str, float]
    t_leave: dict[str, float]
    occupancy: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    rescale_count: int = 0


def occupancy_window(profile: VelocityProfile, w: Window) -> tuple[float, float]:
    """(entry, exit) absolute times for one conflict point."""
    return (
        profile.time_at_distance(w.d - w.l_enter),
        profile.time_at_distance(w.d + w.l_safe),
    )


def arrival_leave_times(profiles, windows):
    """Per-lane earliest entry / latest exit plus the full occupancy map.

    ``profiles`` and ``windows`` are dicts keyed by lane.
    """
    t_arrive, t_leave, occ = {}, {}, {}
    for lane, prof in profiles.items():
        occ[lane] = {}
        for w in windows[lane]:
            occ[lane][w.cp] = occupancy_window(prof, w)
        if occ[lane]:
            t_arrive[lane] = min(e for e, _ in occ[lane].values())
            t_leave[lane] = max(x for _, x in occ[lane].values())
        else:
            t_arrive[lane] = math.inf
            t_leave[lane] = -math.inf
    return t_arrive, t_leave, occ


def _transfer_violations(occ, last_leave) -> float:
    """Largest amount by which a member enters before a previous occupant left."""
    worst = -math.inf
    for lane_occ in occ.values():
        for cp, (entry, _exit) in lane_occ.items():
            prev = last_leave.get(cp, -math.inf)
            worst = max(worst, prev - entry)
    return worst


def plan(
    members: list[PlanMember],
    last_leave: dict[str, float],
    t_clock: float,
    params: PlannerParams,
) -> PlanningResult:
    """Synchronized profiles for one subset, delayed until the previous one clears.

    ``last_leave`` maps conflict point keys to the latest exit time recorded
    by any vehicle committed in an earlier round. Members with a ``leader``
    are also delayed until they no longer close on it.
    """
    if not members:
        return PlanningResult({}, {}, 0.0, {}, {})
    v_opt = np.array([m.v_opt for m in members])
    v0 = np.array([m.v0 for m in members])
    tau = binding_delay(v_opt, v0, params.a_max)
    windows = {m.lane: m.windows for m in members}

    rescales = 0
    while True:
        profiles = {m.lane: member_profile(m.v0, m.v_opt, tau, params, t_clock) for m in members}
        t_arrive, t_leave, occ = arrival_leave_times(profiles, windows)
        tailgates = any(
            m.leader is not None and closes_on_leader(profiles[m.lane], m.leader) for m in members
        )
        if _transfer_violations(occ, last_leave) < 0 and not tailgates:
            break
        if rescales >= params.max_rescales:
            raise TransferError(f"transfer-condition unsatisfiable after {rescales} rescales")
        if tau <= 0:
            # scaling a zero delay does nothing
            if params.seed_delay is None:
                raise TransferError("transfer-condition unsatisfiable: members need no ramp, so K-scaling is a no-op")
            tau = params.seed_delay
        else:
            tau *= params.k_rescale
        rescales += 1

    # ramps may let a member reach a conflict point before its delay is fully built up
    lanes = list(occ)
    for x, y in ((a, b) for k, a in enumerate(lanes) for b in lanes[k + 1 :]):
        for cp in occ[x].keys() & occ[y].keys():
            (ex, xx), (ey, xy) = occ[x][cp], occ[y][cp]
            if max(ex, ey) < min(xx, xy) - 1e-9:
                raise PlanningError(f"{x} and {y} would share {cp} during their ramps")

    return PlanningResult(
        profiles,
        {lane: p.ramp_duration for lane, p in profiles.items()},
        tau,
        t_arrive,
        t_leave,
        occ,
        rescales,
    )
