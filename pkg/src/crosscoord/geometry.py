"""Intersection geometry: movements, conflict points and the local conflict frame.

Movements are built from straight segments and circular arcs. Every quantity
used downstream is an arc length measured from the movement's spawn point, so
curved paths need no special handling once the conflict points are known.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

LEGS = {
    "E": (1.0, 0.0),
    "N": (0.0, 1.0),
    "W": (-1.0, 0.0),
    "S": (0.0, -1.0),
}

# incoming/outgoing lane index per turn type, counted from the road centerline
LANE_OF_TURN = {"left": 0, "straight": 1, "right": 2}
LANES_PER_LEG = 3

DEFAULT_MOVEMENTS = ("ES", "EW", "NE", "NS", "WN", "WE", "SW", "SN")

_EPS = 1e-9


class GeometryError(ValueError):
    """Raised for geometries outside the crossing-only model."""


class DownstreamError(ValueError):
    """The vehicle has already passed the conflict point."""


def _left(h):
    return (-h[1], h[0])


def _right(h):
    return (h[1], -h[0])


def _add(a, b, k=1.0):
    return (a[0] + k * b[0], a[1] + k * b[1])


@dataclass(frozen=True)
class Line:
    p0: tuple[float, float]
    p1: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        t = s / self.length
        x = self.p0[0] + t * (self.p1[0] - self.p0[0])
        y = self.p0[1] + t * (self.p1[1] - self.p0[1])
        return x, y


@dataclass(frozen=True)
class Arc:
    center: tuple[float, float]
    radius: float
    theta0: float
    sweep: float  # signed, radians; positive is counter-clockwise

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        theta = self.theta0 + math.copysign(1.0, self.sweep) * s / self.radius
        return (
            self.center[0] + self.radius * np.cos(theta),
            self.center[1] + self.radius * np.sin(theta),
        )

    def contains_angle(self, theta: float, tol: float = 1e-9) -> float | None:
        """Arc length of the point at polar angle ``theta``, or None if off the arc."""
        d = (theta - self.theta0) * math.copysign(1.0, self.sweep)
        d = math.fmod(d, 2 * math.pi)
        if d < -tol:
            d += 2 * math.pi
        if d <= abs(self.sweep) + tol:
            return min(max(d, 0.0), abs(self.sweep)) * self.radius
        if d >= 2 * math.pi - tol:
            return 0.0
        return None


Segment = Line | Arc


@dataclass(frozen=True)
class MovementPath:
    id: str
    origin_leg: str
    dest_leg: str
    segments: tuple[Segment, ...]
    approach_length: float
    turn: str

    def __post_init__(self):
        if self.origin_leg == self.dest_leg:
            raise GeometryError(f"movement {self.id}: U-turns are not modelled")
        if self.total_length <= 0:
            raise GeometryError(f"movement {self.id}: empty centerline")

    @property
    def exempt(self) -> bool:
        # right turns drive freely and are never coordinated
        return self.turn == "right"

    @property
    def total_length(self) -> float:
        return sum(seg.length for seg in self.segments)

    def _offsets(self):
        return np.cumsum([0.0] + [seg.length for seg in self.segments])

    def point_at(self, s):
        """Planar position(s) at arc length ``s`` (scalar or array), clamped to the path."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        s_arr = np.clip(s_arr, 0.0, self.total_length)
        offs = self._offsets()
        idx = np.clip(np.searchsorted(offs, s_arr, side="right") - 1, 0, len(self.segments) - 1)
        x = np.empty_like(s_arr)
        y = np.empty_like(s_arr)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if m.any():
                x[m], y[m] = seg.point_at(s_arr[m] - offs[k])
        if np.ndim(s) == 0:
            return float(x[0]), float(y[0])
        return x, y

    def sample(self, step: float = 0.01) -> np.ndarray:
        """Dense polyline (K x 2) with spacing at most ``step`` along the path."""
        n = max(2, int(math.ceil(self.total_length / step)) + 1)
        s = np.linspace(0.0, self.total_length, n)
        x, y = self.point_at(s)
        return np.column_stack([x, y])

    def distance_to_center(self, arc_position: float) -> float:
        return self.approach_length - arc_position


@dataclass(frozen=True)
class ConflictPoint:
    pair: tuple[str, str]
    s_i: float
    s_j: float
    half_width: float
    point: tuple[float, float] = (0.0, 0.0)

    @property
    def key(self) -> str:
        return f"{self.pair[0]}x{self.pair[1]}"

    def offset_for(self, movement: str) -> float:
        if movement == self.pair[0]:
            return self.s_i
        if movement == self.pair[1]:
            return self.s_j
        raise KeyError(f"{movement} does not pass conflict {self.key}")

    def other(self, movement: str) -> str:
        return self.pair[1] if movement == self.pair[0] else self.pair[0]


@dataclass(frozen=True)
class GeometryConfig:
    lane_width: float = 3.5
    approach_length: float = 200.0
    exit_length: float = 30.0
    movements: tuple[str, ...] = DEFAULT_MOVEMENTS
    half_width: float | None = None
    enter_margin: float = 0.0
    safe_margin: float = 1.0

    def __post_init__(self):
        for name in ("lane_width", "approach_length", "exit_length"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.half_width is not None and not self.half_width > 0:
            raise GeometryError("half_width must be positive")
        if self.enter_margin < 0:
            raise GeometryError("enter_margin must be non-negative")
        if self.safe_margin < self.enter_margin:
            raise GeometryError("safe_margin must be >= enter_margin")
        if len(set(self.movements)) != len(self.movements):
            raise GeometryError("duplicate movement ids")

    @property
    def box_half(self) -> float:
        return LANES_PER_LEG * self.lane_width

    @property
    def conflict_half_width(self) -> float:
        return self.half_width if self.half_width is not None else self.lane_width / 2


@dataclass(frozen=True)
class IntersectionModel:
    movements: tuple[MovementPath, ...]
    conflict_matrix: np.ndarray
    conflicts: tuple[ConflictPoint, ...]
    enter_margin: float = 0.0
    safe_margin: float = 1.0
    config: GeometryConfig = field(default_factory=GeometryConfig)

    @property
    def n(self) -> int:
        return len(self.movements)

    @property
    def p(self) -> int:
        return len(self.conflicts)

    @property
    def coordinated(self) -> list[MovementPath]:
        return [m for m in self.movements if not m.exempt]

    def index(self, movement: str) -> int:
        for k, m in enumerate(self.movements):
            if m.id == movement:
                return k
        raise KeyError(movement)

    def movement(self, movement: str) -> MovementPath:
        return self.movements[self.index(movement)]

    def conflicts_of(self, movement: str) -> list[ConflictPoint]:
        return [cp for cp in self.conflicts if movement in cp.pair]

    def conflict_frame(self, distance_to_center, movement, cp, vehicle_length):
        return conflict_frame(
            distance_to_center,
            self.movement(movement),
            cp,
            vehicle_length,
            enter_margin=self.enter_margin,
            safe_margin=self.safe_margin,
        )


def classify_turn(origin: str, dest: str) -> str:
    u_o, u_d = LEGS[origin], LEGS[dest]
    h = (-u_o[0], -u_o[1])
    if u_d == h:
        return "straight"
    if u_d == _left(h):
        return "left"
    if u_d == _right(h):
        return "right"
    raise GeometryError(f"movement {origin}{dest}: U-turns are not modelled")


def build_movement(mid: str, cfg: GeometryConfig) -> MovementPath:
    if len(mid) != 2 or mid[0] not in LEGS or mid[1] not in LEGS:
        raise GeometryError(f"bad movement id {mid!r}; expected two of E/N/W/S")
    origin, dest = mid[0], mid[1]
    if origin == dest:
        raise GeometryError(f"movement {mid}: U-turns are not modelled")
    turn = classify_turn(origin, dest)
    lane = LANE_OF_TURN[turn]
    w, H = cfg.lane_width, cfg.box_half
    u_o, u_d = LEGS[origin], LEGS[dest]
    h = (-u_o[0], -u_o[1])
    off = (lane + 0.5) * w

    spawn = _add((cfg.approach_length * u_o[0], cfg.approach_length * u_o[1]), _right(h), off)
    entry = _add((H * u_o[0], H * u_o[1]), _right(h), off)
    exit_ = _add((H * u_d[0], H * u_d[1]), _right(u_d), off)
    end = _add(((H + cfg.exit_length) * u_d[0], (H + cfg.exit_length) * u_d[1]), _right(u_d), off)

    if turn == "straight":
        segments = (Line(spawn, end),)
    else:
        n1 = _left(h) if turn == "left" else _right(h)
        n2 = _left(u_d) if turn == "left" else _right(u_d)
        dn = (n1[0] - n2[0], n1[1] - n2[1])
        dx = (exit_[0] - entry[0], exit_[1] - entry[1])
        radius = (dx[0] * dn[0] + dx[1] * dn[1]) / (dn[0] ** 2 + dn[1] ** 2)
        if radius <= 0:
            raise GeometryError(f"movement {mid}: lane layout leaves no room for the turn")
        center = _add(entry, n1, radius)
        theta0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
        sweep = math.pi / 2 if turn == "left" else -math.pi / 2
        segments = (Line(spawn, entry), Arc(center, radius, theta0, sweep), Line(exit_, end))
    return MovementPath(mid, origin, dest, segments, cfg.approach_length, turn)


# --- analytic segment intersections -------------------------------------------------


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _line_line(a: Line, b: Line):
    r = (a.p1[0] - a.p0[0], a.p1[1] - a.p0[1])
    q = (b.p1[0] - b.p0[0], b.p1[1] - b.p0[1])
    d = (b.p0[0] - a.p0[0], b.p0[1] - a.p0[1])
    denom = _cross(r, q)
    la, lb = a.length, b.length
    if abs(denom) <= 1e-12 * la * lb:
        if abs(_cross(d, r)) <= 1e-9 * la:
            # collinear: overlapping pieces mean the two movements share road
            t0 = (d[0] * r[0] + d[1] * r[1]) / la**2
            t1 = t0 + (q[0] * r[0] + q[1] * r[1]) / la**2
            lo, hi = min(t0, t1), max(t0, t1)
            if hi > _EPS and lo < 1 - _EPS:
                raise GeometryError("collinear overlap")
        return []
    t = _cross(d, q) / denom
    u = _cross(d, r) / denom
    tol = 1e-12
    if -tol <= t <= 1 + tol and -tol <= u <= 1 + tol:
        t, u = min(max(t, 0.0), 1.0), min(max(u, 0.0), 1.0)
        return [(t * la, u * lb)]
    return []


def _line_arc(a: Line, b: Arc):
    dx, dy = a.p1[0] - a.p0[0], a.p1[1] - a.p0[1]
    fx, fy = a.p0[0] - b.center[0], a.p0[1] - b.center[1]
    qa = dx * dx + dy * dy
    qb = 2 * (fx * dx + fy * dy)
    qc = fx * fx + fy * fy - b.radius**2
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        return []
    root = math.sqrt(disc)
    out = []
    for t in sorted({(-qb - root) / (2 * qa), (-qb + root) / (2 * qa)}):
        if -1e-12 <= t <= 1 + 1e-12:
            px, py = a.p0[0] + t * dx, a.p0[1] + t * dy
            s_b = b.contains_angle(math.atan2(py - b.center[1], px - b.center[0]))
            if s_b is not None:
                out.append((min(max(t, 0.0), 1.0) * a.length, s_b))
    return out


def _arc_arc(a: Arc, b: Arc):
    dx, dy = b.center[0] - a.center[0], b.center[1] - a.center[1]
    d = math.hypot(dx, dy)
    if d < 1e-12:
        if abs(a.radius - b.radius) < 1e-9:
            lo_a, hi_a = sorted((a.theta0, a.theta0 + a.sweep))
            lo_b, hi_b = sorted((b.theta0, b.theta0 + b.sweep))
            for shift in (-2 * math.pi, 0.0, 2 * math.pi):
                if min(hi_a, hi_b + shift) - max(lo_a, lo_b + shift) > _EPS:
                    raise GeometryError("coincident arcs")
        return []
    if d > a.radius + b.radius or d < abs(a.radius - b.radius):
        return []
    x = (d * d + a.radius**2 - b.radius**2) / (2 * d)
    h2 = a.radius**2 - x * x
    h = math.sqrt(max(h2, 0.0))
    mx, my = a.center[0] + x * dx / d, a.center[1] + x * dy / d
    pts = {(mx + h * dy / d, my - h * dx / d), (mx - h * dy / d, my + h * dx / d)}
    out = []
    for px, py in pts:
        s_a = a.contains_angle(math.atan2(py - a.center[1], px - a.center[0]))
        s_b = b.contains_angle(math.atan2(py - b.center[1], px - b.center[0]))
        if s_a is not None and s_b is not None:
            out.append((s_a, s_b))
    return out


def _segment_hits(a: Segment, b: Segment):
    if isinstance(a, Line) and isinstance(b, Line):
        return _line_line(a, b)
    if isinstance(a, Line) and isinstance(b, Arc):
        return _line_arc(a, b)
    if isinstance(a, Arc) and isinstance(b, Line):
        return [(sa, sb) for sb, sa in _line_arc(b, a)]
    return _arc_arc(a, b)


def path_crossings(a: MovementPath, b: MovementPath) -> list[tuple[float, float]]:
    """All (s_a, s_b) crossing locations between two paths, deduplicated."""
    offs_a, offs_b = a._offsets(), b._offsets()
    hits = []
    for (ka, sa), (kb, sb) in itertools.product(enumerate(a.segments), enumerate(b.segments)):
        try:
            local = _segment_hits(sa, sb)
        except GeometryError as exc:
            raise GeometryError(f"movements {a.id} and {b.id} merge or diverge ({exc})") from None
        hits.extend((offs_a[ka] + u, offs_b[kb] + v) for u, v in local)
    hits.sort()
    out: list[tuple[float, float]] = []
    for h in hits:
        if not out or abs(h[0] - out[-1][0]) > 1e-6:
            out.append(h)
    return out


def compute_conflicts(paths, half_width: float = 1.75):
    """Conflict matrix and conflict points for a list of movements.

    Exempt (right-turn) movements get an all-zero row and column.
    """
    n = len(paths)
    c = np.zeros((n, n), dtype=int)
    points = []
    for i, j in itertools.combinations(range(n), 2):
        a, b = paths[i], paths[j]
        hits = path_crossings(a, b)
        if a.exempt or b.exempt or not hits:
            continue
        if len(hits) > 1:
            raise GeometryError(
                f"movements {a.id} and {b.id} cross {len(hits)} times; "
                "a single conflict point per pair is required"
            )
        s_a, s_b = hits[0]
        for s, path in ((s_a, a), (s_b, b)):
            if not (0.0 < s < path.total_length):
                raise GeometryError(f"conflict {a.id}x{b.id} sits on an endpoint of {path.id}")
        c[i, j] = c[j, i] = 1
        points.append(ConflictPoint((a.id, b.id), s_a, s_b, half_width, a.point_at(s_a)))
    return c, points


def build_intersection(config: GeometryConfig | None = None) -> IntersectionModel:
    cfg = config or GeometryConfig()
    paths = [build_movement(mid, cfg) for mid in cfg.movements]
    # distinct destination lanes per movement: anything sharing one would merge
    seen: dict[tuple[str, str], str] = {}
    for p in paths:
        key = (p.dest_leg, p.turn)
        if key in seen:
            raise GeometryError(f"movements {seen[key]} and {p.id} merge into the same lane")
        seen[key] = p.id
    c, points = compute_conflicts(paths, cfg.conflict_half_width)
    return IntersectionModel(
        tuple(paths), c, tuple(points), cfg.enter_margin, cfg.safe_margin, cfg
    )


def conflict_frame(
    distance_to_center: float,
    movement: MovementPath,
    cp: ConflictPoint,
    vehicle_length: float,
    *,
    enter_margin: float = 0.0,
    safe_margin: float = 1.0,
) -> tuple[float, float, float]:
    """Map a vehicle's distance-to-center into the conflict point's local frame.

    Returns ``(L_prime, L_enter, L_safe)``: distance from the vehicle centroid to
    the conflict point along the path, and the occupancy thresholds before and
    after it.
    """
    if safe_margin < enter_margin:
        raise ValueError("safe_margin must be >= enter_margin")
    arc_position = movement.approach_length - distance_to_center
    l_prime = cp.offset_for(movement.id) - arc_position
    if l_prime < -1e-12:
        raise DownstreamError(f"{movement.id} is {-l_prime:.3f} m past conflict {cp.key}")
    base = cp.half_width + vehicle_length / 2
    return max(l_prime, 0.0), base + enter_margin, base + safe_margin
