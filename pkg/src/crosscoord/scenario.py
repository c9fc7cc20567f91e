"""Scenario files: JSON with geometry, departures and vehicle/controller parameters."""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .geometry import GeometryConfig, GeometryError


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Departure:
    movement: str
    depart_time: float
    v0: float | None = None


@dataclass(frozen=True)
class Scenario:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    departures: tuple[Departure, ...] = ()
    v0_default: float = 15.0
    v0_jitter: float = 0.0
    v_min: float = 5.0
    v_max: float = 20.0
    a_max: float = 2.5
    k_rescale: float = 1.2
    max_rescales: int = 100
    dt: float = 0.1
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    headway: float = 1.0
    commit_lead: float = 4.0  # seconds before braking at which a waiting candidate forces a round
    coordination_radius: float = 250.0
    max_time: float = 600.0
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt: must be positive")
        if not (self.v_max > self.v_min > 0):
            raise ScenarioError("v_min/v_max: need v_max > v_min > 0")
        for name in ("a_max", "vehicle_length", "vehicle_width", "coordination_radius", "max_time"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name}: must be positive")
        if not self.k_rescale > 1:
            raise ScenarioError("k_rescale: must be greater than 1")
        for name in ("headway", "v0_jitter", "commit_lead"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name}: must be non-negative")
        if not (0 < self.v0_default <= self.v_max):
            raise ScenarioError("v0_default: must lie in (0, v_max]")
        last: dict[str, float] = {}
        for k, d in enumerate(self.departures):
            if d.movement not in self.geometry.movements:
                raise ScenarioError(f"departures[{k}].movement: unknown movement {d.movement!r}")
            if d.depart_time < 0:
                raise ScenarioError(f"departures[{k}].depart_time: must be non-negative")
            if d.v0 is not None and not (0 < d.v0 <= self.v_max):
                raise ScenarioError(f"departures[{k}].v0: must lie in (0, v_max]")
            if d.movement in last and d.depart_time <= last[d.movement]:
                raise ScenarioError(
                    f"departures[{k}].depart_time: departures on {d.movement} must be strictly increasing"
                )
            last[d.movement] = d.depart_time


_NUM = (int, float)
_FIELD_TYPES = {
    "v0_default": _NUM,
    "v0_jitter": _NUM,
    "v_min": _NUM,
    "v_max": _NUM,
    "a_max": _NUM,
    "k_rescale": _NUM,
    "max_rescales": (int,),
    "dt": _NUM,
    "vehicle_length": _NUM,
    "vehicle_width": _NUM,
    "headway": _NUM,
    "commit_lead": _NUM,
    "coordination_radius": _NUM,
    "max_time": _NUM,
    "seed": (int,),
}
_GEOM_TYPES = {
    "lane_width": _NUM,
    "approach_length": _NUM,
    "exit_length": _NUM,
    "movements": (list,),
    "half_width": _NUM + (type(None),),
    "enter_margin": _NUM,
    "safe_margin": _NUM,
}


def _check(name, value, types):
    if isinstance(value, bool) or not isinstance(value, types):
        want = "/".join(t.__name__ for t in types)
        raise ScenarioError(f"{name}: expected {want}, got {type(value).__name__}")
    return value


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("top level: expected an object")
    unknown = set(data) - set(_FIELD_TYPES) - {"geometry", "departures"}
    if unknown:
        raise ScenarioError(f"{sorted(unknown)[0]}: unknown field")
    kwargs = {k: _check(k, v, _FIELD_TYPES[k]) for k, v in data.items() if k in _FIELD_TYPES}

    geo = data.get("geometry", {})
    if not isinstance(geo, dict):
        raise ScenarioError("geometry: expected an object")
    for k, v in geo.items():
        if k not in _GEOM_TYPES:
            raise ScenarioError(f"geometry.{k}: unknown field")
        _check(f"geometry.{k}", v, _GEOM_TYPES[k])
    geo = dict(geo)
    if "movements" in geo:
        for k, m in enumerate(geo["movements"]):
            _check(f"geometry.movements[{k}]", m, (str,))
        geo["movements"] = tuple(geo["movements"])
    try:
        kwargs["geometry"] = GeometryConfig(**geo)
    except GeometryError as exc:
        raise ScenarioError(f"geometry: {exc}") from None

    deps = data.get("departures", [])
    if not isinstance(deps, list):
        raise ScenarioError("departures: expected a list")
    parsed = []
    for k, d in enumerate(deps):
        if not isinstance(d, dict):
            raise ScenarioError(f"departures[{k}]: expected an object")
        extra = set(d) - {"movement", "depart_time", "v0"}
        if extra:
            raise ScenarioError(f"departures[{k}].{sorted(extra)[0]}: unknown field")
        for req in ("movement", "depart_time"):
            if req not in d:
                raise ScenarioError(f"departures[{k}].{req}: missing")
        parsed.append(
            Departure(
                _check(f"departures[{k}].movement", d["movement"], (str,)),
                float(_check(f"departures[{k}].depart_time", d["depart_time"], _NUM)),
                None
                if d.get("v0") is None
                else float(_check(f"departures[{k}].v0", d["v0"], _NUM)),
            )
        )
    # stable sort keeps file order for equal times across lanes
    kwargs["departures"] = tuple(sorted(parsed, key=lambda d: d.depart_time))
    for k in ("v0_default", "v0_jitter", "v_min", "v_max", "a_max", "k_rescale", "dt", "commit_lead"):
        if k in kwargs:
            kwargs[k] = float(kwargs[k])
    return Scenario(**kwargs)


def scenario_to_dict(sc: Scenario) -> dict:
    out = dataclasses.asdict(sc)
    out["geometry"]["movements"] = list(sc.geometry.movements)
    out["departures"] = [
        {k: v for k, v in dataclasses.asdict(d).items() if v is not None} for d in sc.departures
    ]
    return out


def _line_of(text: str, message: str) -> int | None:
    m = re.match(r"([A-Za-z_0-9]+)", message)
    if not m:
        return None
    key = m.group(1)
    for n, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return n
    return None


def bundled(name: str) -> Path | None:
    ref = resources.files("crosscoord") / "data" / name
    return Path(str(ref)) if ref.is_file() else None


def resolve_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    found = bundled(p.name)
    if found is None:
        raise FileNotFoundError(f"scenario file not found: {path}")
    return found


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` pairs (dotted keys reach into geometry) to raw scenario data."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        if parts[0] == "geometry" and len(parts) == 2:
            if parts[1] not in _GEOM_TYPES:
                raise ScenarioError(f"{key}: unknown field")
            data.setdefault("geometry", {})[parts[1]] = value
        elif len(parts) == 1 and parts[0] in _FIELD_TYPES:
            data[parts[0]] = value
        else:
            raise ScenarioError(f"{key}: unknown field")
    return data


def load_scenario(path, overrides=None, seed: int | None = None) -> Scenario:
    p = resolve_path(path)
    text = p.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        line = _line_of(text, str(exc))
        where = f"{p}:{line}" if line else str(p)
        raise ScenarioError(f"{where}: {exc}") from None
