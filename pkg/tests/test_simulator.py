import math

import pytest

from crosscoord.geometry import GeometryConfig, build_intersection
from crosscoord.planner import profile_eval
from crosscoord.scenario import Departure, Scenario, load_scenario
from crosscoord.simulator import (
    COMMITTED,
    PENDING,
    SimResult,
    World,
    check_priority_realization,
    check_safety,
    min_lane_gaps,
    run,
    step,
    write_outputs,
)
from crosscoord.workloads import fuzz_scenario


def scenario(*deps, **kw):
    return Scenario(departures=tuple(Departure(*d) for d in deps), **kw)


def test_empty_scenario_ends_immediately():
    res = run(Scenario())
    assert res.completed
    assert res.makespan == 0.0 and res.end_time == 0.0
    assert res.rounds == [] and res.trajectories == []


def test_single_vehicle_closed_form():
    sc = scenario(("EW", 1.0, 15.0))
    res = run(sc)
    world = World(sc)
    # alone, the vehicle is told to reach v_max; the ramp lags it by tau behind a v_max run
    tau = (20.0 - 15.0) ** 2 / (2 * 2.5 * 20.0)
    expected = 1.0 + tau + world.done_arc["EW"] / 20.0
    assert res.completed
    assert res.makespan == pytest.approx(expected, abs=1e-9)
    (rec,) = res.rounds
    assert rec.members == ["EW-1"] and rec.velocities == {"EW-1": 20.0}
    assert rec.virtual_delay == pytest.approx(tau)


def test_nothing_spawns_before_first_departure():
    world = World(scenario(("EW", 2.0)))
    for _ in range(20):
        step(world)
    assert world.t == 2.0
    assert world.vehicles == {} and world.rounds == []
    step(world)
    assert list(world.vehicles) == ["EW-1"]
    assert world.vehicles["EW-1"].spawn_time == 2.0


def test_committed_vehicle_follows_profile_exactly():
    world = World(scenario(("EW", 0.0, 10.0), ("NS", 0.0, 12.0)))
    step(world)
    committed = [v for v in world.vehicles.values() if v.status == COMMITTED]
    assert committed
    for _ in range(25):
        step(world)
        for veh in committed:
            d, v = profile_eval(veh.profile, world.t)
            assert veh.arc == pytest.approx(veh.profile_base + d, abs=1e-12)
            assert veh.speed == pytest.approx(v, abs=1e-12)


def test_pending_follower_keeps_headway():
    sc = scenario(("EW", 0.0, 8.0), ("EW", 1.0, 20.0), commit_lead=0.0)
    world = World(sc)
    seen = False
    while world.t < 8.0:
        step(world)
        lane = world.active["EW"]
        for lead, foll in zip(lane, lane[1:]):
            if foll.status == PENDING:
                seen = True
                gap = lead.arc - foll.arc - sc.vehicle_length
                assert gap >= foll.speed * sc.headway - 1e-9
    assert seen


def test_departure_waits_for_a_clear_entrance():
    sc = scenario(("EW", 0.0, 1.0), ("EW", 0.1, 20.0), max_time=120.0)
    res = run(sc)
    assert res.completed
    assert res.vehicles["EW-2"].spawn_time > 0.1
    assert min(min_lane_gaps(res).values()) >= -1e-9


def conflicting_pair_result():
    """Two crossing vehicles forced through their shared point at the same time."""
    sc = scenario(("EW", 0.0), ("NS", 0.0))
    model = build_intersection(sc.geometry)
    cp = model.conflicts_of("EW")[[c.other("EW") for c in model.conflicts_of("EW")].index("NS")]
    rows = []
    for k in range(0, 301):
        t = round(k * 0.1, 9)
        for mid in ("EW", "NS"):
            arc = cp.offset_for(mid) - 150.0 + 10.0 * t
            x, y = model.movement(mid).point_at(arc)
            rows.append((t, f"{mid}-1", mid, arc, 10.0, x, y))
    world = World(sc)
    return SimResult(sc, rows, 30.0, [], world.vehicles, 30.0, True), model


def test_violation_detector_flags_forced_overlap():
    res, model = conflicting_pair_result()
    violations = check_safety(res, model)
    assert len(violations) == 1
    v = violations[0]
    assert v["vehicles"] == ["EW-1", "NS-1"]
    assert v["overlap"] == pytest.approx(0.9, abs=1e-6)  # L_enter + L_safe = 9 m at 10 m/s
    assert v["time"] == pytest.approx((150.0 - 4.0) / 10.0, abs=1e-6)


def test_bundled_run_is_safe_and_orders_are_realized():
    res = run(load_scenario("paper_32.json"))
    model = build_intersection(res.scenario.geometry)
    assert res.completed and len(res.vehicles) == 32
    assert res.violations == []
    assert check_priority_realization(res, model) == []
    assert min(min_lane_gaps(res).values()) >= 0.0


@pytest.mark.parametrize("seed", range(5))
def test_fuzzed_runs_are_safe(seed):
    res = run(fuzz_scenario(seed))
    assert res.completed
    assert res.violations == []
    assert min(min_lane_gaps(res).values(), default=0.0) >= -1e-9


def test_runs_are_deterministic(tmp_path):
    sc = fuzz_scenario(3, v0_jitter=0.5)
    a, b = run(sc), run(sc)
    assert a.trajectories == b.trajectories
    assert a.metrics() == b.metrics()
    pa, pb = write_outputs(a, tmp_path / "a"), write_outputs(b, tmp_path / "b")
    for key in ("trajectories", "metrics"):
        assert pa[key].read_bytes() == pb[key].read_bytes()


def test_metrics_content():
    res = run(load_scenario("paper_32.json"))
    m = res.metrics()
    assert m["n_vehicles"] == 32
    assert m["subset_sizes"] == res.subset_sizes
    assert sum(m["subset_sizes"]) == 32
    assert len(m["rescale_counts"]) == len(m["subset_sizes"])
    assert m["makespan"] == pytest.approx(res.makespan, abs=1e-6)


def test_incomplete_run_reports_no_makespan():
    res = run(scenario(("EW", 0.0, 10.0), max_time=2.0))
    assert not res.completed
    assert math.isinf(res.makespan)
    assert res.metrics()["makespan"] is None


def test_exempt_right_turn_drives_freely():
    sc = Scenario(
        geometry=GeometryConfig(movements=("EW", "NS", "EN")),
        departures=(Departure("EN", 0.0, 10.0),),
    )
    res = run(sc)
    assert res.completed and res.rounds == []
    assert max(r[4] for r in res.trajectories) == pytest.approx(20.0)
