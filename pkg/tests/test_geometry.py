import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, MultiPoint, Point

from crosscoord.geometry import (
    DEFAULT_MOVEMENTS,
    DownstreamError,
    GeometryConfig,
    GeometryError,
    build_intersection,
    build_movement,
    compute_conflicts,
    conflict_frame,
)


def sampled_crossings(a, b, step=0.01):
    """Crossing points of two centerlines sampled as 1 cm polylines."""
    hit = LineString(a.sample(step)).intersection(LineString(b.sample(step)))
    if hit.is_empty:
        return []
    if isinstance(hit, Point):
        return [hit]
    if isinstance(hit, MultiPoint):
        return list(hit.geoms)
    raise AssertionError(f"unexpected overlap {hit.geom_type}")


def test_default_model_has_eight_movements():
    model = build_intersection()
    assert model.n == 8
    assert [m.id for m in model.movements] == list(DEFAULT_MOVEMENTS)
    assert all(not m.exempt for m in model.movements)


def test_single_movement_has_no_conflicts():
    model = build_intersection(GeometryConfig(movements=("EW",)))
    assert model.p == 0
    assert model.conflict_matrix.tolist() == [[0]]


def test_perpendicular_straights_cross_once():
    model = build_intersection(GeometryConfig(movements=("EW", "NS")))
    assert model.p == 1
    assert model.conflict_matrix.tolist() == [[0, 1], [1, 0]]
    cp = model.conflicts[0]
    for mid in ("EW", "NS"):
        x, y = model.movement(mid).point_at(cp.offset_for(mid))
        assert math.hypot(x - cp.point[0], y - cp.point[1]) < 1e-9


def test_line_line_offsets_equal_path_distance():
    cfg = GeometryConfig(movements=("EW", "NS"))
    ew, ns = (build_movement(m, cfg) for m in cfg.movements)
    _, (cp,) = compute_conflicts([ew, ns])
    for path in (ew, ns):
        spawn = np.array(path.point_at(0.0))
        assert cp.offset_for(path.id) == pytest.approx(np.linalg.norm(np.array(cp.point) - spawn), abs=1e-9)


def test_parallel_paths_do_not_conflict():
    cfg = GeometryConfig(movements=("EW", "WE"))
    model = build_intersection(cfg)
    assert model.p == 0
    assert model.conflict_matrix.sum() == 0


def test_default_conflicts_match_sampled_polyline_oracle():
    model = build_intersection()
    found = {cp.pair: cp for cp in model.conflicts}
    for i, a in enumerate(model.movements):
        for b in model.movements[i + 1 :]:
            pts = sampled_crossings(a, b)
            assert len(pts) == (1 if (a.id, b.id) in found else 0), (a.id, b.id)
            if pts:
                cp = found[(a.id, b.id)]
                assert math.hypot(pts[0].x - cp.point[0], pts[0].y - cp.point[1]) < 0.01
    assert model.p == 16


def test_conflict_matrix_symmetric_and_consistent():
    model = build_intersection()
    c = model.conflict_matrix
    assert (c == c.T).all()
    assert (np.diag(c) == 0).all()
    assert model.p == c.sum() // 2


@settings(max_examples=25, deadline=None)
@given(
    lane_width=st.floats(2.8, 4.5),
    approach=st.floats(60.0, 300.0),
    exit_length=st.floats(10.0, 60.0),
    movements=st.lists(st.sampled_from(DEFAULT_MOVEMENTS), min_size=2, max_size=8, unique=True),
)
def test_conflicts_match_oracle_for_generated_geometries(lane_width, approach, exit_length, movements):
    cfg = GeometryConfig(lane_width, approach, exit_length, tuple(movements))
    model = build_intersection(cfg)
    pairs = {cp.pair for cp in model.conflicts}
    for i, a in enumerate(model.movements):
        for b in model.movements[i + 1 :]:
            assert len(sampled_crossings(a, b, step=0.05)) == ((a.id, b.id) in pairs)


def test_right_turns_are_exempt_and_unconflicted():
    model = build_intersection(GeometryConfig(movements=("EW", "NS", "EN")))
    en = model.movement("EN")
    assert en.exempt and en.turn == "right"
    assert model.conflict_matrix[model.index("EN")].sum() == 0


def test_invalid_movement_ids_rejected():
    for bad in ("EE", "XY", "E"):
        with pytest.raises(GeometryError):
            build_movement(bad, GeometryConfig())


def test_frame_identity_placement():
    model = build_intersection(GeometryConfig(movements=("EW", "NS")))
    cp = model.conflicts[0]
    path = model.movement("EW")
    d_center = path.approach_length - cp.offset_for("EW")
    lp, le, ls = conflict_frame(d_center, path, cp, 0.0, enter_margin=0.0, safe_margin=0.0)
    assert (lp, le, ls) == (pytest.approx(0.0, abs=1e-12), cp.half_width, cp.half_width)


def test_frame_straight_path_distances_add():
    cfg = GeometryConfig(movements=("EW", "NS"), lane_width=3.5)
    model = build_intersection(cfg)
    cp = model.conflicts[0]
    lp, le, ls = model.conflict_frame(200.0, "EW", cp, 4.5)
    assert lp == pytest.approx(cp.offset_for("EW"))
    # the NS lane runs 1.5 lane widths past the center line as seen from the east
    assert lp == pytest.approx(200.0 + 1.5 * 3.5)
    assert le == pytest.approx(1.75 + 2.25)
    assert ls == pytest.approx(1.75 + 2.25 + 1.0)


def test_frame_left_turn_matches_quadrature():
    model = build_intersection()
    path = model.movement("ES")
    assert path.turn == "left"
    for cp in model.conflicts_of("ES"):
        s = cp.offset_for("ES")
        pts = path.sample(0.001)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        k = int(np.argmin(np.hypot(pts[:, 0] - cp.point[0], pts[:, 1] - cp.point[1])))
        assert cum[k] == pytest.approx(s, abs=2e-3)
        lp, _, _ = model.conflict_frame(path.approach_length, "ES", cp, 4.5)
        assert lp == pytest.approx(s)


def test_frame_downstream_vehicle_rejected():
    model = build_intersection(GeometryConfig(movements=("EW", "NS")))
    cp = model.conflicts[0]
    path = model.movement("EW")
    with pytest.raises(DownstreamError):
        model.conflict_frame(path.approach_length - cp.offset_for("EW") - 1.0, "EW", cp, 4.5)


def test_frame_margins_validated():
    model = build_intersection(GeometryConfig(movements=("EW", "NS")))
    with pytest.raises(ValueError):
        conflict_frame(100.0, model.movement("EW"), model.conflicts[0], 4.5, enter_margin=2.0, safe_margin=1.0)
    with pytest.raises(GeometryError):
        GeometryConfig(enter_margin=2.0, safe_margin=1.0)
