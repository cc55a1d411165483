from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from beacon import values
from beacon.errors import MalformedDuration, NonSpatialArgument
from beacon.values import Circle, Point


def test_point_circle_text_round_trip():
    p = values.parse_point("2437.34,1330.59")
    assert p == Point(2437.34, 1330.59)
    assert values.parse_point(p.text()) == p
    c = values.parse_circle("846.5,2589.4 100.0")
    assert c == Circle(Point(846.5, 2589.4), 100.0)
    assert values.parse_circle(c.text()) == c
    # comma-separated radius form is accepted too
    assert values.parse_circle("846.5, 2589.4, 100.0") == c


def test_circle_radius_must_be_nonnegative():
    with pytest.raises(ValueError):
        Circle(Point(0, 0), -1.0)


def test_spatial_intersect_345_triangle_boundary_inclusive():
    assert values.spatial_intersect(Circle(Point(0, 0), 5), Point(3, 4))


def test_spatial_intersect_separated_circles():
    assert not values.spatial_intersect(Circle(Point(0, 0), 2), Circle(Point(5, 0), 2))
    # touching circles are inclusive
    assert values.spatial_intersect(Circle(Point(0, 0), 2), Circle(Point(4, 0), 2))


def test_spatial_intersect_rejects_non_spatial():
    with pytest.raises(NonSpatialArgument):
        values.spatial_intersect("swan", Point(0, 0))


coords = st.floats(min_value=-1000, max_value=1000, allow_nan=False)
radii = st.floats(min_value=0, max_value=500, allow_nan=False)


def geometries():
    pts = st.builds(Point, coords, coords)
    return st.one_of(pts, st.builds(Circle, pts, radii))


@given(geometries(), geometries())
def test_spatial_intersect_agrees_with_distance_oracle(a, b):
    def center(g):
        return (g.x, g.y, 0.0) if isinstance(g, Point) else (g.center.x, g.center.y, g.radius)

    ax, ay, ar = center(a)
    bx, by, br = center(b)
    if isinstance(a, Point) and isinstance(b, Point):
        expected = a == b
    else:
        expected = math.hypot(ax - bx, ay - by) <= ar + br
    assert values.spatial_intersect(a, b) == expected
    assert values.spatial_intersect(b, a) == values.spatial_intersect(a, b)


@given(geometries())
def test_spatial_intersect_reflexive(g):
    assert values.spatial_intersect(g, g)


def test_datetime_text_round_trip_millisecond_precision():
    dt = datetime(2018, 8, 27, 10, 10, 5, 123456, tzinfo=timezone.utc)
    text = values.format_datetime(dt)
    back = values.parse_datetime(text)
    assert back == dt.replace(microsecond=123000)
    assert values.format_datetime(back) == text


def test_parse_datetime_accepts_naive_and_offset_forms():
    a = values.parse_datetime("2018-08-27T10:10:05")
    b = values.parse_datetime("2018-08-27T12:10:05+02:00")
    assert a == b


def test_duration_parse_and_format():
    assert values.parse_duration("PT10S") == timedelta(seconds=10)
    assert values.parse_duration("PT24H") == timedelta(hours=24)
    assert values.parse_duration("P1DT2H30M1.5S") == timedelta(
        days=1, hours=2, minutes=30, seconds=1.5)
    assert values.format_duration(timedelta(seconds=10)) == "PT10S"
    with pytest.raises(MalformedDuration):
        values.parse_duration("10 seconds")
    with pytest.raises(MalformedDuration):
        values.parse_duration("P")


def test_wire_round_trip_nested():
    rec = {
        "id": "r1",
        "n": 5,
        "f": 2.5,
        "ok": True,
        "nothing": None,
        "when": datetime(2020, 5, 4, 3, 2, 1, tzinfo=timezone.utc),
        "ttl": timedelta(milliseconds=1500),
        "where": Circle(Point(1.5, -2.5), 10.0),
        "spot": Point(0, 0),
        "tags": ["a", {"inner": Point(9, 9)}],
    }
    assert values.loads(values.dumps(rec)) == rec


def test_wire_int_float_distinction_survives():
    out = values.loads(values.dumps({"a": 1, "b": 1.0}))
    assert isinstance(out["a"], int)
    assert isinstance(out["b"], float)


def test_literal_rendering_parses_back():
    from beacon.query.parser import parse_expr
    from beacon.query import ast

    lit = values.to_literal({"who": "dharma1", "loc": Circle(Point(1, 2), 3.0),
                             "n": [1, 2.5, None, True]})
    expr = parse_expr(lit)
    assert isinstance(expr, ast.ObjectLit)


def test_sort_key_orders_within_kind_and_across_kinds():
    items = ["b", 2, "a", None, 1.5, datetime(2020, 1, 1, tzinfo=timezone.utc)]
    ordered = sorted(items, key=values.sort_key)
    assert ordered[0] is None
    assert ordered[1:3] == [1.5, 2]
    assert ordered[3:5] == ["a", "b"]
