"""Self-describing data model used everywhere: storage, feeds, queries, results.

A value is one of: None, bool, int, float, str, datetime (UTC, ms),
timedelta (duration, ms), Point, Circle, list, dict.  The JSON wire form
keeps scalars native and wraps the four non-JSON kinds in single-key
objects: {"point": "x,y"}, {"circle": "x,y r"}, {"datetime": <ISO-8601>},
{"duration": <ms>}.  Those four keys are reserved in wire objects.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .errors import EvalTypeError, MalformedDuration, NonSpatialArgument

# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def text(self) -> str:
        return f"{_fmt(self.x)},{_fmt(self.y)}"

    def bbox(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x, self.y)


@dataclass(frozen=True)
class Circle:
    center: Point
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"circle radius must be >= 0, got {self.radius}")

    def text(self) -> str:
        return f"{self.center.text()} {_fmt(self.radius)}"

    def bbox(self) -> tuple[float, float, float, float]:
        c, r = self.center, self.radius
        return (c.x - r, c.y - r, c.x + r, c.y + r)


def _fmt(f: float) -> str:
    # repr() gives the shortest exact round-trip form
    return repr(float(f))


def _floats(text: str, n: int, what: str) -> list[float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != n:
        raise ValueError(f"malformed {what} literal: {text!r}")
    return [float(p) for p in parts]


def parse_point(text: str) -> Point:
    x, y = _floats(text, 2, "point")
    return Point(x, y)


def parse_circle(text: str) -> Circle:
    x, y, r = _floats(text, 3, "circle")
    return Circle(Point(x, y), r)


def bbox_of(value) -> tuple[float, float, float, float]:
    if isinstance(value, (Point, Circle)):
        return value.bbox()
    raise NonSpatialArgument(f"not a spatial value: {kind_of(value)}")


def boxes_intersect(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def spatial_intersect(a, b) -> bool:
    """Closed-boundary intersection between points and circles.

    point/point is coordinate equality; point/circle tests distance against
    the radius; circle/circle tests center distance against the radius sum.
    """
    for v in (a, b):
        if not isinstance(v, (Point, Circle)):
            raise NonSpatialArgument(f"not a spatial value: {kind_of(v)}")
    if isinstance(a, Point) and isinstance(b, Point):
        return a.x == b.x and a.y == b.y
    if isinstance(a, Point):
        a, b = b, a
    if isinstance(b, Point):
        return math.hypot(a.center.x - b.x, a.center.y - b.y) <= a.radius
    return math.hypot(a.center.x - b.center.x, a.center.y - b.center.y) <= a.radius + b.radius


# ---------------------------------------------------------------------------
# datetimes and durations

_DURATION_RE = re.compile(
    r"^P(?:(?P<days>\d+)D)?"
    r"(?:T(?:(?P<hours>\d+)H)?(?:(?P<minutes>\d+)M)?(?:(?P<seconds>\d+(?:\.\d+)?)S)?)?$"
)


def parse_duration(text: str) -> timedelta:
    """ISO-8601 day-time duration (PnDTnHnMnS) to a timedelta, ms precision."""
    m = _DURATION_RE.match(text.strip())
    if not m or not any(m.groupdict().values()):
        raise MalformedDuration(f"malformed day-time duration: {text!r}")
    g = m.groupdict()
    ms = (
        int(g["days"] or 0) * 86_400_000
        + int(g["hours"] or 0) * 3_600_000
        + int(g["minutes"] or 0) * 60_000
        + round(float(g["seconds"] or 0) * 1000)
    )
    return timedelta(milliseconds=ms)


def format_duration(td: timedelta) -> str:
    ms = duration_ms(td)
    sign = "-" if ms < 0 else ""
    ms = abs(ms)
    secs = ms / 1000
    if secs == int(secs):
        return f"{sign}PT{int(secs)}S"
    return f"{sign}PT{secs}S"


def duration_ms(td: timedelta) -> int:
    return round(td.total_seconds() * 1000)


def parse_datetime(text: str) -> datetime:
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt - timedelta(microseconds=dt.microsecond % 1000)


def format_datetime(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.isoformat(timespec="milliseconds").replace("+00:00", "Z")


# ---------------------------------------------------------------------------
# kind inspection

KIND_ORDER = {
    "null": 0,
    "boolean": 1,
    "number": 2,
    "string": 3,
    "datetime": 4,
    "duration": 5,
    "point": 6,
    "circle": 7,
    "array": 8,
    "object": 9,
}


def kind_of(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, datetime):
        return "datetime"
    if isinstance(value, timedelta):
        return "duration"
    if isinstance(value, Point):
        return "point"
    if isinstance(value, Circle):
        return "circle"
    if isinstance(value, list):
        return "array"
    if isinstance(value, dict):
        return "object"
    raise EvalTypeError(f"not a value: {type(value).__name__}")


def sort_key(value):
    """Total order over values; kinds are ranked, then compared natively."""
    k = kind_of(value)
    rank = KIND_ORDER[k]
    if k == "null":
        return (rank, 0)
    if k == "point":
        return (rank, (value.x, value.y))
    if k == "circle":
        return (rank, (value.center.x, value.center.y, value.radius))
    if k == "array":
        return (rank, tuple(sort_key(v) for v in value))
    if k == "object":
        return (rank, tuple((n, sort_key(v)) for n, v in sorted(value.items())))
    return (rank, value)


def freeze(value):
    """Hashable canonical form (arrays to tuples, objects to sorted item tuples)."""
    k = kind_of(value)
    if k == "array":
        return ("array", tuple(freeze(v) for v in value))
    if k == "object":
        return ("object", tuple((n, freeze(v)) for n, v in sorted(value.items())))
    return value


# ---------------------------------------------------------------------------
# JSON wire encoding

_WIRE_KEYS = ("point", "circle", "datetime", "duration")


def to_wire(value):
    k = kind_of(value)
    if k in ("null", "boolean", "number", "string"):
        return value
    if k == "datetime":
        return {"datetime": format_datetime(value)}
    if k == "duration":
        return {"duration": duration_ms(value)}
    if k == "point":
        return {"point": value.text()}
    if k == "circle":
        return {"circle": value.text()}
    if k == "array":
        return [to_wire(v) for v in value]
    return {name: to_wire(v) for name, v in value.items()}


def from_wire(raw):
    if isinstance(raw, dict):
        if len(raw) == 1:
            (key, inner), = raw.items()
            if key == "point" and isinstance(inner, str):
                return parse_point(inner)
            if key == "circle" and isinstance(inner, str):
                return parse_circle(inner)
            if key == "datetime" and isinstance(inner, str):
                return parse_datetime(inner)
            if key == "duration" and isinstance(inner, (int, float)):
                return timedelta(milliseconds=inner)
        return {name: from_wire(v) for name, v in raw.items()}
    if isinstance(raw, list):
        return [from_wire(v) for v in raw]
    return raw


def dumps(value) -> str:
    return json.dumps(to_wire(value), separators=(",", ":"), ensure_ascii=False)


def loads(text: str):
    return from_wire(json.loads(text))


def to_literal(value) -> str:
    """Render a value as a statement-language literal."""
    k = kind_of(value)
    if k == "null":
        return "null"
    if k == "boolean":
        return "true" if value else "false"
    if k == "number":
        return repr(value)
    if k == "string":
        return json.dumps(value, ensure_ascii=False)
    if k == "datetime":
        return f'datetime("{format_datetime(value)}")'
    if k == "duration":
        return f'day_time_duration("{format_duration(value)}")'
    if k == "point":
        return f'point("{value.text()}")'
    if k == "circle":
        return f'circle("{value.text()}")'
    if k == "array":
        return "[" + ", ".join(to_literal(v) for v in value) + "]"
    fields = ", ".join(f"{json.dumps(n)}: {to_literal(v)}" for n, v in value.items())
    return "{" + fields + "}"
