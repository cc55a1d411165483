"""Simplified deterministic mobility: random waypoint plus fixed tram routes.

Speeds are map units per second on the synthetic city grid; they are
configurable knobs, not calibrated against any real city.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class Bounds:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    def random_point(self, rng: random.Random) -> tuple[float, float]:
        return (rng.uniform(self.x0, self.x1), rng.uniform(self.y0, self.y1))


class RandomWaypoint:
    """Pick a destination, walk toward it at constant speed, repeat."""

    def __init__(self, bounds: Bounds, speed: float, rng: random.Random):
        self.bounds = bounds
        self.speed = speed
        self.rng = rng
        self.pos = bounds.random_point(rng)
        self.target = bounds.random_point(rng)

    def step(self, seconds: float) -> tuple[float, float]:
        remaining = self.speed * seconds
        while remaining > 0:
            dx = self.target[0] - self.pos[0]
            dy = self.target[1] - self.pos[1]
            dist = math.hypot(dx, dy)
            if dist <= remaining:
                self.pos = self.target
                remaining -= dist
                self.target = self.bounds.random_point(self.rng)
            else:
                f = remaining / dist
                self.pos = (self.pos[0] + dx * f, self.pos[1] + dy * f)
                remaining = 0
        return self.pos


def tram_routes(bounds: Bounds) -> list[list[tuple[float, float]]]:
    """Three fixed polyline routes spanning a city."""
    w, h = bounds.width, bounds.height
    x0, y0 = bounds.x0, bounds.y0
    return [
        [(x0 + 0.1 * w, y0 + 0.25 * h), (x0 + 0.9 * w, y0 + 0.25 * h)],
        [(x0 + 0.1 * w, y0 + 0.8 * h), (x0 + 0.5 * w, y0 + 0.5 * h),
         (x0 + 0.9 * w, y0 + 0.8 * h)],
        [(x0 + 0.5 * w, y0 + 0.1 * h), (x0 + 0.5 * w, y0 + 0.9 * h)],
    ]


class RouteShuttle:
    """Shuttle back and forth along a polyline at constant speed."""

    def __init__(self, polyline: list[tuple[float, float]], speed: float,
                 rng: random.Random):
        self.points = polyline
        self.speed = speed
        self.lengths = [
            math.hypot(b[0] - a[0], b[1] - a[1])
            for a, b in zip(polyline, polyline[1:])
        ]
        self.total = sum(self.lengths)
        # position parameterized by arc length; ping-pong over [0, 2*total)
        self.s = rng.uniform(0, 2 * self.total)

    def step(self, seconds: float) -> tuple[float, float]:
        self.s = (self.s + self.speed * seconds) % (2 * self.total)
        return self.position()

    def position(self) -> tuple[float, float]:
        s = self.s
        if s > self.total:
            s = 2 * self.total - s  # returning leg
        for (a, b), seg in zip(zip(self.points, self.points[1:]), self.lengths):
            if s <= seg or seg == 0:
                f = 0.0 if seg == 0 else s / seg
                return (a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f)
            s -= seg
        return self.points[-1]
