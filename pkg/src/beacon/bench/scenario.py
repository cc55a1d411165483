"""Synthetic city/mobility/emergency workload generation.

Everything is deterministic given the seed: same seed, byte-identical
trace files.  Trace lines are envelopes {"atMs": <offset>, "record": {...}}
around records in the feed wire format; the replayer strips the envelope
before the record reaches a socket.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field, asdict

from .. import values
from ..values import Circle, Point
from .mobility import Bounds, RandomWaypoint, RouteShuttle, tram_routes

CITY_WIDTH = 4500.0
CITY_HEIGHT = 3400.0

# per 30-user group: 10 pedestrians, 5 cars, 15 tram commuters (5 per route)
GROUP = (["pedestrian"] * 10) + (["car"] * 5) + (["commuter"] * 15)

# (type, probability, radius as a fraction of the city width)
EMERGENCY_MIX = [
    ("flood", 0.50, 1 / 8),
    ("fire", 0.30, 1 / 16),
    ("storm", 0.10, 1 / 4),
    ("crash", 0.10, 1 / 100),
]


@dataclass(frozen=True)
class City:
    name: str
    bounds: Bounds
    shelters: int = 200


@dataclass
class ScenarioConfig:
    seed: int = 1
    case: int = 1                      # 1..4 (geometry cases)
    user_count: int = 30
    report_rate_per_sec: float = 1.0
    duration_s: float = 60.0
    period_ms: int = 10_000
    user_radius: float = 100.0
    shelters_per_city: int = 200
    reports_displaced: float = 0.9     # fraction moved away in cases 2 and 4
    users_displaced: float = 0.9       # fraction moved away in cases 3 and 4
    speeds: dict = field(default_factory=lambda: {
        "pedestrian": 1.4, "car": 11.0, "commuter": 8.0,
    })
    poisson: bool = True               # fixed-interval arrivals when False

    def cities(self) -> dict[str, City]:
        def city(name, index):
            b = Bounds(index * CITY_WIDTH, 0.0, (index + 1) * CITY_WIDTH, CITY_HEIGHT)
            return City(name, b, self.shelters_per_city)

        if self.case == 1:
            return {"home": city("Hellsinki", 0)}
        if self.case == 2:
            return {"home": city("Hellsinki", 0), "reports": city("Tartarusinki", 1)}
        if self.case == 3:
            return {"users": city("Elysinki", 0), "home": city("Hellsinki", 1)}
        if self.case == 4:
            return {"users": city("Elysinki", 0), "home": city("Hellsinki", 1),
                    "reports": city("Tartarusinki", 2)}
        raise ValueError(f"case must be 1..4, got {self.case}")


@dataclass
class TraceBundle:
    config: ScenarioConfig
    shelters: list            # shelter records
    locations: list           # {"atMs": int, "record": {...}} envelopes, time order
    reports: list             # same shape
    user_names: list[str]

    @property
    def period_count(self) -> int:
        return int(self.config.duration_s * 1000) // self.config.period_ms


def generate_scenario(config: ScenarioConfig) -> TraceBundle:
    rng = random.Random(config.seed)
    cities = config.cities()
    home = cities["home"]

    shelters = []
    for city in cities.values():
        for i in range(city.shelters):
            x, y = city.bounds.random_point(rng)
            shelters.append({
                "shelterName": f"{city.name}-shelter-{i}",
                "location": Point(x, y),
            })

    # users: home city unless displaced (cases 3 and 4)
    user_city = cities.get("users")
    movers = []
    user_names = []
    for i in range(config.user_count):
        name = f"user{i:05d}"
        user_names.append(name)
        city = home
        if user_city is not None and rng.random() < config.users_displaced:
            city = user_city
        slot = i % len(GROUP)
        klass = GROUP[slot]
        speed = config.speeds[klass]
        if klass == "commuter":
            routes = tram_routes(city.bounds)
            movers.append(RouteShuttle(routes[(slot - 15) // 5], speed, rng))
        else:
            movers.append(RandomWaypoint(city.bounds, speed, rng))

    period_s = config.period_ms / 1000.0
    periods = int(config.duration_s * 1000) // config.period_ms
    locations = []
    for k in range(periods):
        base = k * config.period_ms
        for i, name in enumerate(user_names):
            pos = movers[i].step(period_s) if k else movers[i].step(0)
            at = base + 1 + int(i * (config.period_ms - 2) / max(1, config.user_count))
            locations.append({
                "atMs": at,
                "record": {
                    "userName": name,
                    "location": Circle(Point(pos[0], pos[1]), config.user_radius),
                },
            })
    locations.sort(key=lambda e: e["atMs"])

    # reports: Poisson (or fixed-interval) arrivals; displaced in cases 2 and 4
    report_city = cities.get("reports")
    reports = []
    t = 0.0
    horizon = config.duration_s * 1000
    while True:
        if config.poisson:
            t += rng.expovariate(config.report_rate_per_sec) * 1000
        else:
            t += 1000.0 / config.report_rate_per_sec
        if t >= horizon:
            break
        city = home
        if report_city is not None and rng.random() < config.reports_displaced:
            city = report_city
        etype, radius_frac = _pick_type(rng)
        x, y = city.bounds.random_point(rng)
        reports.append({
            "atMs": int(t),
            "record": {
                "Etype": etype,
                "location": Circle(Point(x, y), radius_frac * city.bounds.width),
            },
        })

    return TraceBundle(config, shelters, locations, reports, user_names)


def _pick_type(rng: random.Random) -> tuple[str, float]:
    roll = rng.random()
    acc = 0.0
    for etype, p, frac in EMERGENCY_MIX:
        acc += p
        if roll < acc:
            return etype, frac
    return EMERGENCY_MIX[-1][0], EMERGENCY_MIX[-1][2]


# ---------------------------------------------------------------------------
# trace files


def write_traces(bundle: TraceBundle, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "shelters.jsonl"), "w", encoding="utf-8") as fh:
        for rec in bundle.shelters:
            fh.write(values.dumps(rec) + "\n")
    for name, trace in (("locations", bundle.locations), ("reports", bundle.reports)):
        with open(os.path.join(out_dir, f"{name}.trace"), "w", encoding="utf-8") as fh:
            for env in trace:
                fh.write(json.dumps(
                    {"atMs": env["atMs"], "record": values.to_wire(env["record"])},
                    separators=(",", ":"),
                ) + "\n")
    cfg = asdict(bundle.config)
    cfg["userNames"] = bundle.user_names
    with open(os.path.join(out_dir, "scenario.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)


def load_traces(trace_dir: str) -> TraceBundle:
    with open(os.path.join(trace_dir, "scenario.json"), encoding="utf-8") as fh:
        raw = json.load(fh)
    user_names = raw.pop("userNames")
    config = ScenarioConfig(**raw)
    shelters = []
    with open(os.path.join(trace_dir, "shelters.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                shelters.append(values.loads(line))
    traces = {}
    for name in ("locations", "reports"):
        out = []
        with open(os.path.join(trace_dir, f"{name}.trace"), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    env = json.loads(line)
                    out.append({"atMs": env["atMs"],
                                "record": values.from_wire(env["record"])})
        traces[name] = out
    return TraceBundle(config, shelters, traces["locations"], traces["reports"],
                       user_names)
