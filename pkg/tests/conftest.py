from __future__ import annotations

import sys
from datetime import datetime, timedelta, timezone

import pytest

from beacon import Engine
from beacon.bench import app
from beacon.bench.drivers import NullNotifier
from beacon.clock import ManualClock
from beacon.values import Circle, Point

T0 = datetime(2022, 3, 1, 9, 0, 0, tzinfo=timezone.utc)


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        print(f"[acceptance] {name}: {status}", file=sys.stderr, flush=True)


@pytest.fixture
def clock() -> ManualClock:
    return ManualClock(T0)


@pytest.fixture
def engine(clock):
    eng = Engine(clock=clock, notifier=NullNotifier())
    yield eng
    eng.close()


@pytest.fixture
def app_engine(clock):
    """Engine with the emergency app schema, function, and channel installed."""
    eng = Engine(clock=clock, notifier=NullNotifier())
    app.install(eng, with_feeds=False, with_channel=True)
    eng.active.create_broker("BADBrokerOne", "http://127.0.0.1:1/unused")
    yield eng
    eng.close()


def user(name: str, x: float, y: float, radius: float = 100.0, when=None):
    return {"userName": name, "location": Circle(Point(x, y), radius),
            "timestamp": when or T0}


def report(etype: str, x: float, y: float, radius: float, when):
    return {"Etype": etype, "location": Circle(Point(x, y), radius),
            "timestamp": when}


def shelter(name: str, x: float, y: float):
    return {"shelterName": name, "location": Point(x, y)}


def seconds(n: float) -> timedelta:
    return timedelta(seconds=n)
