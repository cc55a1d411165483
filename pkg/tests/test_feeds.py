from __future__ import annotations

import socket
import time

import pytest

from beacon.errors import NotConnected, PortInUse, UnknownFeed
from beacon.bench import app
from beacon.values import Circle, Point, dumps

from conftest import T0


def install_feeds(engine):
    app.install(engine, with_feeds=True, with_channel=False)


def start(engine, name):
    out = engine.execute(f"START FEED {name};")
    assert out["status"] == "ok", out
    return out["result"]["port"]


def send_lines(port, lines, wait=0.4):
    with socket.create_connection(("127.0.0.1", port)) as s:
        for line in lines:
            s.sendall((line + "\n").encode("utf-8"))
    time.sleep(wait)


def location_line(name, x, y):
    return dumps({"userName": name, "location": Circle(Point(x, y), 100.0)})


def test_two_feeds_accept_concurrently(engine):
    install_feeds(engine)
    lport = start(engine, "LocationFeed")
    rport = start(engine, "ReportFeed")
    assert lport != rport
    send_lines(lport, [location_line("u1", 1, 1)])
    send_lines(rport, [dumps({"Etype": "storm", "location": Circle(Point(1, 1), 5)})])
    assert len(engine.catalog.dataset("UserLocations")) == 1
    assert len(engine.catalog.dataset("Reports")) == 1


def test_start_without_connection_fails(engine):
    install_feeds(engine)
    engine.execute("""CREATE TYPE LonelyType AS { x: string };""")
    out = engine.execute("""CREATE FEED Lonely WITH {
        "adapter-name": "socket_adapter", "sockets": "127.0.0.1:0",
        "type-name": "LonelyType", "format": "json"};""")
    assert out["status"] == "ok"
    with pytest.raises(NotConnected):
        engine.feeds.start_feed("Lonely")


def test_port_conflict_between_running_feeds(engine):
    install_feeds(engine)
    lport = start(engine, "LocationFeed")
    engine.execute("""CREATE TYPE T2 AS { x: string };""")
    engine.execute("CREATE DATASET D2(T2) PRIMARY KEY x;")
    engine.execute(f"""CREATE FEED F2 WITH {{
        "adapter-name": "socket_adapter", "sockets": "127.0.0.1:{lport}",
        "type-name": "T2", "format": "json"}};""")
    engine.execute("CONNECT FEED F2 TO DATASET D2;")
    with pytest.raises(PortInUse):
        engine.feeds.start_feed("F2")


def test_stop_feed_refuses_new_connections(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    send_lines(port, [location_line("u1", 1, 1)])
    stored_before = engine.feeds.feed("LocationFeed").stats.records_stored
    engine.execute("STOP FEED LocationFeed;")
    with pytest.raises(OSError):
        socket.create_connection(("127.0.0.1", port), timeout=0.5)
    assert engine.feeds.feed("LocationFeed").stats.records_stored == stored_before


def test_udf_adds_arrival_timestamp(engine, clock):
    install_feeds(engine)
    port = start(engine, "ReportFeed")
    send_lines(port, [dumps({"Etype": "storm",
                             "location": Circle(Point(846.5, 2589.4), 100.0)})])
    recs = list(engine.catalog.dataset("Reports").snapshot().records())
    assert len(recs) == 1
    assert recs[0]["Etype"] == "storm"
    assert recs[0]["timestamp"] == clock.now()
    assert recs[0]["location"] == Circle(Point(846.5, 2589.4), 100.0)


def test_malformed_line_dropped_stream_continues(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    send_lines(port, ["{not json", location_line("u1", 1, 1)])
    stats = engine.feeds.feed("LocationFeed").stats
    assert stats.parse_failures == 1
    assert stats.records_stored == 1
    assert engine.catalog.dataset("UserLocations").get("u1") is not None


def test_validation_failure_counts_as_parse_failure(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    send_lines(port, [dumps({"userName": "u1", "location": "nowhere"})])
    stats = engine.feeds.feed("LocationFeed").stats
    assert stats.parse_failures == 1
    assert stats.records_stored == 0


def test_replication_to_two_datasets_with_isolation(engine):
    install_feeds(engine)
    # second branch: closed location type lacking userName so every record
    # fails there while the first branch keeps storing
    engine.execute("""CREATE TYPE MirrorType AS { userName: string, location: circle };""")
    engine.execute("CREATE DATASET Mirror(MirrorType) PRIMARY KEY userName;")
    engine.execute("CONNECT FEED LocationFeed TO DATASET Mirror;")
    port = start(engine, "LocationFeed")
    send_lines(port, [location_line(f"u{i}", i, i) for i in range(5)])
    feed = engine.feeds.feed("LocationFeed")
    assert len(engine.catalog.dataset("UserLocations")) == 5
    assert len(engine.catalog.dataset("Mirror")) == 5
    branches = {b.dataset: b for b in feed.connections}
    assert branches["UserLocations"].stored == 5
    assert branches["Mirror"].stored == 5

    # now poison the mirror branch: replace with a dataset that rejects inserts
    engine.catalog.drop_dataset("Mirror")
    send_lines(port, [location_line(f"v{i}", i, i) for i in range(3)])
    assert len(engine.catalog.dataset("UserLocations")) == 8
    assert branches["UserLocations"].stored == 8
    assert branches["Mirror"].failures == 3


def test_upsert_policy_replay_idempotent(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    stream = [location_line("a", 1, 1), location_line("b", 2, 2),
              location_line("a", 3, 3)]
    for _ in range(3):
        send_lines(port, stream)
    users = engine.catalog.dataset("UserLocations")
    assert len(users) == 2
    assert users.get("a")["location"].center == Point(3, 3)
    assert users.get("b")["location"].center == Point(2, 2)


def test_per_connection_order_preserved(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    lines = [location_line("walker", i, i) for i in range(200)]
    send_lines(port, lines, wait=1.0)
    final = engine.catalog.dataset("UserLocations").get("walker")
    assert final["location"].center == Point(199, 199)


def test_throughput_report_counts(engine):
    install_feeds(engine)
    port = start(engine, "LocationFeed")
    n = 10_000
    lines = [location_line(f"u{i % 50}", i % 100, i % 100) for i in range(n)]
    send_lines(port, lines, wait=2.0)
    report = engine.feeds.throughput_report("LocationFeed", 1)
    assert report["recordsParsed"] == n
    assert report["recordsStored"] == n
    assert report["parseFailures"] == 0
    assert len(engine.catalog.dataset("UserLocations")) == 50
    elapsed = int(time.monotonic() - engine.feeds.feed("LocationFeed").stats.started_at)
    assert abs(len(report["throughputHistory"]) - elapsed) <= 1
    assert sum(report["throughputHistory"]) <= n


def test_fresh_feed_reports_zeros(engine):
    install_feeds(engine)
    report = engine.feeds.throughput_report("ReportFeed")
    assert report["recordsParsed"] == 0
    assert report["recordsStored"] == 0
    assert report["throughputHistory"] == []
    with pytest.raises(UnknownFeed):
        engine.feeds.throughput_report("NoSuchFeed")


def test_stored_accounting_formula_with_insert_policy(engine):
    """recordsStored = recordsParsed - parseFailures - duplicate rejections."""
    install_feeds(engine)
    engine.execute("""CREATE TYPE KeyedType AS { k: string };""")
    engine.execute("CREATE DATASET Keyed(KeyedType) PRIMARY KEY k;")
    engine.execute("""CREATE FEED KeyedFeed WITH {
        "adapter-name": "socket_adapter", "sockets": "127.0.0.1:0",
        "type-name": "KeyedType", "format": "json"};""")
    engine.feeds.connect_feed("KeyedFeed", "Keyed", policy="INSERT")
    port = engine.feeds.start_feed("KeyedFeed").port
    send_lines(port, [
        dumps({"k": "a"}), dumps({"k": "b"}), dumps({"k": "a"}),  # duplicate
        "garbage{",                                                # parse failure
        dumps({"k": "c"}),
    ])
    stats = engine.feeds.feed("KeyedFeed").stats
    assert stats.records_parsed == 5
    assert stats.parse_failures == 1
    assert stats.duplicate_rejections == 1
    assert stats.records_stored == stats.records_parsed - stats.parse_failures \
        - stats.duplicate_rejections
