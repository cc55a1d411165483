from __future__ import annotations

import collections
import os

import pytest

from beacon.bench import report as benchreport
from beacon.bench.breakpoint import BreakpointResult, breakpoint_search
from beacon.bench.drivers import (
    MetricsLog,
    TickMetrics,
    current_user_locations,
    passive_result_set,
    run_virtual,
    staged_result_set,
)
from beacon.bench.oracle import brute_force_oracle
from beacon.bench.scenario import (
    CITY_WIDTH,
    ScenarioConfig,
    generate_scenario,
    load_traces,
    write_traces,
)
from beacon.values import Circle, Point

from conftest import T0, report, seconds, shelter, user  # noqa: F401


def test_location_trace_count_is_users_times_periods():
    cfg = ScenarioConfig(seed=1, user_count=30, duration_s=60, period_ms=10_000)
    bundle = generate_scenario(cfg)
    assert len(bundle.locations) == 30 * 6


def test_emergency_mix_and_radii():
    cfg = ScenarioConfig(seed=5, user_count=1, report_rate_per_sec=250, duration_s=40)
    bundle = generate_scenario(cfg)
    n = len(bundle.reports)
    assert n > 9000
    freqs = collections.Counter(env["record"]["Etype"] for env in bundle.reports)
    expected = {"flood": 0.5, "fire": 0.3, "storm": 0.1, "crash": 0.1}
    for etype, p in expected.items():
        assert abs(freqs[etype] / n - p) <= 0.02
    radii = {env["record"]["Etype"]: env["record"]["location"].radius
             for env in bundle.reports}
    assert radii["flood"] == CITY_WIDTH / 8
    assert radii["fire"] == CITY_WIDTH / 16
    assert radii["storm"] == CITY_WIDTH / 4
    assert radii["crash"] == CITY_WIDTH / 100


def test_same_seed_byte_identical_traces(tmp_path):
    cfg = ScenarioConfig(seed=77, case=4, user_count=45, report_rate_per_sec=2,
                         duration_s=30)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    write_traces(generate_scenario(cfg), str(d1))
    write_traces(generate_scenario(cfg), str(d2))
    for name in os.listdir(d1):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_trace_files_round_trip(tmp_path):
    cfg = ScenarioConfig(seed=3, case=2, user_count=12, report_rate_per_sec=1,
                         duration_s=30)
    bundle = generate_scenario(cfg)
    write_traces(bundle, str(tmp_path))
    loaded = load_traces(str(tmp_path))
    assert loaded.locations == bundle.locations
    assert loaded.reports == bundle.reports
    assert loaded.shelters == bundle.shelters
    assert loaded.user_names == bundle.user_names


def test_case_geometry_placement():
    for case, cities in ((1, 1), (2, 2), (3, 2), (4, 3)):
        cfg = ScenarioConfig(seed=2, case=case, user_count=40,
                             report_rate_per_sec=5, duration_s=20)
        assert len(cfg.cities()) == cities
    # case 2 moves ~90% of reports east of the home city
    cfg = ScenarioConfig(seed=2, case=2, user_count=10, report_rate_per_sec=20,
                         duration_s=50)
    bundle = generate_scenario(cfg)
    moved = sum(1 for env in bundle.reports
                if env["record"]["location"].center.x > CITY_WIDTH)
    assert abs(moved / len(bundle.reports) - 0.9) < 0.05
    # while all users stay home
    assert all(env["record"]["location"].center.x <= CITY_WIDTH
               for env in bundle.locations)


def test_oracle_trivial_cases(app_engine, clock):
    eng = app_engine
    sid = eng.active.subscribe("EmergenciesNearMe", ["u1"], "BADBrokerOne")
    eng.catalog.dataset("UserLocations").upsert(user("u1", 100, 100, 50))
    eng.catalog.dataset("Shelters").insert(shelter("near", 120, 100))
    eng.catalog.dataset("Shelters").insert(shelter("far", 9000, 9000))
    eng.catalog.dataset("Reports").insert(
        report("storm", 100, 100, 10, clock.now() - seconds(1)))
    snap = eng.catalog.snapshot()
    got = brute_force_oracle(snap, [(sid, "u1")],
                             clock.now() - seconds(10), clock.now())
    assert got == {(sid, next(iter(
        r["reportId"] for r in snap.dataset("Reports").records())),
        frozenset({(120.0, 100.0)}))}
    # user outside every report radius: empty
    far = brute_force_oracle(snap, [("s2", "nobody")],
                             clock.now() - seconds(10), clock.now())
    assert far == set()


def test_virtual_run_matches_oracle_and_passive():
    cfg = ScenarioConfig(seed=21, case=1, user_count=25, report_rate_per_sec=1.5,
                         duration_s=30)
    bundle = generate_scenario(cfg)
    run = run_virtual(bundle, capture_oracle=True)
    try:
        got = staged_result_set(run.engine)
        assert got == run.oracle_union
        # passive polling over the final window agrees with the last tick
        users = current_user_locations(run.engine)
        sub_of = run.sub_of_user
        passive = {(sub_of[name], rid, sh)
                   for name, rid, sh in passive_result_set(run.engine, users)}
        assert passive == run.oracle_per_tick[-1]
    finally:
        run.close()


def test_breakpoint_search_finds_exact_synthetic_threshold():
    result = breakpoint_search(lambda n: n <= 137, cap=4096, resolution=1)
    assert result.max_supportable == 137
    assert not result.capped
    probed = [n for n, _ in result.trace]
    assert probed[0] == 1
    assert any(not ok for _, ok in result.trace)


def test_breakpoint_search_edge_cases():
    assert breakpoint_search(lambda n: False).max_supportable == 0
    capped = breakpoint_search(lambda n: True, cap=256)
    assert capped.max_supportable == 256
    assert capped.capped
    assert breakpoint_search(lambda n: n <= 1, cap=64).max_supportable == 1
    for threshold in (2, 3, 5, 31, 64, 100):
        got = breakpoint_search(lambda n, t=threshold: n <= t, cap=256)
        assert got.max_supportable == threshold


def _metrics():
    m = MetricsLog(period_ms=1000, mode="active")
    m.ticks = [TickMetrics(T0, 12.5, 3.25, 7), TickMetrics(T0, 8.0, 990.0, 0)]
    return m


def test_metrics_overload_criterion():
    m = _metrics()
    assert not m.overloaded
    m.ticks.append(TickMetrics(T0, 1000.0, 0.0, 1))
    assert m.overloaded  # execution time reached the period budget
    m2 = MetricsLog(period_ms=1000, mode="passive", unfinished=1)
    assert m2.overloaded


def test_csv_round_trip_and_header_only(tmp_path):
    m = _metrics()
    path = str(tmp_path / "ticks.csv")
    benchreport.write_ticks_csv(path, m)
    rows = benchreport.read_csv(path)
    assert [float(r["tE_ms"]) for r in rows] == [12.5, 8.0]
    assert [float(r["tF_ms"]) for r in rows] == [3.25, 990.0]
    assert [int(r["resultCount"]) for r in rows] == [7, 0]

    empty = str(tmp_path / "empty.csv")
    benchreport.write_ticks_csv(empty, MetricsLog(period_ms=1000, mode="active"))
    with open(empty, encoding="utf-8") as fh:
        lines = fh.read().strip().splitlines()
    assert lines == [",".join(benchreport.TICK_FIELDS)]


def test_breakpoints_csv_rows(tmp_path):
    rows = [
        (1.0, "active", BreakpointResult(1.0, 128)),
        (4.0, "active", BreakpointResult(4.0, 64)),
        (1.0, "passive", BreakpointResult(1.0, 8)),
        (4.0, "passive", BreakpointResult(4.0, 8)),
        (16.0, "active", BreakpointResult(16.0, 32)),
        (16.0, "passive", BreakpointResult(16.0, 4)),
    ]
    path = str(tmp_path / "bp.csv")
    benchreport.write_breakpoints_csv(path, rows)
    parsed = benchreport.read_csv(path)
    assert len(parsed) == 6
    assert {r["mode"] for r in parsed} == {"active", "passive"}
    assert [float(r["rate"]) for r in parsed][:2] == [1.0, 4.0]


def test_plots_render_to_files(tmp_path):
    m = _metrics()
    tick_png = str(tmp_path / "ticks.png")
    benchreport.plot_ticks(tick_png, m, title="test")
    bp_png = str(tmp_path / "bp.png")
    benchreport.plot_breakpoints(bp_png, [
        (1.0, "active", BreakpointResult(1.0, 128)),
        (4.0, "active", BreakpointResult(4.0, 64)),
        (1.0, "passive", BreakpointResult(1.0, 8)),
    ])
    assert os.path.getsize(tick_png) > 1000
    assert os.path.getsize(bp_png) > 1000
