from __future__ import annotations

import json
import statistics

import pytest

from beacon.errors import MissingParameter, QuerySyntaxError, UnknownJob
from beacon.query import parse
from beacon.values import Circle, Point, freeze

from conftest import T0, seconds, shelter, user

POLL = """SELECT r, shelters
    FROM Reports r,
        (SELECT s.location FROM Shelters s
            WHERE spatial_intersect(s.location, circle("100.0,100.0 60.0"))) shelters
    WHERE r.timestamp > current_datetime() - day_time_duration("PT10S")
        AND spatial_intersect(r.location, point("100.0,100.0"));"""


@pytest.fixture
def seeded(app_engine, clock):
    eng = app_engine
    eng.catalog.dataset("UserLocations").upsert(user("dharma1", 100, 100, 50))
    eng.catalog.dataset("Shelters").insert(shelter("swan", 110, 105))
    eng.catalog.dataset("Reports").insert({
        "Etype": "storm", "location": Circle(Point(120, 120), 40),
        "timestamp": clock.now() - seconds(5),
    })
    return eng


def test_deploy_and_run(seeded):
    jobs = seeded.jobs
    before = len(jobs)
    plan = jobs.prepare(parse(POLL))
    job_id = jobs.deploy(plan)
    assert len(jobs) == before + 1
    inv = jobs.run(job_id)
    assert inv.rows_out == 1
    assert inv.parse_ms == 0.0 and inv.compile_ms == 0.0
    assert inv.finished_at >= inv.started_at


def test_deploy_twice_yields_distinct_ids(seeded):
    plan = seeded.jobs.prepare(parse(POLL))
    a = seeded.jobs.deploy(plan)
    b = seeded.jobs.deploy(plan)
    assert a != b


def test_run_missing_parameter(seeded):
    stmt = parse('DELETE r FROM Reports WHERE r.reportId = rid;')
    plan = seeded.jobs.prepare(stmt, params=("rid",))
    job_id = seeded.jobs.deploy(plan)
    with pytest.raises(MissingParameter):
        seeded.jobs.run(job_id, {})


def test_parameterized_delete_by_id(seeded):
    reports = seeded.catalog.dataset("Reports")
    key = next(iter(reports.keys()))
    stmt = parse('DELETE r FROM Reports WHERE r.reportId = rid;')
    plan = seeded.jobs.prepare(stmt, params=("rid",))
    job_id = seeded.jobs.deploy(plan)
    inv = seeded.jobs.run(job_id, {"rid": key})
    assert inv.result.deleted == 1
    assert reports.get(key) is None
    # run again with the same id: nothing left to delete
    assert seeded.jobs.run(job_id, {"rid": key}).result.deleted == 0


def test_undeploy_semantics(seeded):
    plan = seeded.jobs.prepare(parse(POLL))
    job_id = seeded.jobs.deploy(plan)
    assert seeded.jobs.undeploy(job_id) is True
    assert seeded.jobs.undeploy(job_id) is False
    assert seeded.jobs.undeploy("no-such-job") is False
    with pytest.raises(UnknownJob):
        seeded.jobs.run(job_id)


def test_adhoc_polling_query(seeded):
    inv = seeded.jobs.run_adhoc(POLL)
    assert inv.rows_out == 1
    row = inv.result.rows[0]
    assert row["r"]["Etype"] == "storm"
    assert row["shelters"] == [{"location": Point(110, 105)}]
    assert inv.parse_ms > 0 and inv.compile_ms > 0


def test_adhoc_syntax_error_means_no_execution(seeded):
    count = len(seeded.jobs.invocations)
    with pytest.raises(QuerySyntaxError):
        seeded.jobs.run_adhoc("SELECT FROM;")
    assert len(seeded.jobs.invocations) == count


def test_adhoc_and_deployed_agree_on_identical_snapshot(seeded):
    plan = seeded.jobs.prepare(parse(POLL))
    job_id = seeded.jobs.deploy(plan)
    a = seeded.jobs.run(job_id).result.rows
    b = seeded.jobs.run_adhoc(POLL).result.rows
    assert [freeze(r) for r in a] == [freeze(r) for r in b]


def test_determinism_across_repeated_runs(seeded):
    plan = seeded.jobs.prepare(parse(POLL))
    job_id = seeded.jobs.deploy(plan)
    rows = [tuple(freeze(r) for r in seeded.jobs.run(job_id).result.rows)
            for _ in range(5)]
    assert len(set(rows)) == 1


def test_deployed_runs_skip_parse_and_compile_cost(seeded):
    """100 deployed runs: zero parse+compile; ad-hoc pays both every time."""
    plan = seeded.jobs.prepare(parse(POLL))
    job_id = seeded.jobs.deploy(plan)
    deployed = [seeded.jobs.run(job_id) for _ in range(100)]
    adhoc = [seeded.jobs.run_adhoc(POLL) for _ in range(100)]
    assert sum(i.parse_ms + i.compile_ms for i in deployed) == 0.0
    assert sum(i.parse_ms + i.compile_ms for i in adhoc) > 0.0
    mean_deployed = statistics.mean(
        i.parse_ms + i.compile_ms + i.execute_ms for i in deployed)
    mean_adhoc = statistics.mean(
        i.parse_ms + i.compile_ms + i.execute_ms for i in adhoc)
    assert mean_deployed < mean_adhoc


def test_snapshot_isolation_run_never_sees_later_inserts(seeded, clock):
    # a snapshot taken at run start is immune to inserts that land mid-run;
    # datasets are frozen generations, so simulate the interleave explicitly
    snapshot = seeded.catalog.snapshot()
    seeded.catalog.dataset("Reports").insert({
        "Etype": "late", "location": Circle(Point(100, 100), 10),
        "timestamp": clock.now(),
    })
    from beacon.runtime import execute_plan

    plan = seeded.jobs.prepare(parse(POLL))
    rows = execute_plan(plan, snapshot, seeded.catalog, clock.now()).rows
    assert [r["r"]["Etype"] for r in rows] == ["storm"]


def test_invocation_export_json_lines(seeded):
    seeded.jobs.run_adhoc(POLL)
    lines = seeded.jobs.export_invocations().splitlines()
    record = json.loads(lines[-1])
    assert set(record) == {"jobId", "startedAt", "executeMs", "rowsOut"}
    assert record["rowsOut"] == 1
