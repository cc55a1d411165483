"""Deployed jobs: compile once, cache, invoke many times with bindings.

Deployed runs skip parsing and compilation entirely; their phase timings
record zero for both, which is what separates them from ad-hoc runs.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime

from .clock import Clock
from .errors import MissingParameter, UnknownJob, UnsupportedConstruct
from .query import parse
from .query.ast import DeleteStmt, InsertStmt, QueryStmt
from .query.binder import bind
from .query.compiler import compile_plan
from .query.optimizer import optimize
from .query.plan import CatalogAction, PhysicalPlan
from .runtime import RunResult, execute_plan
from .values import format_datetime


@dataclass
class DeployedJobSpec:
    job_id: str
    plan: PhysicalPlan
    param_slots: tuple[str, ...]
    created_at: datetime


@dataclass
class JobInvocation:
    job_id: str
    started_at: datetime
    finished_at: datetime
    rows_out: int
    parse_ms: float
    compile_ms: float
    execute_ms: float
    result: RunResult = field(repr=False, default=None)

    def json_line(self) -> str:
        return json.dumps({
            "jobId": self.job_id,
            "startedAt": format_datetime(self.started_at),
            "executeMs": self.execute_ms,
            "rowsOut": self.rows_out,
        })


class JobRegistry:
    """Thread-safe registry of deployed plans plus the ad-hoc path."""

    def __init__(self, catalog, clock: Clock, history: int = 4096):
        self.catalog = catalog
        self.clock = clock
        self._lock = threading.Lock()
        self._jobs: dict[str, DeployedJobSpec] = {}
        self.invocations: deque[JobInvocation] = deque(maxlen=history)

    def __len__(self):
        return len(self._jobs)

    def deploy(self, plan: PhysicalPlan) -> str:
        job_id = str(uuid.uuid4())
        spec = DeployedJobSpec(job_id, plan, plan.param_slots, self.clock.now())
        with self._lock:
            self._jobs[job_id] = spec
        return job_id

    def undeploy(self, job_id: str) -> bool:
        with self._lock:
            return self._jobs.pop(job_id, None) is not None

    def job(self, job_id: str) -> DeployedJobSpec:
        spec = self._jobs.get(job_id)
        if spec is None:
            raise UnknownJob(f"no deployed job {job_id}")
        return spec

    def run(self, job_id: str, args: dict | None = None) -> JobInvocation:
        spec = self.job(job_id)
        args = dict(args or {})
        missing = [s for s in spec.param_slots if s not in args]
        if missing:
            raise MissingParameter(f"job {job_id} missing parameters: {missing}")
        return self._execute(spec.plan, args, job_id=job_id, parse_ms=0.0, compile_ms=0.0)

    def run_adhoc(self, text: str) -> JobInvocation:
        """Parse, bind, optimize, compile, and execute in one shot."""
        t0 = time.perf_counter()
        stmt = parse(text)
        t1 = time.perf_counter()
        if not isinstance(stmt, (QueryStmt, InsertStmt, DeleteStmt)):
            raise UnsupportedConstruct("only queries, inserts, and deletes run ad hoc")
        plan = self.prepare(stmt, text=text)
        t2 = time.perf_counter()
        return self._execute(plan, {}, job_id="adhoc",
                             parse_ms=(t1 - t0) * 1000.0,
                             compile_ms=(t2 - t1) * 1000.0)

    def prepare(self, stmt, params: tuple[str, ...] = (), text: str | None = None) -> PhysicalPlan:
        """bind -> optimize -> compile for a DML/query statement."""
        logical = bind(stmt, self.catalog, params)
        if isinstance(logical, CatalogAction):
            raise UnsupportedConstruct("DDL statements are dispatched by the engine")
        logical.text = text
        return compile_plan(optimize(logical, self.catalog), self.catalog)

    def _execute(self, plan: PhysicalPlan, args: dict,
                 job_id: str, parse_ms: float, compile_ms: float) -> JobInvocation:
        started = self.clock.now()
        execution_time = args.get("executionTime", started)
        snapshot = self.catalog.snapshot()
        t0 = time.perf_counter()
        result = execute_plan(plan, snapshot, self.catalog, execution_time, args)
        execute_ms = (time.perf_counter() - t0) * 1000.0
        # stored argument values are per-invocation and discarded here
        inv = JobInvocation(
            job_id=job_id,
            started_at=started,
            finished_at=self.clock.now(),
            rows_out=result.rows_out,
            parse_ms=parse_ms,
            compile_ms=compile_ms,
            execute_ms=execute_ms,
            result=result,
        )
        with self._lock:
            self.invocations.append(inv)
        return inv

    def export_invocations(self) -> str:
        with self._lock:
            return "\n".join(inv.json_line() for inv in self.invocations)
