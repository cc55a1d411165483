"""Interpreter for physical operator trees.

Reads go against the snapshot taken at invocation start; sink writes go to
the live catalog.  Rows are environment dicts mapping aliases to records;
projection turns an environment into an output value.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .errors import EvalTypeError, UnsupportedConstruct
from .query.plan import (
    PDeleteSink,
    PEnrich,
    PEquiJoin,
    PFilter,
    PIndexedSpatialJoin,
    PInsertSink,
    PNestedLoopJoin,
    PNotifySink,
    PProject,
    PScan,
    PSingleton,
    PSpatialProbe,
    PSubqueryScan,
    PTimeScan,
    PhysicalPlan,
)
from .query.scalar import EvalContext, eval_expr
from .values import freeze, sort_key


def _canonical(rows) -> list:
    # subquery results materialized as array values carry no meaningful
    # order; sorting makes every plan shape produce the identical array
    return sorted(rows, key=sort_key)


@dataclass
class RunResult:
    rows: list = dc_field(default_factory=list)
    inserted: list = dc_field(default_factory=list)   # records as stored
    deleted: int = 0
    notifications: dict = dc_field(default_factory=dict)  # broker -> set of sub ids

    @property
    def rows_out(self) -> int:
        if self.rows:
            return len(self.rows)
        if self.inserted:
            return len(self.inserted)
        return self.deleted


class Executor:
    def __init__(self, snapshot, live_catalog, execution_time, args: dict):
        self.snapshot = snapshot
        self.live = live_catalog
        self.ctx = EvalContext(
            execution_time=execution_time,
            args=dict(args),
            subquery_runner=self._run_subquery,
        )
        self._enrich_memo: dict[int, list] = {}

    # -- entry points ---------------------------------------------------------

    def execute(self, plan: PhysicalPlan) -> RunResult:
        root = plan.root
        result = RunResult()
        if isinstance(root, PProject):
            result.rows = list(self._project(root, {}))
        elif isinstance(root, PNotifySink):
            self._insert(root.child, result)
            for rec, carries in result.inserted:
                broker = carries.get("brokerName")
                sub = rec.get(root.subscription_field)
                if broker is not None and sub is not None:
                    result.notifications.setdefault(broker, set()).add(sub)
        elif isinstance(root, PInsertSink):
            self._insert(root, result)
        elif isinstance(root, PDeleteSink):
            ds = self.live.dataset(root.dataset)
            keys = [self._eval(root.key, env) for env in self._iter(root.child, {})]
            result.deleted = sum(1 for k in keys if ds.delete_key(k))
        else:
            raise UnsupportedConstruct(f"cannot execute {type(root).__name__}")
        return result

    def _eval(self, expr, env):
        return eval_expr(expr, env, self.ctx)

    def _run_subquery(self, subq, env, ctx) -> list:
        if subq.plan is None:
            raise UnsupportedConstruct("subquery was not compiled")
        return _canonical(self._project(subq.plan.root, env))

    # -- operators -------------------------------------------------------------

    def _iter(self, op, base_env: dict):
        if op is None or isinstance(op, PSingleton):
            yield dict(base_env)
            return
        if isinstance(op, PScan):
            snap = self.snapshot.dataset(op.dataset)
            for rec in snap.records():
                yield {**base_env, op.alias: rec}
            return
        if isinstance(op, PTimeScan):
            snap = self.snapshot.dataset(op.dataset)
            low = self._eval(op.low, base_env)
            high = self._eval(op.high, base_env) if op.high is not None else None
            keys = snap.index_scan(op.index, low, high, op.low_inclusive, True)
            for k in keys:
                rec = snap.fetch(k)
                if rec is not None:
                    yield {**base_env, op.alias: rec}
            return
        if isinstance(op, PSpatialProbe):
            snap = self.snapshot.dataset(op.dataset)
            region = self._eval(op.region, base_env)
            if region is None:
                return
            for k in snap.index_probe(op.index, region):
                rec = snap.fetch(k)
                if rec is not None:
                    yield {**base_env, op.alias: rec}
            return
        if isinstance(op, PSubqueryScan):
            for v in self._project(op.subplan.root, base_env):
                yield {**base_env, op.alias: v}
            return
        if isinstance(op, PFilter):
            for env in self._iter(op.child, base_env):
                if all(self._truthy(c, env) for c in op.conjuncts):
                    yield env
            return
        if isinstance(op, PNestedLoopJoin):
            for left in self._iter(op.left, base_env):
                for env in self._iter(op.right, left):
                    if all(self._truthy(c, env) for c in op.conjuncts):
                        yield env
            return
        if isinstance(op, PEquiJoin):
            table: dict = {}
            for renv in self._iter(op.right, base_env):
                key = tuple(freeze(self._eval(k, renv)) for k in op.right_keys)
                table.setdefault(key, []).append(renv)
            for lenv in self._iter(op.left, base_env):
                key = tuple(freeze(self._eval(k, lenv)) for k in op.left_keys)
                for renv in table.get(key, ()):
                    env = {**lenv, **{k: v for k, v in renv.items() if k not in lenv}}
                    if all(self._truthy(c, env) for c in op.residual):
                        yield env
            return
        if isinstance(op, PIndexedSpatialJoin):
            snap = self.snapshot.dataset(op.dataset)
            for left in self._iter(op.left, base_env):
                geom = self._eval(op.left_geom, left)
                if geom is None:
                    continue
                for k in snap.index_probe(op.index, geom):
                    rec = snap.fetch(k)
                    if rec is None:
                        continue
                    env = {**left, op.alias: rec}
                    if all(self._truthy(c, env) for c in op.refine):
                        yield env
            return
        if isinstance(op, PEnrich):
            for env in self._iter(op.child, base_env):
                if op.uncorrelated:
                    memo_key = id(op)
                    if memo_key not in self._enrich_memo:
                        self._enrich_memo[memo_key] = _canonical(
                            self._project(op.subplan.root, {})
                        )
                    value = list(self._enrich_memo[memo_key])
                else:
                    value = _canonical(self._project(op.subplan.root, env))
                yield {**env, op.alias: value}
            return
        raise UnsupportedConstruct(f"cannot iterate {type(op).__name__}")

    def _truthy(self, conjunct, env) -> bool:
        v = self._eval(conjunct, env)
        if isinstance(v, bool):
            return v
        if v is None:
            return False
        raise EvalTypeError("filter expressions must be boolean")

    def _project(self, proj: PProject, base_env: dict):
        for env in self._iter(proj.child, base_env):
            if proj.value is not None:
                yield self._eval(proj.value, env)
            else:
                yield {name: self._eval(e, env) for name, e in proj.items}

    def _insert(self, sink: PInsertSink, result: RunResult) -> None:
        ds = self.live.dataset(sink.dataset)
        for env in self._iter(sink.child, {}):
            record = self._eval(sink.record, env)
            if not isinstance(record, dict):
                raise EvalTypeError("INSERT needs an object-valued record")
            if sink.unique_fields and ds.guard_contains(sink.unique_fields, record):
                continue
            key = ds.insert(record)
            stored = ds.get(key)
            carries = {name: self._eval(e, env) for name, e in sink.carry}
            result.inserted.append((stored, carries))


def execute_plan(plan: PhysicalPlan, snapshot, live_catalog, execution_time,
                 args: dict | None = None) -> RunResult:
    return Executor(snapshot, live_catalog, execution_time, args or {}).execute(plan)
