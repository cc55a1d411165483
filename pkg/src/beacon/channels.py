"""The active control plane: channels, procedures, brokers, notifications.

A channel owns two internal datasets (<name>Subscriptions, <name>Results),
one deployed job, and one scheduler entry.  Each tick runs the shared job
with the tick's scheduled time bound as its execution time, stages
deduplicated results, and notifies each broker whose subscriptions gained
new rows.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime

import requests

from .clock import Clock
from .errors import (
    ArityMismatch,
    DuplicateName,
    UnknownBroker,
    UnknownChannel,
    UnknownFunction,
    UnknownProcedure,
    ValidationFailure,
)
from .jobs import JobRegistry
from .query.ast import DeleteStmt, InsertStmt, QueryStmt
from .query.compiler import compile_channel
from .schema import DatatypeDef, FieldSpec
from .scheduler import PeriodicScheduler
from .values import format_datetime, to_wire

logger = logging.getLogger(__name__)

BROKER_DATASET = "Metadata.Broker"


@dataclass
class TickReport:
    execution_time: datetime
    t_e_ms: float
    result_count: int
    notifications_sent: int
    failed: bool = False
    error: str | None = None

    def to_wire(self) -> dict:
        return {
            "executionTime": format_datetime(self.execution_time),
            "tE_ms": self.t_e_ms,
            "resultCount": self.result_count,
            "notificationsSent": self.notifications_sent,
            "failed": self.failed,
        }


@dataclass
class ChannelDef:
    name: str
    function: str
    arity: int
    period_ms: int
    subs_dataset: str
    results_dataset: str
    job_id: str
    dedup_path: list[str] | None
    created_at: datetime
    ticks: deque = field(default_factory=lambda: deque(maxlen=256))
    lock: threading.Lock = field(default_factory=threading.Lock)

    def state(self, scheduler: PeriodicScheduler) -> str:
        entry = scheduler.entry(f"channel:{self.name}")
        if entry is not None and entry.overloaded:
            return "overloaded"
        return "running"


@dataclass
class ProcedureDef:
    name: str
    params: list[str]
    period_ms: int | None
    job_id: str
    activated: bool = False
    runs: deque = field(default_factory=lambda: deque(maxlen=64))


class Notifier:
    """Fire-and-forget HTTP notification delivery (at most once)."""

    def __init__(self, workers: int = 4):
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="notify")
        self._pending: set = set()
        self._lock = threading.Lock()

    def post(self, endpoint: str, channel: str, execution_time: datetime,
             subscription_ids: list[str]) -> None:
        payload = {
            "channelName": channel,
            "channelExecutionTime": format_datetime(execution_time),
            "subscriptionIds": sorted(subscription_ids),
        }

        def send():
            try:
                requests.post(endpoint.rstrip("/") + "/notify", json=payload, timeout=10)
            except requests.RequestException as exc:
                # results stay staged; brokers recover by querying the results dataset
                logger.warning("notification to %s dropped: %s", endpoint, exc)

        fut = self._pool.submit(send)
        with self._lock:
            self._pending.add(fut)
        fut.add_done_callback(lambda f: self._pending.discard(f))

    def flush(self, timeout: float = 10.0) -> None:
        with self._lock:
            pending = list(self._pending)
        for fut in pending:
            try:
                fut.result(timeout=timeout)
            except Exception:
                pass

    def close(self) -> None:
        self._pool.shutdown(wait=True, cancel_futures=True)


class ActiveManager:
    def __init__(self, catalog, registry: JobRegistry, scheduler: PeriodicScheduler,
                 clock: Clock, notifier: Notifier | None = None):
        self.catalog = catalog
        self.registry = registry
        self.scheduler = scheduler
        self.clock = clock
        self.notifier = notifier or Notifier()
        self.channels: dict[str, ChannelDef] = {}
        self.procedures: dict[str, ProcedureDef] = {}
        self._lock = threading.Lock()
        self._ensure_broker_dataset()

    # -- brokers ---------------------------------------------------------------

    def _ensure_broker_dataset(self) -> None:
        if not self.catalog.has_dataset(BROKER_DATASET):
            dt = DatatypeDef("MetadataBroker", [
                FieldSpec("brokerName", "string"),
                FieldSpec("endpoint", "string"),
            ])
            self.catalog.types.add(dt)
            self.catalog.create_dataset(BROKER_DATASET, dt, "brokerName")

    def create_broker(self, name: str, endpoint: str) -> dict:
        # re-registration with the same name replaces the endpoint, so a broker
        # node can restart without manual cleanup
        record = {"brokerName": name, "endpoint": endpoint}
        self.catalog.dataset(BROKER_DATASET).upsert(record)
        return record

    def broker_endpoint(self, name: str) -> str:
        rec = self.catalog.dataset(BROKER_DATASET).get(name)
        if rec is None:
            raise UnknownBroker(f"no broker named {name}")
        return rec["endpoint"]

    def broker_names(self) -> list[str]:
        return sorted(self.catalog.dataset(BROKER_DATASET).keys())

    # -- channels ---------------------------------------------------------------

    def create_channel(self, name: str, fn_name: str, arity: int, period_ms: int,
                       dedup_path: list[str] | None = None) -> ChannelDef:
        with self._lock:
            if name in self.channels:
                raise DuplicateName(f"channel {name} already exists")
            if period_ms <= 0:
                raise ValidationFailure("channel period must be positive")
            fn = self.catalog.function(fn_name, arity)
            if fn is None:
                if any(self.catalog.function(fn_name, k) for k in range(0, 17)):
                    raise ArityMismatch(f"function {fn_name} exists but not with arity {arity}")
                raise UnknownFunction(f"no function {fn_name}@{arity}")

            subs_name = name + "Subscriptions"
            results_name = name + "Results"
            sub_type = DatatypeDef(f"{name}SubscriptionType", [
                FieldSpec("subscriptionId", "uuid", optional=True),
                FieldSpec("brokerName", "string"),
                *[FieldSpec(f"param{i}", "any") for i in range(arity)],
            ])
            result_type = DatatypeDef(f"{name}ResultType", [
                FieldSpec("resultId", "uuid", optional=True),
                FieldSpec("subscriptionId", "uuid"),
                FieldSpec("channelExecutionTime", "datetime"),
                FieldSpec("dedupKey", "any"),
                FieldSpec("payload", "object"),
            ])
            self.catalog.types.add(sub_type)
            self.catalog.types.add(result_type)
            self.catalog.create_dataset(subs_name, sub_type, "subscriptionId",
                                        autogenerated=True)
            results = self.catalog.create_dataset(results_name, result_type, "resultId",
                                                  autogenerated=True)
            results.add_unique_guard(("subscriptionId", "dedupKey"))
            self.catalog.create_index(f"{name}_result_time", results_name,
                                      "channelExecutionTime", "BTREE")
            plan = compile_channel(fn, subs_name, results_name, self.catalog,
                                   channel_name=name, dedup_path=dedup_path)
            job_id = self.registry.deploy(plan)
            ch = ChannelDef(
                name=name,
                function=fn_name,
                arity=arity,
                period_ms=period_ms,
                subs_dataset=subs_name,
                results_dataset=results_name,
                job_id=job_id,
                dedup_path=dedup_path,
                created_at=self.clock.now(),
            )
            self.channels[name] = ch
        self.scheduler.add(f"channel:{name}", period_ms,
                           lambda t, n=name: self.channel_tick(n, t))
        return ch

    def channel(self, name: str) -> ChannelDef:
        ch = self.channels.get(name)
        if ch is None:
            raise UnknownChannel(f"no channel named {name}")
        return ch

    def subscribe(self, channel: str, params: list, broker: str) -> str:
        ch = self.channel(channel)
        self.broker_endpoint(broker)  # raises UnknownBroker
        if len(params) != ch.arity:
            raise ArityMismatch(
                f"channel {channel} takes {ch.arity} parameter(s), got {len(params)}"
            )
        record = {"brokerName": broker}
        for i, v in enumerate(params):
            record[f"param{i}"] = v
        return self.catalog.dataset(ch.subs_dataset).insert(record)

    def unsubscribe(self, channel: str, subscription_id: str) -> bool:
        ch = self.channel(channel)
        return self.catalog.dataset(ch.subs_dataset).delete_key(subscription_id)

    def channel_tick(self, name: str, execution_time: datetime | None = None) -> TickReport:
        """Run one shared execution; stages results and notifies brokers."""
        ch = self.channel(name)
        when = execution_time or self.clock.now()
        with ch.lock:  # single-flight per channel
            try:
                inv = self.registry.run(ch.job_id, {"executionTime": when})
            except Exception as exc:
                logger.exception("channel %s tick failed", name)
                report = TickReport(when, 0.0, 0, 0, failed=True, error=str(exc))
                ch.ticks.append(report)
                return report
            notifications = inv.result.notifications
            for broker_name, sub_ids in sorted(notifications.items()):
                try:
                    endpoint = self.broker_endpoint(broker_name)
                except UnknownBroker:
                    logger.warning("results staged for unknown broker %s", broker_name)
                    continue
                self.notifier.post(endpoint, name, when, list(sub_ids))
            report = TickReport(
                execution_time=when,
                t_e_ms=inv.execute_ms,
                result_count=len(inv.result.inserted),
                notifications_sent=len(notifications),
            )
            ch.ticks.append(report)
            return report

    def channel_stats(self, name: str) -> dict:
        ch = self.channel(name)
        entry = self.scheduler.entry(f"channel:{name}")
        return {
            "name": ch.name,
            "function": f"{ch.function}@{ch.arity}",
            "periodMs": ch.period_ms,
            "state": ch.state(self.scheduler),
            "subscriptions": len(self.catalog.dataset(ch.subs_dataset)),
            "stagedResults": len(self.catalog.dataset(ch.results_dataset)),
            "fired": entry.fired if entry else 0,
            "skipped": entry.skipped if entry else 0,
            "ticks": [t.to_wire() for t in ch.ticks],
        }

    # -- procedures ----------------------------------------------------------------

    def create_procedure(self, name: str, params: list[str], body,
                         period_ms: int | None) -> ProcedureDef:
        with self._lock:
            if name in self.procedures:
                raise DuplicateName(f"procedure {name} already exists")
            if not isinstance(body, (QueryStmt, InsertStmt, DeleteStmt)):
                raise ValidationFailure("procedure bodies are queries, inserts, or deletes")
            plan = self.registry.prepare(body, tuple(params))
            job_id = self.registry.deploy(plan)
            proc = ProcedureDef(name, list(params), period_ms, job_id)
            self.procedures[name] = proc
            return proc

    def execute_procedure(self, name: str, args: list):
        proc = self.procedures.get(name)
        if proc is None:
            raise UnknownProcedure(f"no procedure named {name}")
        if len(args) != len(proc.params):
            raise ArityMismatch(
                f"procedure {name} takes {len(proc.params)} argument(s), got {len(args)}"
            )
        bound = dict(zip(proc.params, args))
        inv = self._run_procedure(proc, bound, self.clock.now())
        if proc.period_ms is not None and not proc.activated:
            proc.activated = True
            self.scheduler.add(
                f"procedure:{name}", proc.period_ms,
                lambda t, p=proc, a=dict(bound): self._run_procedure(p, a, t),
            )
        return inv

    def _run_procedure(self, proc: ProcedureDef, args: dict, when: datetime):
        inv = self.registry.run(proc.job_id, {**args, "executionTime": when})
        proc.runs.append(inv)
        return inv

    def drop_channel_schedule(self, name: str) -> None:
        self.scheduler.remove(f"channel:{name}")
