"""Continuous ingestion: socket listener -> parser -> UDF -> replicated branches.

Records arrive as newline-delimited JSON, one per line.  Each connected
dataset is an isolated branch: a failure storing to one branch never blocks
its siblings.  UPSERT is the default store policy, so replaying a stream is
idempotent for keyed records.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field

from .clock import Clock
from .errors import (
    DuplicateKey,
    DuplicateName,
    NotConnected,
    PortInUse,
    UnknownDataset,
    UnknownFeed,
    UnknownFunction,
    ValidationFailure,
)
from .query.binder import Binder, _Scope
from .query.scalar import EvalContext, eval_expr
from . import values

logger = logging.getLogger(__name__)

QUEUE_CAPACITY = 10_000  # per-connection backpressure bound


@dataclass
class FeedDef:
    name: str
    adapter: str          # "socket_adapter" (pluggable)
    host: str
    port: int
    type_name: str
    format: str = "json"  # "adm" is accepted as an alias for the JSON wire form


@dataclass
class FeedConnection:
    dataset: str
    function: str | None = None
    policy: str = "UPSERT"  # UPSERT | INSERT
    udf_expr: object = None
    udf_param: str | None = None
    stored: int = 0
    failures: int = 0


@dataclass
class FeedStats:
    records_parsed: int = 0
    records_stored: int = 0
    parse_failures: int = 0
    duplicate_rejections: int = 0
    started_at: float | None = None
    per_second: dict[int, int] = field(default_factory=dict)

    def snapshot(self, branches: list[FeedConnection]) -> dict:
        return {
            "recordsParsed": self.records_parsed,
            "recordsStored": self.records_stored,
            "parseFailures": self.parse_failures,
            "duplicateRejections": self.duplicate_rejections,
            "branches": {
                b.dataset: {"stored": b.stored, "failures": b.failures} for b in branches
            },
        }


class _FeedRuntime:
    """Listener plus per-connection reader/worker pairs for one feed."""

    def __init__(self, feed: "Feed", manager: "FeedManager"):
        self.feed = feed
        self.manager = manager
        self._server: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._conn_threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self.bound_port: int | None = None

    def start(self) -> None:
        try:
            self._server = socket.create_server(
                (self.feed.definition.host, self.feed.definition.port), reuse_port=False
            )
        except OSError as exc:
            raise PortInUse(
                f"cannot listen on {self.feed.definition.host}:{self.feed.definition.port}: {exc}"
            ) from exc
        self._server.settimeout(0.2)
        self.bound_port = self._server.getsockname()[1]
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"feed-{self.feed.definition.name}", daemon=True
        )
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _addr = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._conn_threads.append(t)

    def _serve_connection(self, conn: socket.socket) -> None:
        lines: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
        done = object()

        def read_loop():
            try:
                with conn, conn.makefile("r", encoding="utf-8", newline="\n") as fh:
                    for line in fh:
                        lines.put(line)  # blocks when full: natural backpressure
            except OSError:
                pass
            finally:
                lines.put(done)

        reader = threading.Thread(target=read_loop, daemon=True)
        reader.start()
        while True:
            item = lines.get()
            if item is done:
                break
            line = item.strip()
            if line:
                self.feed.ingest_line(line)

    def stop(self) -> None:
        self._stopping.set()
        if self._server is not None:
            try:
                self._server.close()
            except OSError:
                pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
        for t in list(self._conn_threads):
            t.join(timeout=5)


class Feed:
    def __init__(self, definition: FeedDef, manager: "FeedManager"):
        self.definition = definition
        self.manager = manager
        self.connections: list[FeedConnection] = []
        self.stats = FeedStats()
        self.state = "created"  # created | running | stopped
        self.runtime: _FeedRuntime | None = None
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.definition.name

    @property
    def port(self) -> int | None:
        if self.runtime is not None:
            return self.runtime.bound_port
        return self.definition.port

    def ingest_line(self, line: str) -> bool:
        try:
            record = values.loads(line)
        except Exception:
            with self._lock:
                self.stats.records_parsed += 1
                self.stats.parse_failures += 1
            return False
        return self.ingest_record(record)

    def ingest_record(self, record) -> bool:
        """One record through parse -> validate -> UDF -> every branch."""
        manager = self.manager
        stats = self.stats
        with self._lock:
            stats.records_parsed += 1
        feed_type = manager.catalog.types.get(self.definition.type_name)
        try:
            record = manager.catalog.types.validate(feed_type, record)
        except ValidationFailure:
            with self._lock:
                stats.parse_failures += 1
            return False
        ok = bool(self.connections)
        duplicate = False
        for branch in self.connections:
            try:
                out = record
                if branch.udf_expr is not None:
                    ctx = EvalContext(execution_time=manager.clock.now(),
                                      args={branch.udf_param: record})
                    out = eval_expr(branch.udf_expr, {branch.udf_param: record}, ctx)
                self._store(branch, out)
                branch.stored += 1
            except DuplicateKey:
                branch.failures += 1
                duplicate = True
                ok = False
            except Exception:
                logger.exception("feed %s: branch %s failed", self.name, branch.dataset)
                branch.failures += 1
                ok = False
        with self._lock:
            if ok:
                stats.records_stored += 1
                if stats.started_at is not None:
                    second = int(time.monotonic() - stats.started_at)
                    stats.per_second[second] = stats.per_second.get(second, 0) + 1
            elif duplicate:
                stats.duplicate_rejections += 1
        return ok

    def _store(self, branch: FeedConnection, record) -> None:
        ds = self.manager.catalog.dataset(branch.dataset)
        if branch.policy == "INSERT":
            ds.insert(record)
        elif ds.pk_field in record:
            ds.upsert(record)
        else:
            ds.insert(record)  # autogenerated keys: every record is new


class FeedManager:
    def __init__(self, catalog, clock: Clock):
        self.catalog = catalog
        self.clock = clock
        self._feeds: dict[str, Feed] = {}
        self._lock = threading.Lock()

    def create_feed(self, definition: FeedDef) -> Feed:
        with self._lock:
            if definition.name in self._feeds:
                raise DuplicateName(f"feed {definition.name} already exists")
            if self.catalog.types.get(definition.type_name) is None:
                raise ValidationFailure(f"unknown feed type {definition.type_name!r}")
            feed = Feed(definition, self)
            self._feeds[definition.name] = feed
            return feed

    def create_from_config(self, name: str, config: dict) -> Feed:
        adapter = config.get("adapter-name", "socket_adapter")
        if adapter != "socket_adapter":
            raise ValidationFailure(f"unsupported adapter {adapter!r}")
        sockets = config.get("sockets", "127.0.0.1:0")
        host, _, port = sockets.rpartition(":")
        return self.create_feed(FeedDef(
            name=name,
            adapter=adapter,
            host=host or "127.0.0.1",
            port=int(port),
            type_name=config["type-name"],
            format=config.get("format", "json"),
        ))

    def feed(self, name: str) -> Feed:
        feed = self._feeds.get(name)
        if feed is None:
            raise UnknownFeed(f"no feed named {name}")
        return feed

    def names(self) -> list[str]:
        return sorted(self._feeds)

    def connect_feed(self, feed_name: str, dataset: str, function: str | None = None,
                     policy: str = "UPSERT") -> FeedConnection:
        feed = self.feed(feed_name)
        if not self.catalog.has_dataset(dataset):
            raise UnknownDataset(f"dataset {dataset} does not exist")
        conn = FeedConnection(dataset=dataset, function=function, policy=policy)
        if function is not None:
            fn = self.catalog.function(function, 1)
            if fn is None:
                raise UnknownFunction(f"feed UDFs must be unary; no {function}@1")
            binder = Binder(self.catalog, tuple(fn.params))
            conn.udf_expr = binder.bind_expr(fn.body, _Scope(tuple(fn.params)))
            conn.udf_param = fn.params[0]
        feed.connections.append(conn)
        return conn

    def start_feed(self, feed_name: str) -> Feed:
        feed = self.feed(feed_name)
        if not feed.connections:
            raise NotConnected(f"feed {feed_name} has no connected dataset")
        if feed.state == "running":
            return feed
        for other in self._feeds.values():
            if (other.state == "running" and other is not feed
                    and other.port == feed.definition.port and feed.definition.port != 0):
                raise PortInUse(f"port {feed.definition.port} already serves {other.name}")
        feed.runtime = _FeedRuntime(feed, self)
        feed.runtime.start()
        feed.stats.started_at = time.monotonic()
        feed.state = "running"
        return feed

    def stop_feed(self, feed_name: str) -> Feed:
        feed = self.feed(feed_name)
        if feed.state == "running" and feed.runtime is not None:
            feed.runtime.stop()
            feed.runtime = None
        feed.state = "stopped"
        return feed

    def stop_all(self) -> None:
        for name in list(self._feeds):
            self.stop_feed(name)

    def throughput_report(self, feed_name: str, window_seconds: int = 1) -> dict:
        feed = self.feed(feed_name)
        report = feed.stats.snapshot(feed.connections)
        history: list[int] = []
        if feed.stats.started_at is not None:
            elapsed = int(time.monotonic() - feed.stats.started_at)
            windows = elapsed // max(1, window_seconds)
            for w in range(windows):
                lo = w * window_seconds
                history.append(sum(
                    feed.stats.per_second.get(s, 0) for s in range(lo, lo + window_seconds)
                ))
        report["throughputHistory"] = history
        report["state"] = feed.state
        report["port"] = feed.port
        return report
