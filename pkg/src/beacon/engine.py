"""Single-process engine: catalog, jobs, feeds, channels, scheduler, admin HTTP.

`execute(text)` takes one statement and returns a JSON-ready result dict;
the admin HTTP endpoint is a thin wrapper over it.  With a data directory,
DDL goes to ddl.log and record mutations to wal.jsonl; a restart replays
both (feeds and periodic procedures must be restarted explicitly).
"""

from __future__ import annotations

import logging
import os
import threading
from datetime import datetime

from . import values
from .channels import ActiveManager, Notifier
from .clock import Clock, SystemClock
from .errors import BeaconError, DuplicateName, UnsupportedConstruct
from .feeds import FeedManager
from .jobs import JobRegistry
from .query import parse, render
from .query import ast
from .query.binder import FunctionDef, bind
from .query.plan import CatalogAction
from .query.scalar import eval_scalar
from .scheduler import PeriodicScheduler
from .store import Catalog, Wal
from .values import duration_ms

logger = logging.getLogger(__name__)


class Engine:
    def __init__(self, data_dir: str | None = None, clock: Clock | None = None,
                 notifier: Notifier | None = None):
        self.clock = clock or SystemClock()
        self.data_dir = data_dir
        self._wal = None
        self._ddl_log = None
        self._replaying = False
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
        self.catalog = Catalog()
        self.jobs = JobRegistry(self.catalog, self.clock)
        self.feeds = FeedManager(self.catalog, self.clock)
        self.scheduler = PeriodicScheduler(self.clock)
        self.active = ActiveManager(self.catalog, self.jobs, self.scheduler,
                                    self.clock, notifier)
        self._admin = None
        self._lock = threading.RLock()
        if data_dir is not None:
            self._recover(data_dir)
            self._wal = Wal(os.path.join(data_dir, "wal.jsonl"))
            self.catalog._wal = self._wal
            for name in self.catalog.dataset_names():
                self.catalog.dataset(name)._wal = self._wal
            self._ddl_log = open(os.path.join(data_dir, "ddl.log"), "a", encoding="utf-8")
        self.scheduler.start()

    # -- persistence ------------------------------------------------------------

    def _recover(self, data_dir: str) -> None:
        ddl_path = os.path.join(data_dir, "ddl.log")
        wal_path = os.path.join(data_dir, "wal.jsonl")
        self._replaying = True
        try:
            if os.path.exists(ddl_path):
                with open(ddl_path, encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            self.execute(line)
            if os.path.exists(wal_path):
                n = Wal.replay(wal_path, self.catalog)
                logger.info("replayed %d record mutations", n)
        finally:
            self._replaying = False

    def _log_ddl(self, stmt: ast.Statement) -> None:
        if self._ddl_log is None or self._replaying:
            return
        durable = (ast.CreateType, ast.CreateDataset, ast.CreateIndex, ast.CreateFeed,
                   ast.ConnectFeed, ast.CreateFunction, ast.CreateChannel,
                   ast.CreateBroker, ast.CreateProcedure)
        if isinstance(stmt, durable):
            self._ddl_log.write(render(stmt).replace("\n", " ") + "\n")
            self._ddl_log.flush()

    # -- statement execution -------------------------------------------------------

    def execute(self, text: str) -> dict:
        """Run one statement; returns {"status": ..., "result": ...}."""
        try:
            stmt = parse(text)
            result = self.execute_statement(stmt, text=text)
            return {"status": "ok", "result": result}
        except BeaconError as exc:
            return {"status": "error", "error": str(exc), "type": type(exc).__name__}

    def execute_statement(self, stmt: ast.Statement, text: str | None = None):
        if isinstance(stmt, (ast.QueryStmt, ast.InsertStmt, ast.DeleteStmt)):
            inv = self.jobs.run_adhoc(text if text is not None else render(stmt))
            if isinstance(stmt, ast.QueryStmt):
                return {"rows": [values.to_wire(r) for r in inv.result.rows]}
            if isinstance(stmt, ast.InsertStmt):
                return {"inserted": len(inv.result.inserted)}
            return {"deleted": inv.result.deleted}
        with self._lock:
            return self._dispatch_ddl(stmt)

    def _dispatch_ddl(self, stmt: ast.Statement):
        bound = bind(stmt, self.catalog)
        assert isinstance(bound, CatalogAction)
        if isinstance(stmt, ast.UseStmt):
            return {"using": stmt.name}
        if isinstance(stmt, ast.CreateType):
            if self.catalog.types.get(stmt.name) is not None:
                raise DuplicateName(f"type {stmt.name} already exists")
            from .schema import DatatypeDef

            self.catalog.types.add(DatatypeDef(stmt.name, stmt.fields, stmt.open))
            self._log_ddl(stmt)
            return {"created": stmt.name}
        if isinstance(stmt, ast.CreateDataset):
            self.catalog.create_dataset(
                stmt.name, self.catalog.types.get(stmt.type_name),
                stmt.pk_field, stmt.autogenerated,
            )
            self._log_ddl(stmt)
            return {"created": stmt.name}
        if isinstance(stmt, ast.CreateIndex):
            self.catalog.create_index(stmt.name, stmt.dataset, stmt.field, stmt.kind)
            self._log_ddl(stmt)
            return {"created": stmt.name}
        if isinstance(stmt, ast.CreateFeed):
            feed = self.feeds.create_from_config(stmt.name, stmt.config)
            self._log_ddl(stmt)
            return {"created": feed.name}
        if isinstance(stmt, ast.ConnectFeed):
            self.feeds.connect_feed(stmt.feed, stmt.dataset, stmt.function)
            self._log_ddl(stmt)
            return {"connected": stmt.feed, "dataset": stmt.dataset}
        if isinstance(stmt, ast.StartFeed):
            feed = self.feeds.start_feed(stmt.feed)
            return {"started": feed.name, "port": feed.port}
        if isinstance(stmt, ast.StopFeed):
            self.feeds.stop_feed(stmt.feed)
            return {"stopped": stmt.feed}
        if isinstance(stmt, ast.CreateFunction):
            self.catalog.add_function(FunctionDef(stmt.name, stmt.params, stmt.body))
            self._log_ddl(stmt)
            return {"created": f"{stmt.name}@{len(stmt.params)}"}
        if isinstance(stmt, ast.CreateChannel):
            ch = self.active.create_channel(
                stmt.name, stmt.function, stmt.arity,
                duration_ms(stmt.period), stmt.dedup_path,
            )
            self._log_ddl(stmt)
            return {"created": ch.name, "jobId": ch.job_id,
                    "datasets": [ch.subs_dataset, ch.results_dataset]}
        if isinstance(stmt, ast.CreateBroker):
            self.active.create_broker(stmt.name, stmt.endpoint)
            self._log_ddl(stmt)
            return {"created": stmt.name}
        if isinstance(stmt, ast.CreateProcedure):
            period = duration_ms(stmt.period) if stmt.period is not None else None
            proc = self.active.create_procedure(stmt.name, stmt.params, stmt.body, period)
            self._log_ddl(stmt)
            return {"created": proc.name, "jobId": proc.job_id}
        if isinstance(stmt, ast.ExecuteProcedure):
            args = [eval_scalar(self._bind_literal(a), {}, self.clock.now())
                    for a in stmt.args]
            inv = self.active.execute_procedure(stmt.name, args)
            out = {"rowsOut": inv.rows_out}
            if inv.result.rows:
                out["rows"] = [values.to_wire(r) for r in inv.result.rows]
            proc = self.active.procedures[stmt.name]
            if proc.period_ms is not None:
                out["scheduled"] = proc.name
            return out
        if isinstance(stmt, ast.Subscribe):
            args = [eval_scalar(self._bind_literal(a), {}, self.clock.now())
                    for a in stmt.args]
            sub_id = self.active.subscribe(stmt.channel, args, stmt.broker)
            return {"subscriptionId": sub_id}
        if isinstance(stmt, ast.Unsubscribe):
            sub_id = eval_scalar(self._bind_literal(stmt.subscription_id), {},
                                 self.clock.now())
            removed = self.active.unsubscribe(stmt.channel, sub_id)
            return {"removed": removed}
        raise UnsupportedConstruct(f"cannot execute {type(stmt).__name__}")

    def _bind_literal(self, expr: ast.Expr):
        from .query.binder import Binder, _Scope

        return Binder(self.catalog).bind_expr(expr, _Scope(()))

    # -- admin HTTP -----------------------------------------------------------------

    def start_admin(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        from .httpadmin import AdminServer

        self._admin = AdminServer(self, host, port)
        self._admin.start()
        return self._admin.address

    @property
    def admin_url(self) -> str | None:
        if self._admin is None:
            return None
        host, port = self._admin.address
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.feeds.stop_all()
        self.scheduler.stop()
        self.active.notifier.close()
        if self._admin is not None:
            self._admin.stop()
            self._admin = None
        if self._ddl_log is not None:
            self._ddl_log.close()
            self._ddl_log = None
        if self._wal is not None:
            self._wal.close()
            self._wal = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
