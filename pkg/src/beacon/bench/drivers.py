"""Workload drivers: virtual-clock correctness runs and wall-clock trials.

The virtual driver writes trace records straight into the datasets with
explicit timestamps and ticks the channel by hand, so result-set checks are
exact and instant.  The wall-clock drivers replay traces into real feed
sockets with the scheduler running, which is what the throughput and
breakpoint measurements use.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import requests

from .. import values
from ..broker import BrokerConfig, BrokerNode
from ..channels import Notifier
from ..clock import ManualClock
from ..engine import Engine
from ..values import Circle, Point
from . import app
from .scenario import TraceBundle

logger = logging.getLogger(__name__)

VIRTUAL_EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)


class NullNotifier(Notifier):
    """Drops notifications; used when no broker is part of a run."""

    def __init__(self):
        pass

    def post(self, endpoint, channel, execution_time, subscription_ids):
        return

    def flush(self, timeout: float = 0.0):
        return

    def close(self):
        return


@dataclass
class TickMetrics:
    execution_time: datetime
    t_e_ms: float
    t_f_ms: float
    result_count: int


@dataclass
class MetricsLog:
    period_ms: int
    mode: str
    ticks: list[TickMetrics] = field(default_factory=list)
    unfinished: int = 0  # passive: updates left unserved past their window

    @property
    def max_te(self) -> float:
        return max((t.t_e_ms for t in self.ticks), default=0.0)

    @property
    def max_tf(self) -> float:
        return max((t.t_f_ms for t in self.ticks), default=0.0)

    @property
    def overloaded(self) -> bool:
        if self.unfinished:
            return True
        return any(max(t.t_e_ms, t.t_f_ms) >= self.period_ms for t in self.ticks)

    @property
    def mean_result_count(self) -> float:
        if not self.ticks:
            return 0.0
        return sum(t.result_count for t in self.ticks) / len(self.ticks)


# ---------------------------------------------------------------------------
# virtual-clock correctness driver


@dataclass
class VirtualRun:
    engine: Engine
    clock: ManualClock
    metrics: MetricsLog
    sub_of_user: dict[str, str]        # userName -> subscriptionId
    base: datetime
    oracle_per_tick: list[set] = field(default_factory=list)

    @property
    def oracle_union(self) -> set:
        """Per-tick oracle sets folded with first-wins (subscription, report)
        dedup, mirroring the channel's staging semantics."""
        seen = set()
        out = set()
        for tick_set in self.oracle_per_tick:
            for sub_id, report_id, shelters in sorted(tick_set, key=repr):
                if (sub_id, report_id) not in seen:
                    seen.add((sub_id, report_id))
                    out.add((sub_id, report_id, shelters))
        return out

    def close(self):
        self.engine.close()


def run_virtual(bundle: TraceBundle, *, window: str | None = None,
                history_reports: int = 0, broker_name: str = "bench-broker",
                broker_endpoint: str | None = None, dedup: bool = True,
                capture_oracle: bool = False) -> VirtualRun:
    """Replay a trace tick by tick on a manual clock and collect exact metrics."""
    config = bundle.config
    clock = ManualClock(VIRTUAL_EPOCH)
    notifier = None if broker_endpoint else NullNotifier()
    engine = Engine(clock=clock, notifier=notifier)
    period_iso = f"PT{config.period_ms / 1000:g}S"
    app.install(engine, with_feeds=False, with_channel=True,
                window=window or period_iso, period=period_iso, dedup=dedup)
    engine.active.create_broker(broker_name, broker_endpoint or "http://unreachable.invalid")

    shelters_ds = engine.catalog.dataset("Shelters")
    for rec in bundle.shelters:
        shelters_ds.insert(rec)
    if history_reports:
        preload_history(engine, history_reports, VIRTUAL_EPOCH - timedelta(days=1))

    sub_of_user = {}
    for name in bundle.user_names:
        sub_of_user[name] = engine.active.subscribe(app.CHANNEL, [name], broker_name)

    metrics = MetricsLog(period_ms=config.period_ms, mode="active")
    run = VirtualRun(engine, clock, metrics, sub_of_user, VIRTUAL_EPOCH)

    users = engine.catalog.dataset("UserLocations")
    reports = engine.catalog.dataset("Reports")
    li = ri = 0
    for k in range(1, bundle.period_count + 1):
        window_end_ms = k * config.period_ms
        li = _apply_locations(bundle, users, clock, li, window_end_ms)
        ri = _apply_reports(bundle, reports, clock, ri, window_end_ms)
        when = VIRTUAL_EPOCH + timedelta(milliseconds=window_end_ms)
        clock.set(when)
        if capture_oracle:
            from .oracle import brute_force_oracle

            subs = [(sid, name) for name, sid in sub_of_user.items()]
            run.oracle_per_tick.append(brute_force_oracle(
                engine.catalog.snapshot(), subs,
                when - timedelta(milliseconds=config.period_ms), when))
        report = engine.active.channel_tick(app.CHANNEL, when)
        metrics.ticks.append(TickMetrics(when, report.t_e_ms, 0.0, report.result_count))
    return run


def _apply_locations(bundle, dataset, clock, i, until_ms):
    trace = bundle.locations
    while i < len(trace) and trace[i]["atMs"] <= until_ms:
        env = trace[i]
        stamp = VIRTUAL_EPOCH + timedelta(milliseconds=env["atMs"])
        rec = dict(env["record"])
        rec["timestamp"] = stamp
        dataset.upsert(rec)
        i += 1
    return i


def _apply_reports(bundle, dataset, clock, i, until_ms):
    trace = bundle.reports
    while i < len(trace) and trace[i]["atMs"] <= until_ms:
        env = trace[i]
        rec = dict(env["record"])
        rec["timestamp"] = VIRTUAL_EPOCH + timedelta(milliseconds=env["atMs"])
        dataset.insert(rec)
        i += 1
    return i


def preload_history(engine: Engine, count: int, before: datetime) -> None:
    """Old reports well outside any evaluation window."""
    reports = engine.catalog.dataset("Reports")
    for i in range(count):
        reports.insert({
            "Etype": "flood",
            "location": Circle(Point(float(i % 4500), float(i % 3400)), 50.0),
            "timestamp": before - timedelta(milliseconds=i),
        })


def staged_result_set(engine: Engine, channel: str = app.CHANNEL) -> set:
    """Channel results as {(subscriptionId, reportId, shelter set)}."""
    out = set()
    for rec in engine.catalog.dataset(channel + "Results").snapshot().records():
        payload = rec["payload"]
        shelters = frozenset(
            (s["location"].x, s["location"].y) for s in payload["shelters"]
        )
        out.add((rec["subscriptionId"], payload["report"]["reportId"], shelters))
    return out


def passive_result_set(engine: Engine, users: dict[str, Circle],
                       window: str = "PT10S") -> set:
    """Per-user polling over the same frozen data; keyed by user name."""
    out = set()
    for name, loc in users.items():
        text = app.polling_query(loc.center.x, loc.center.y, loc.radius, window)
        inv = engine.jobs.run_adhoc(text)
        for row in inv.result.rows:
            shelters = frozenset(
                (s["location"].x, s["location"].y) for s in row["shelters"]
            )
            out.add((name, row["r"]["reportId"], shelters))
    return out


def current_user_locations(engine: Engine) -> dict[str, Circle]:
    return {
        rec["userName"]: rec["location"]
        for rec in engine.catalog.dataset("UserLocations").snapshot().records()
    }


# ---------------------------------------------------------------------------
# wall-clock drivers


@dataclass
class ActiveRunHandles:
    engine: Engine
    broker: BrokerNode
    location_port: int
    report_port: int

    def close(self):
        self.broker.stop()
        self.engine.close()


def _send_trace(port: int, trace: list, t0: float, compress: float,
                stop: threading.Event) -> None:
    try:
        with socket.create_connection(("127.0.0.1", port)) as sock:
            for env in trace:
                if stop.is_set():
                    return
                due = t0 + env["atMs"] / 1000.0 / compress
                delay = due - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                sock.sendall((values.dumps(env["record"]) + "\n").encode("utf-8"))
    except OSError as exc:
        logger.warning("trace sender to port %d stopped: %s", port, exc)


def run_active(bundle: TraceBundle, *, history_reports: int = 20_000,
               compress: float = 1.0, settle_s: float = 0.5) -> MetricsLog:
    """Wall-clock active run: feeds + scheduler + an eager broker."""
    config = bundle.config
    period_ms = max(1, int(config.period_ms / compress))
    window_iso = f"PT{period_ms / 1000:g}S"
    engine = Engine()
    app.install(engine, with_feeds=True, with_channel=False, window=window_iso)
    engine.execute(f"START FEED {app.LOCATION_FEED};")
    engine.execute(f"START FEED {app.REPORT_FEED};")
    location_port = engine.feeds.feed(app.LOCATION_FEED).port
    report_port = engine.feeds.feed(app.REPORT_FEED).port
    host, admin_port = engine.start_admin()

    broker = BrokerNode(BrokerConfig(
        broker_name="benchBroker",
        cluster_admin_url=f"http://{host}:{admin_port}",
        location_feed_addr=f"127.0.0.1:{location_port}",
        fetch_policy="EAGER",
    ))
    broker.start()

    shelters_ds = engine.catalog.dataset("Shelters")
    for rec in bundle.shelters:
        shelters_ds.insert(rec)
    if history_reports:
        preload_history(engine, history_reports, engine.clock.now() - timedelta(days=1))

    # subscriptions load: straight into the channel datasets, adopted by the
    # broker so notifications trigger its eager fetches
    engine.execute(app.channel_statement(window_iso, dedup=True))
    for name in bundle.user_names:
        cluster_id = engine.active.subscribe(app.CHANNEL, [name], "benchBroker")
        broker.adopt_subscription(cluster_id, app.CHANNEL)

    stop = threading.Event()
    t0 = time.monotonic()
    senders = [
        threading.Thread(target=_send_trace,
                         args=(location_port, bundle.locations, t0, compress, stop),
                         daemon=True),
        threading.Thread(target=_send_trace,
                         args=(report_port, bundle.reports, t0, compress, stop),
                         daemon=True),
    ]
    for t in senders:
        t.start()
    deadline = t0 + config.duration_s / compress + period_ms / 1000.0 + settle_s
    while time.monotonic() < deadline:
        time.sleep(0.05)
    stop.set()

    metrics = MetricsLog(period_ms=period_ms, mode="active")
    fetch_by_time = {f["channelExecutionTime"]: f for f in broker.fetch_log}
    ch = engine.active.channel(app.CHANNEL)
    for tick in list(ch.ticks):
        stamp = values.format_datetime(tick.execution_time)
        t_f = fetch_by_time.get(stamp, {}).get("tF_ms", 0.0)
        metrics.ticks.append(TickMetrics(tick.execution_time, tick.t_e_ms,
                                         t_f, tick.result_count))
    entry = engine.scheduler.entry(f"channel:{app.CHANNEL}")
    if entry is not None and entry.overloaded:
        metrics.unfinished += entry.skipped
    broker.stop()
    engine.close()
    return metrics


def run_passive(bundle: TraceBundle, n_pollers: int, *, history_reports: int = 20_000,
                compress: float = 1.0) -> MetricsLog:
    """Polling baseline: location updates consumed by poller threads issuing
    one ad-hoc query per update against the admin endpoint."""
    config = bundle.config
    period_ms = max(1, int(config.period_ms / compress))
    window_iso = f"PT{period_ms / 1000:g}S"
    engine = Engine()
    app.install(engine, with_feeds=True, with_channel=False, window=window_iso)
    engine.execute(f"START FEED {app.REPORT_FEED};")
    report_port = engine.feeds.feed(app.REPORT_FEED).port
    host, admin_port = engine.start_admin()
    ddl_url = f"http://{host}:{admin_port}/ddl"

    shelters_ds = engine.catalog.dataset("Shelters")
    for rec in bundle.shelters:
        shelters_ds.insert(rec)
    if history_reports:
        preload_history(engine, history_reports, engine.clock.now() - timedelta(days=1))

    updates: queue.Queue = queue.Queue()
    windows: dict[int, dict] = {}
    win_lock = threading.Lock()
    stop = threading.Event()

    def poller():
        session = requests.Session()
        while True:
            try:
                item = updates.get(timeout=0.2)
            except queue.Empty:
                if stop.is_set():
                    return
                continue
            wid, loc = item
            text = app.polling_query(loc.center.x, loc.center.y, loc.radius, window_iso)
            try:
                session.post(ddl_url, data=text.encode("utf-8"), timeout=30).json()
            except requests.RequestException:
                pass
            finally:
                with win_lock:
                    windows[wid]["done"] += 1
                    windows[wid]["finished_at"] = time.monotonic()

    workers = [threading.Thread(target=poller, daemon=True) for _ in range(n_pollers)]
    for w in workers:
        w.start()

    stop_send = threading.Event()
    t0 = time.monotonic()
    sender = threading.Thread(
        target=_send_trace, args=(report_port, bundle.reports, t0, compress, stop_send),
        daemon=True)
    sender.start()

    period_s = period_ms / 1000.0
    for env in bundle.locations:
        due = t0 + env["atMs"] / 1000.0 / compress
        delay = due - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        wid = env["atMs"] // config.period_ms
        with win_lock:
            windows.setdefault(wid, {"sent": 0, "done": 0, "start": t0 + wid * period_s,
                                     "finished_at": None})
            windows[wid]["sent"] += 1
        updates.put((wid, env["record"]["location"]))
    # let the last window drain up to its deadline
    last_deadline = t0 + (max(windows) + 1) * period_s if windows else t0
    while time.monotonic() < last_deadline + 0.2:
        time.sleep(0.02)
    stop_send.set()
    stop.set()
    for w in workers:
        w.join(timeout=2)

    metrics = MetricsLog(period_ms=period_ms, mode="passive")
    with win_lock:
        for wid in sorted(windows):
            info = windows[wid]
            window_end = info["start"] + period_s
            if info["done"] < info["sent"]:
                metrics.unfinished += info["sent"] - info["done"]
                drain_ms = float(period_ms)  # never finished inside the window
            else:
                finished = info["finished_at"] or info["start"]
                drain_ms = max(0.0, (finished - info["start"]) * 1000.0)
                if finished > window_end:
                    metrics.unfinished += 1
            metrics.ticks.append(TickMetrics(
                engine.clock.now(), drain_ms, 0.0, info["done"]))
    engine.close()
    return metrics
