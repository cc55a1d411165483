"""Broker node: the one-to-many boundary between subscribers and the cluster.

Subscribers talk JSON/HTTP to the broker; the broker subscribes on their
behalf, forwards location records to the cluster's feed socket, receives
tick notifications, and serves results from a per-subscription cache
backed by cluster queries.  Results themselves are always pulled; a lost
notification therefore only delays delivery, never loses data.
"""

from __future__ import annotations

import json
import logging
import re
import socket
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

from . import values
from .errors import ClusterUnavailable, UnknownLocalSub
from .values import format_datetime, freeze, to_literal

logger = logging.getLogger(__name__)

EPOCH_TEXT = "1970-01-01T00:00:00.000Z"


@dataclass
class BrokerConfig:
    broker_name: str
    cluster_admin_url: str
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    location_feed_addr: str | None = None  # "host:port"
    fetch_policy: str = "LAZY"             # LAZY | EAGER
    sharing: bool = False
    cache_executions: int = 64
    cluster_concurrency: int = 8

    @classmethod
    def from_file(cls, path: str) -> "BrokerConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            broker_name=raw["brokerName"],
            cluster_admin_url=raw["clusterAdminUrl"],
            listen_host=raw.get("listenAddr", "127.0.0.1:0").rsplit(":", 1)[0],
            listen_port=int(raw.get("listenAddr", "127.0.0.1:0").rsplit(":", 1)[1]),
            location_feed_addr=raw.get("locationFeedAddr"),
            fetch_policy=raw.get("fetchPolicy", "LAZY").upper(),
            sharing=bool(raw.get("sharing", False)),
        )


def load_assignments(path: str) -> dict[str, str]:
    """Static subscriber-to-broker assignment map (JSON object)."""
    with open(path, encoding="utf-8") as fh:
        return dict(json.load(fh))


@dataclass
class SubscriberSession:
    local_sub_id: str
    channel: str
    params: list
    cluster_sub_id: str
    last_delivered: datetime | None = None
    dirty: bool = False
    cond: threading.Condition = field(default_factory=threading.Condition)


@dataclass
class SharedSubscriptionEntry:
    cluster_sub_id: str
    members: set = field(default_factory=set)

    @property
    def ref_count(self) -> int:
        return len(self.members)


class _ResultCache:
    """Per cluster-subscription ring of the last N executions' payload rows."""

    def __init__(self, max_executions: int):
        self.max_executions = max_executions
        self.by_execution: OrderedDict[datetime, list] = OrderedDict()
        self.fetched_at: float | None = None

    def add_rows(self, rows: list[tuple[datetime, dict]]) -> None:
        for when, payload in rows:
            self.by_execution.setdefault(when, []).append(payload)
        while len(self.by_execution) > self.max_executions:
            self.by_execution.popitem(last=False)
        self.fetched_at = time.monotonic()

    def watermark(self) -> datetime | None:
        if not self.by_execution:
            return None
        return max(self.by_execution)

    def floor(self) -> datetime | None:
        if not self.by_execution:
            return None
        return min(self.by_execution)

    def rows_after(self, since: datetime | None) -> list[tuple[datetime, dict]]:
        out = []
        for when in sorted(self.by_execution):
            if since is None or when > since:
                for payload in self.by_execution[when]:
                    out.append((when, payload))
        return out


class ClusterClient:
    """Thin stateless wrapper over the cluster's statement endpoint."""

    def __init__(self, admin_url: str, concurrency: int = 8, retries: int = 3):
        self.admin_url = admin_url.rstrip("/")
        self.retries = retries
        self._session = requests.Session()
        self._gate = threading.Semaphore(concurrency)

    def execute(self, text: str) -> dict:
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(0.1 * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self._session.post(f"{self.admin_url}/ddl", data=text.encode("utf-8"),
                                              timeout=30)
                out = resp.json()
                if out.get("status") == "ok":
                    return out["result"]
                # statement-level errors are not transient: surface immediately
                raise ClusterUnavailable(out.get("error", "cluster rejected statement"))
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise ClusterUnavailable(f"cluster unreachable: {last_error}")

    def register_broker(self, name: str, endpoint: str) -> None:
        self.execute(f'CREATE BROKER {name} AT "{endpoint}";')

    def subscribe(self, channel: str, params: list, broker_name: str) -> str:
        args = ", ".join(to_literal(p) for p in params)
        result = self.execute(f"SUBSCRIBE TO {channel}({args}) ON {broker_name};")
        return result["subscriptionId"]

    def unsubscribe(self, channel: str, cluster_sub_id: str) -> bool:
        result = self.execute(f'UNSUBSCRIBE "{cluster_sub_id}" FROM {channel};')
        return bool(result.get("removed"))

    def fetch_results(self, channel: str, cluster_sub_id: str,
                      since: datetime | None) -> list[tuple[datetime, dict]]:
        since_text = format_datetime(since) if since is not None else EPOCH_TEXT
        text = (
            f"SELECT VALUE r FROM {channel}Results r "
            f'WHERE r.subscriptionId = "{cluster_sub_id}" '
            f'AND r.channelExecutionTime > datetime("{since_text}");'
        )
        rows = self.execute(text)["rows"]
        out = []
        for raw in rows:
            rec = values.from_wire(raw)
            out.append((rec["channelExecutionTime"], rec.get("payload", {})))
        out.sort(key=lambda pair: pair[0])
        return out


class BrokerNode:
    def __init__(self, config: BrokerConfig):
        self.config = config
        self.cluster = ClusterClient(config.cluster_admin_url, config.cluster_concurrency)
        self.sessions: dict[str, SubscriberSession] = {}
        self.shared: dict[tuple, SharedSubscriptionEntry] = {}
        self.caches: dict[str, _ResultCache] = {}
        self.cluster_subs: dict[str, list[str]] = {}  # cluster id -> member local ids
        self.channel_of: dict[str, str] = {}          # cluster id -> channel
        self.fetch_log: list[dict] = []               # per-notification fetch timings
        self._lock = threading.RLock()
        self._feed_sock: socket.socket | None = None
        self._feed_lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> tuple[str, int]:
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer(
            (self.config.listen_host, self.config.listen_port), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name=f"broker-{self.config.broker_name}",
                                        daemon=True)
        self._thread.start()
        self.cluster.register_broker(self.config.broker_name, self.url)
        return self.address

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._httpd.server_address[:2]
        return (host, port)

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        with self._feed_lock:
            if self._feed_sock is not None:
                try:
                    self._feed_sock.close()
                except OSError:
                    pass
                self._feed_sock = None

    # -- subscriber operations --------------------------------------------------

    def subscribe(self, channel: str, params: list) -> str:
        local_id = str(uuid.uuid4())
        with self._lock:
            if self.config.sharing:
                key = (channel, tuple(freeze(p) for p in params))
                entry = self.shared.get(key)
                if entry is None:
                    cluster_id = self.cluster.subscribe(channel, params,
                                                        self.config.broker_name)
                    entry = SharedSubscriptionEntry(cluster_id)
                    self.shared[key] = entry
                entry.members.add(local_id)
                cluster_id = entry.cluster_sub_id
            else:
                cluster_id = self.cluster.subscribe(channel, params,
                                                    self.config.broker_name)
            session = SubscriberSession(local_id, channel, list(params), cluster_id)
            self.sessions[local_id] = session
            self.cluster_subs.setdefault(cluster_id, []).append(local_id)
            self.channel_of[cluster_id] = channel
            self.caches.setdefault(cluster_id, _ResultCache(self.config.cache_executions))
        return local_id

    def unsubscribe(self, local_sub_id: str) -> bool:
        with self._lock:
            session = self.sessions.pop(local_sub_id, None)
            if session is None:
                return False
            members = self.cluster_subs.get(session.cluster_sub_id, [])
            if local_sub_id in members:
                members.remove(local_sub_id)
            if self.config.sharing:
                key = (session.channel, tuple(freeze(p) for p in session.params))
                entry = self.shared.get(key)
                if entry is not None:
                    entry.members.discard(local_sub_id)
                    if entry.ref_count > 0:
                        return True
                    del self.shared[key]
            # last local member: withdraw the cluster subscription
            self.cluster.unsubscribe(session.channel, session.cluster_sub_id)
            self.cluster_subs.pop(session.cluster_sub_id, None)
            self.caches.pop(session.cluster_sub_id, None)
            self.channel_of.pop(session.cluster_sub_id, None)
        return True

    def session(self, local_sub_id: str) -> SubscriberSession:
        session = self.sessions.get(local_sub_id)
        if session is None:
            raise UnknownLocalSub(f"no subscription {local_sub_id} on this broker")
        return session

    def adopt_subscription(self, cluster_sub_id: str, channel: str) -> None:
        """Track a subscription created directly on the cluster (bench loads).

        Notifications for it trigger fetches and caching, but no subscriber
        session is attached.
        """
        with self._lock:
            self.cluster_subs.setdefault(cluster_sub_id, [])
            self.channel_of[cluster_sub_id] = channel
            self.caches.setdefault(cluster_sub_id,
                                   _ResultCache(self.config.cache_executions))

    def forward_location(self, record_line: str) -> None:
        """Write one record verbatim to the cluster's location feed socket."""
        if self.config.location_feed_addr is None:
            raise ClusterUnavailable("broker has no location feed address configured")
        host, _, port = self.config.location_feed_addr.rpartition(":")
        data = record_line.strip() + "\n"
        with self._feed_lock:
            for attempt in (0, 1):
                if self._feed_sock is None:
                    self._feed_sock = socket.create_connection((host, int(port)), timeout=10)
                try:
                    self._feed_sock.sendall(data.encode("utf-8"))
                    return
                except OSError:
                    try:
                        self._feed_sock.close()
                    except OSError:
                        pass
                    self._feed_sock = None
            raise ClusterUnavailable("location feed connection failed")

    def get_results(self, local_sub_id: str, since: datetime | None) -> list[dict]:
        session = self.session(local_sub_id)
        cache = self.caches[session.cluster_sub_id]
        if self.config.fetch_policy == "LAZY":
            self._fetch_increment(session.cluster_sub_id)
        floor = cache.floor()
        if since is not None and floor is not None and since < floor:
            # requested range predates the ring: go straight to the cluster
            rows = self.cluster.fetch_results(session.channel, session.cluster_sub_id, since)
        else:
            rows = cache.rows_after(since)
        with session.cond:
            session.dirty = False
            if rows:
                session.last_delivered = max(when for when, _ in rows)
        return [
            {"channelExecutionTime": format_datetime(when), "payload": values.to_wire(p)}
            for when, p in rows
        ]

    def poll_notify(self, local_sub_id: str, timeout_s: float = 30.0) -> bool:
        session = self.session(local_sub_id)
        deadline = time.monotonic() + timeout_s
        with session.cond:
            while not session.dirty:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                session.cond.wait(timeout=remaining)
            return True

    # -- cluster-facing ------------------------------------------------------------

    def handle_notify(self, message: dict) -> None:
        sub_ids = message.get("subscriptionIds") or []
        known = [s for s in sub_ids if s in self.cluster_subs]
        unknown = [s for s in sub_ids if s not in self.cluster_subs]
        if unknown:
            logger.info("notification for %d unknown subscription(s) ignored", len(unknown))
        if not known:
            return
        if self.config.fetch_policy == "EAGER":
            t0 = time.perf_counter()
            fetched = 0
            for cluster_id in known:
                fetched += self._fetch_increment(cluster_id)
            self.fetch_log.append({
                "channelExecutionTime": message.get("channelExecutionTime"),
                "tF_ms": (time.perf_counter() - t0) * 1000.0,
                "rows": fetched,
            })
        for cluster_id in known:
            for local_id in self.cluster_subs.get(cluster_id, []):
                session = self.sessions.get(local_id)
                if session is None:
                    continue
                with session.cond:
                    session.dirty = True
                    session.cond.notify_all()

    def _fetch_increment(self, cluster_id: str) -> int:
        """Pull rows newer than the cache watermark; retries ride on the client."""
        cache = self.caches.get(cluster_id)
        channel = self.channel_of.get(cluster_id)
        if cache is None or channel is None:
            return 0
        rows = self.cluster.fetch_results(channel, cluster_id, cache.watermark())
        cache.add_rows(rows)
        return len(rows)


# ---------------------------------------------------------------------------
# HTTP surface

_RESULTS_RE = re.compile(r"^/results/([0-9a-f-]+)$")
_POLL_RE = re.compile(r"^/poll-notify/([0-9a-f-]+)$")
_UNSUB_RE = re.compile(r"^/subscribe/([0-9a-f-]+)$")


def _make_handler(node: BrokerNode):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("broker: " + fmt, *args)

        def _reply(self, payload, code: int = 200, retry_after: int | None = None):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            if retry_after is not None:
                self.send_header("Retry-After", str(retry_after))
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            return self.rfile.read(length)

        def do_POST(self):
            try:
                if self.path == "/subscribe":
                    raw = json.loads(self._body())
                    params = [values.from_wire(p) for p in raw.get("params", [])]
                    local_id = node.subscribe(raw["channel"], params)
                    self._reply({"localSubId": local_id})
                elif self.path == "/location":
                    node.forward_location(self._body().decode("utf-8"))
                    self._reply({"status": "ok"})
                elif self.path == "/notify":
                    node.handle_notify(json.loads(self._body()))
                    self._reply({"status": "ok"})
                else:
                    self._reply({"error": "not found"}, 404)
            except ClusterUnavailable as exc:
                self._reply({"error": str(exc)}, 503, retry_after=1)
            except UnknownLocalSub as exc:
                self._reply({"error": str(exc)}, 404)
            except Exception as exc:
                logger.exception("broker POST %s failed", self.path)
                self._reply({"error": str(exc)}, 400)

        def do_DELETE(self):
            m = _UNSUB_RE.match(self.path)
            if not m:
                self._reply({"error": "not found"}, 404)
                return
            try:
                removed = node.unsubscribe(m.group(1))
                self._reply({"removed": removed}, 200 if removed else 404)
            except ClusterUnavailable as exc:
                self._reply({"error": str(exc)}, 503, retry_after=1)

        def do_GET(self):
            path, _, query = self.path.partition("?")
            params = {}
            for pair in query.split("&"):
                if "=" in pair:
                    k, v = pair.split("=", 1)
                    params[k] = requests.utils.unquote(v)
            try:
                m = _RESULTS_RE.match(path)
                if m:
                    since = None
                    if "since" in params:
                        since = values.parse_datetime(params["since"])
                    rows = node.get_results(m.group(1), since)
                    self._reply({"results": rows})
                    return
                m = _POLL_RE.match(path)
                if m:
                    timeout = float(params.get("timeoutMs", "30000")) / 1000.0
                    fresh = node.poll_notify(m.group(1), timeout)
                    self._reply({"new": fresh})
                    return
                if path == "/health":
                    self._reply({"status": "ok", "broker": node.config.broker_name})
                    return
                self._reply({"error": "not found"}, 404)
            except UnknownLocalSub as exc:
                self._reply({"error": str(exc)}, 404)
            except ClusterUnavailable as exc:
                self._reply({"error": str(exc)}, 503, retry_after=1)
            except Exception as exc:
                logger.exception("broker GET %s failed", self.path)
                self._reply({"error": str(exc)}, 400)

    return Handler
