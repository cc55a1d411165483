"""Admin HTTP surface: statement execution and stats, JSON over HTTP."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

logger = logging.getLogger(__name__)


class AdminServer:
    def __init__(self, engine, host: str = "127.0.0.1", port: int = 0):
        self.engine = engine
        handler = _make_handler(engine)
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._httpd.server_address[:2]
        return (host, port)

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="admin-http", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _make_handler(engine):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("admin: " + fmt, *args)

        def _reply(self, payload: dict, code: int = 200) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if self.path != "/ddl":
                self._reply({"status": "error", "error": "not found"}, 404)
                return
            length = int(self.headers.get("Content-Length", 0))
            text = self.rfile.read(length).decode("utf-8")
            try:
                out = engine.execute(text)
            except Exception as exc:  # defensive: never kill the handler thread
                logger.exception("admin /ddl failed")
                out = {"status": "error", "error": str(exc), "type": type(exc).__name__}
            self._reply(out, 200 if out.get("status") == "ok" else 400)

        def do_GET(self):
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            try:
                if parts == ["health"]:
                    self._reply({"status": "ok"})
                elif parts == ["channels"]:
                    names = sorted(engine.active.channels)
                    self._reply({"channels": [
                        engine.active.channel_stats(n) | {"ticks": None} for n in names
                    ]})
                elif len(parts) == 3 and parts[0] == "channels" and parts[2] == "stats":
                    self._reply(engine.active.channel_stats(parts[1]))
                elif len(parts) == 3 and parts[0] == "feeds" and parts[2] == "stats":
                    self._reply(engine.feeds.throughput_report(parts[1]))
                else:
                    self._reply({"status": "error", "error": "not found"}, 404)
            except Exception as exc:
                self._reply({"status": "error", "error": str(exc),
                             "type": type(exc).__name__}, 400)

    return Handler
