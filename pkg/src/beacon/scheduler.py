"""Periodic scheduler: one timer thread, a worker pool, single-flight entries.

Entries fire at multiples of their period from activation.  If an execution
is still running when its next firing comes due, that firing is skipped and
the entry is flagged overloaded; executions of one entry never overlap.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta

logger = logging.getLogger(__name__)


@dataclass
class ScheduleEntry:
    name: str
    period_ms: int
    callback: object                 # callback(scheduled_time: datetime)
    activated_at: datetime
    activated_mono: float
    fired: int = 0
    skipped: int = 0
    overloaded: bool = False
    busy: bool = False
    next_step: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock)

    def scheduled_time(self, step: int) -> datetime:
        return self.activated_at + timedelta(milliseconds=step * self.period_ms)


class PeriodicScheduler:
    def __init__(self, clock, workers: int = 8):
        self.clock = clock
        self._entries: dict[str, ScheduleEntry] = {}
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="sched")
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._loop, name="scheduler", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        self._pool.shutdown(wait=True, cancel_futures=True)

    def add(self, name: str, period_ms: int, callback) -> ScheduleEntry:
        if period_ms <= 0:
            raise ValueError("period must be positive")
        entry = ScheduleEntry(
            name=name,
            period_ms=period_ms,
            callback=callback,
            activated_at=self.clock.now(),
            activated_mono=time.monotonic(),
        )
        with self._lock:
            self._entries[name] = entry
        self._wake.set()
        return entry

    def remove(self, name: str) -> bool:
        with self._lock:
            return self._entries.pop(name, None) is not None

    def entry(self, name: str) -> ScheduleEntry | None:
        return self._entries.get(name)

    def _loop(self) -> None:
        while not self._stop.is_set():
            now = time.monotonic()
            next_due = None
            with self._lock:
                entries = list(self._entries.values())
            for entry in entries:
                due_at = entry.activated_mono + entry.next_step * entry.period_ms / 1000.0
                if due_at <= now:
                    self._fire(entry)
                    due_at = entry.activated_mono + entry.next_step * entry.period_ms / 1000.0
                if next_due is None or due_at < next_due:
                    next_due = due_at
            timeout = 0.05 if next_due is None else max(0.0, min(next_due - time.monotonic(), 0.5))
            self._wake.wait(timeout=timeout)
            self._wake.clear()

    def _fire(self, entry: ScheduleEntry) -> None:
        step = entry.next_step
        entry.next_step += 1
        with entry.lock:
            if entry.busy:
                # the previous execution overran its period
                entry.skipped += 1
                entry.overloaded = True
                return
            entry.busy = True

        scheduled = entry.scheduled_time(step)

        def run():
            try:
                entry.callback(scheduled)
            except Exception:
                logger.exception("scheduled entry %s failed", entry.name)
            finally:
                entry.fired += 1
                with entry.lock:
                    entry.busy = False

        self._pool.submit(run)
