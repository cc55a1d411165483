"""Clock abstraction so correctness tests can drive time by hand."""

from __future__ import annotations

import threading
from datetime import datetime, timedelta, timezone


def truncate_ms(dt: datetime) -> datetime:
    """Drop sub-millisecond precision; all engine timestamps are ms-grained."""
    return dt - timedelta(microseconds=dt.microsecond % 1000)


class Clock:
    def now(self) -> datetime:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> datetime:
        return truncate_ms(datetime.now(timezone.utc))


class ManualClock(Clock):
    """Settable clock; never advances on its own."""

    def __init__(self, start: datetime | None = None):
        self._lock = threading.Lock()
        self._now = truncate_ms(start or datetime(2020, 1, 1, tzinfo=timezone.utc))

    def now(self) -> datetime:
        with self._lock:
            return self._now

    def set(self, dt: datetime) -> None:
        with self._lock:
            self._now = truncate_ms(dt)

    def advance(self, ms: int) -> datetime:
        with self._lock:
            self._now += timedelta(milliseconds=ms)
            return self._now
