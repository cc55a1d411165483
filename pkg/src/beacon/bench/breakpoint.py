"""Search for the largest supportable subscriber count.

The supportable(N) predicate is treated as monotone non-increasing in N:
exponential probing finds a failing ceiling, then binary search narrows the
boundary down to `resolution`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .drivers import run_active, run_passive
from .scenario import ScenarioConfig, generate_scenario

logger = logging.getLogger(__name__)


@dataclass
class BreakpointResult:
    report_rate: float
    max_supportable: int
    capped: bool = False
    trace: list[tuple[int, bool]] = field(default_factory=list)


def breakpoint_search(probe, *, report_rate: float = 0.0, start: int = 1,
                      cap: int = 4096, growth: int = 2,
                      resolution: int = 1) -> BreakpointResult:
    """probe(N) -> bool, True when N subscribers are supportable."""
    result = BreakpointResult(report_rate=report_rate, max_supportable=0)

    def check(n: int) -> bool:
        ok = bool(probe(n))
        result.trace.append((n, ok))
        logger.info("breakpoint probe N=%d -> %s", n, "ok" if ok else "overloaded")
        return ok

    n = max(1, start)
    if not check(n):
        if n > 1 and check(1):
            n = 1
        else:
            result.max_supportable = 0
            return result
    lo = n
    hi = None
    while True:
        nxt = min(cap, n * growth)
        if nxt <= n:
            break
        n = nxt
        if check(n):
            lo = n
            if n >= cap:
                break
        else:
            hi = n
            break
    if hi is None:
        result.max_supportable = lo
        result.capped = lo >= cap
        return result
    while hi - lo > resolution:
        mid = (lo + hi) // 2
        if check(mid):
            lo = mid
        else:
            hi = mid
    result.max_supportable = lo
    return result


def make_trial_probe(mode: str, report_rate: float, *, seed: int = 1, case: int = 1,
                     period_ms: int = 10_000, trial_ticks: int = 6,
                     pollers: int = 1, compress: float = 1.0,
                     history_reports: int = 2_000):
    """supportable(N) evaluated by a bounded wall-clock trial run."""

    def probe(n: int) -> bool:
        config = ScenarioConfig(
            seed=seed + n,  # fresh but deterministic placement per trial size
            case=case,
            user_count=n,
            report_rate_per_sec=report_rate,
            duration_s=trial_ticks * period_ms / 1000.0,
            period_ms=period_ms,
        )
        bundle = generate_scenario(config)
        if mode == "active":
            metrics = run_active(bundle, history_reports=history_reports,
                                 compress=compress)
        else:
            metrics = run_passive(bundle, pollers, history_reports=history_reports,
                                  compress=compress)
        return not metrics.overloaded

    return probe
