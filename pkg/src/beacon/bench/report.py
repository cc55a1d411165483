"""CSV and figure emission for bench runs."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .. import values  # noqa: E402
from .breakpoint import BreakpointResult  # noqa: E402
from .drivers import MetricsLog  # noqa: E402

TICK_FIELDS = ["tick", "executionTime", "tE_ms", "tF_ms", "resultCount"]
BREAKPOINT_FIELDS = ["rate", "mode", "maxSubscribers", "capped"]


def write_ticks_csv(path: str, metrics: MetricsLog) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TICK_FIELDS)
        for i, t in enumerate(metrics.ticks):
            w.writerow([i, values.format_datetime(t.execution_time),
                        repr(t.t_e_ms), repr(t.t_f_ms), t.result_count])


def write_breakpoints_csv(path: str, rows: list[tuple[float, str, BreakpointResult]]) -> None:
    """rows: (rate, mode, result) triples."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BREAKPOINT_FIELDS)
        for rate, mode, result in rows:
            w.writerow([repr(float(rate)), mode, result.max_supportable,
                        int(result.capped)])


def read_csv(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_ticks(path: str, metrics: MetricsLog, title: str = "") -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    xs = list(range(len(metrics.ticks)))
    ax.plot(xs, [t.t_e_ms for t in metrics.ticks], marker="o", label="execution ms")
    if any(t.t_f_ms for t in metrics.ticks):
        ax.plot(xs, [t.t_f_ms for t in metrics.ticks], marker="s", label="fetch ms")
    ax.axhline(metrics.period_ms, color="red", linestyle="--", linewidth=1,
               label="period budget")
    ax.set_xlabel("tick")
    ax.set_ylabel("milliseconds")
    ax.set_yscale("log")
    ax2 = ax.twinx()
    ax2.bar(xs, [t.result_count for t in metrics.ticks], alpha=0.25, color="gray",
            label="results")
    ax2.set_ylabel("results per tick")
    ax.legend(loc="upper left")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_breakpoints(path: str, rows: list[tuple[float, str, BreakpointResult]],
                     title: str = "supportable subscribers vs report rate") -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    by_mode: dict[str, list[tuple[float, int]]] = {}
    for rate, mode, result in rows:
        by_mode.setdefault(mode, []).append((rate, max(1, result.max_supportable)))
    fig, ax = plt.subplots(figsize=(7, 5))
    for mode, points in sorted(by_mode.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=mode)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("reports per second")
    ax.set_ylabel("max supportable subscribers")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
