"""Brute-force verification of channel semantics by nested loops.

Deliberately independent of the engine's query path: no plans, no indexes,
and its own inline distance math.  The only shared ingredients are the
record field names.
"""

from __future__ import annotations

import math
from datetime import datetime


def brute_force_oracle(snapshot, subscriptions, window_start: datetime,
                       window_end: datetime) -> set:
    """Expected result set for one channel execution over a frozen snapshot.

    subscriptions: iterable of (subscription_id, user_name).
    Returns {(subscription_id, report_id, frozenset of shelter (x, y)), ...}
    for the window (window_start, window_end].
    """
    users = {}
    for rec in snapshot.dataset("UserLocations").records():
        users[rec["userName"]] = rec["location"]
    reports = [
        rec for rec in snapshot.dataset("Reports").records()
        if window_start < rec["timestamp"] <= window_end
    ]
    shelters = list(snapshot.dataset("Shelters").records())

    out = set()
    for sub_id, user_name in subscriptions:
        loc = users.get(user_name)
        if loc is None:
            continue
        ux, uy, ur = loc.center.x, loc.center.y, loc.radius
        near = []
        for sh in shelters:
            p = sh["location"]
            if math.hypot(p.x - ux, p.y - uy) <= ur:
                near.append((p.x, p.y))
        shelter_set = frozenset(near)
        for rep in reports:
            rl = rep["location"]
            if math.hypot(rl.center.x - ux, rl.center.y - uy) <= rl.radius + ur:
                out.add((sub_id, rep["reportId"], shelter_set))
    return out
