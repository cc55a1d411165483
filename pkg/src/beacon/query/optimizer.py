"""Rule-based plan rewrites.

Applied in order: conjunct placement (each filter runs at the earliest
point its aliases are bound), temporal index selection, spatial index
selection (source probes and index nested-loop joins), and equi-join
keying.  Every rewrite preserves query semantics; when no rule applies the
plan comes back unchanged in shape.

One deliberate semantic note: a lower-bound conjunct of the shape
``ts > current_datetime() - D`` becomes an index window scan over
``(now - D, now]``.  The inclusive upper bound anchors each evaluation's
window at its execution time, so consecutive periodic evaluations see
gapless, non-overlapping windows even when records are stamped while an
evaluation is in flight.
"""

from __future__ import annotations

import copy

from .plan import (
    ArrayExpr,
    BoundSelect,
    Cmp,
    Field,
    FullScan,
    Func,
    Logic,
    LogicalPlan,
    NegE,
    NotE,
    ObjectExpr,
    Arith,
    SpatialProbe,
    SubqueryExpr,
    TimeWindow,
    Var,
    refs,
)


def optimize(plan: LogicalPlan, catalog) -> LogicalPlan:
    out = copy.deepcopy(plan)
    if out.select is not None:
        out.select = _optimize_select(out.select, catalog)
    if out.record is not None:
        _optimize_exprs([out.record], catalog)
    return out


def _optimize_select(sel: BoundSelect, catalog) -> BoundSelect:
    for src in sel.sources:
        if src.subquery is not None:
            src.subquery = _optimize_select(src.subquery, catalog)
    _optimize_exprs(sel.conjuncts, catalog)
    if sel.value is not None:
        _optimize_exprs([sel.value], catalog)
    for _, e in sel.items or []:
        _optimize_exprs([e], catalog)

    _place_conjuncts(sel)
    local_aliases = {s.alias for s in sel.sources}
    for src in sel.sources:
        if src.kind == "dataset":
            _choose_access(src, catalog, local_aliases)
    prefix: set[str] = set()
    for i, src in enumerate(sel.sources):
        if i > 0 and src.kind == "dataset":
            _choose_join(src, prefix, local_aliases, catalog)
        prefix.add(src.alias)
    return sel


def _optimize_exprs(exprs, catalog) -> None:
    # nested subquery expressions get the same treatment
    for e in exprs:
        for sub in _subqueries(e):
            sub.select = _optimize_select(sub.select, catalog)


def _subqueries(e):
    if isinstance(e, SubqueryExpr):
        yield e
    elif isinstance(e, Field):
        yield from _subqueries(e.base)
    elif isinstance(e, Func):
        for a in e.args:
            yield from _subqueries(a)
    elif isinstance(e, (Cmp, Arith)):
        yield from _subqueries(e.left)
        yield from _subqueries(e.right)
    elif isinstance(e, Logic):
        for a in e.items:
            yield from _subqueries(a)
    elif isinstance(e, (NotE, NegE)):
        yield from _subqueries(e.expr)
    elif isinstance(e, ObjectExpr):
        for _, v in e.fields:
            yield from _subqueries(v)
    elif isinstance(e, ArrayExpr):
        for v in e.items:
            yield from _subqueries(v)


def _place_conjuncts(sel: BoundSelect) -> None:
    if not sel.sources:
        return
    position = {src.alias: i for i, src in enumerate(sel.sources)}
    local = set(position)
    remaining = []
    for c in sel.conjuncts:
        here = refs(c) & local
        if not here:
            sel.sources[0].local_filters.append(c)
            continue
        at = max(position[a] for a in here)
        src = sel.sources[at]
        if len(here) == 1 and src.kind in ("dataset", "iterate") and here == {src.alias}:
            src.local_filters.append(c)
        else:
            src.join_filters.append(c)
    sel.conjuncts = remaining


def _choose_access(src, catalog, local_aliases) -> None:
    ds = catalog.dataset(src.dataset)
    for c in list(src.local_filters):
        window = _match_temporal(c, src.alias, ds, local_aliases)
        if window is not None:
            src.access = window
            src.local_filters.remove(c)
            return
    for c in src.local_filters:
        probe = _match_probe(c, src.alias, ds, local_aliases)
        if probe is not None:
            src.access = probe  # conjunct stays: probe only yields candidates
            return


def _match_temporal(c, alias, ds, local_aliases) -> TimeWindow | None:
    if not isinstance(c, Cmp) or c.op not in (">", ">="):
        return None
    lhs, rhs = c.left, c.right
    if not (isinstance(lhs, Field) and isinstance(lhs.base, Var) and lhs.base.name == alias):
        return None
    if refs(rhs) & local_aliases:
        return None
    index = ds.index_for_field(lhs.name, "BTREE")
    if index is None:
        return None
    high = None
    if (isinstance(rhs, Arith) and rhs.op == "-"
            and isinstance(rhs.left, Func) and rhs.left.name == "current_datetime"):
        high = Func("current_datetime", [])
    return TimeWindow(index, low=rhs, high=high, low_inclusive=(c.op == ">="))


def _match_probe(c, alias, ds, local_aliases) -> SpatialProbe | None:
    geom = _spatial_args(c)
    if geom is None:
        return None
    a, b = geom
    for mine, other in ((a, b), (b, a)):
        if (isinstance(mine, Field) and isinstance(mine.base, Var)
                and mine.base.name == alias
                and not (refs(other) & local_aliases)):
            index = ds.index_for_field(mine.name, "RTREE")
            if index is not None:
                return SpatialProbe(index, region=other)
    return None


def _spatial_args(c):
    if isinstance(c, Func) and c.name == "spatial_intersect" and len(c.args) == 2:
        return c.args[0], c.args[1]
    return None


def _choose_join(src, prefix: set[str], local_aliases: set[str], catalog) -> None:
    left_keys, right_keys, rest = [], [], []
    for c in src.join_filters:
        sides = _equi_sides(c, prefix, {src.alias}, local_aliases)
        if sides is not None:
            left_keys.append(sides[0])
            right_keys.append(sides[1])
        else:
            rest.append(c)
    if left_keys:
        src.join_equi = (left_keys, right_keys)
        src.join_filters = rest
        return
    if not isinstance(src.access, FullScan) or src.local_filters:
        # an index join replaces the scan entirely; only a bare scan qualifies
        pass_filters = None
    else:
        pass_filters = True
    if pass_filters:
        ds = catalog.dataset(src.dataset)
        for c in src.join_filters:
            geom = _spatial_args(c)
            if geom is None:
                continue
            for mine, other in ((geom[1], geom[0]), (geom[0], geom[1])):
                if (isinstance(mine, Field) and isinstance(mine.base, Var)
                        and mine.base.name == src.alias):
                    other_refs = refs(other) & local_aliases
                    if other_refs and other_refs <= prefix:
                        index = ds.index_for_field(mine.name, "RTREE")
                        if index is not None:
                            src.join_spatial = (other, index)
                            return


def _equi_sides(c, prefix, cur, local_aliases):
    if not isinstance(c, Cmp) or c.op != "=":
        return None
    for a, b in ((c.left, c.right), (c.right, c.left)):
        ra = refs(a) & local_aliases
        rb = refs(b) & local_aliases
        if ra and rb and ra <= prefix and rb <= cur:
            return a, b
    return None
