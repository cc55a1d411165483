"""Lowering from logical plans to the physical operator tree."""

from __future__ import annotations

import copy

from ..errors import UnsupportedConstruct
from . import ast
from .binder import Binder, FunctionDef, _Scope
from .plan import (
    Arith,
    ArrayExpr,
    BoundSelect,
    BoundSource,
    ChannelInfo,
    Cmp,
    Field,
    FullScan,
    Func,
    Logic,
    LogicalPlan,
    NegE,
    NotE,
    ObjectExpr,
    Param,
    PDeleteSink,
    PEnrich,
    PEquiJoin,
    PFilter,
    PIndexedSpatialJoin,
    PInsertSink,
    PNestedLoopJoin,
    PNotifySink,
    POp,
    PProject,
    PScan,
    PSingleton,
    PSpatialProbe,
    PSubqueryScan,
    PTimeScan,
    PhysicalPlan,
    SpatialProbe,
    SubqueryExpr,
    TimeWindow,
    Var,
)
from .optimizer import optimize


def compile_plan(plan: LogicalPlan, catalog) -> PhysicalPlan:
    """Build the executable operator tree; pure data, no execution."""
    plan = copy.deepcopy(plan)
    if plan.kind == "query":
        root: POp = _project(plan.select)
    elif plan.kind == "insert":
        child = _pipeline(plan.select) if plan.select is not None else None
        _attach_subplans(plan.record)
        root = PInsertSink(child, plan.dataset, plan.record)
    elif plan.kind == "delete":
        ds = catalog.dataset(plan.dataset)
        child = _pipeline(plan.select)
        key = Field(Var(plan.delete_alias), ds.pk_field)
        root = PDeleteSink(child, plan.dataset, key)
    elif plan.kind == "channel":
        info = plan.channel
        child = _pipeline(plan.select)
        _attach_subplans(plan.record)
        _attach_subplans(info.broker_expr)
        sink = PInsertSink(child, info.results_dataset, plan.record,
                           unique_fields=info.unique_fields,
                           carry=[("brokerName", info.broker_expr)])
        root = PNotifySink(sink)
    else:
        raise UnsupportedConstruct(f"cannot compile plan kind {plan.kind!r}")
    if plan.kind == "channel":
        slots: tuple[str, ...] = ("executionTime",)
    else:
        slots = tuple(_collect_params(root))
    return PhysicalPlan(root=root, kind=plan.kind, param_slots=slots, text=plan.text)


def _project(sel: BoundSelect) -> PProject:
    child = _pipeline(sel)
    if sel.value is not None:
        _attach_subplans(sel.value)
        return PProject(child, value=sel.value)
    for _, e in sel.items:
        _attach_subplans(e)
    return PProject(child, items=sel.items)


def _pipeline(sel: BoundSelect) -> POp | None:
    node: POp | None = None
    for i, src in enumerate(sel.sources):
        for f in src.local_filters + src.join_filters:
            _attach_subplans(f)
        if src.kind == "enrich":
            from .plan import free_refs

            node = PEnrich(node, src.alias, _subplan(src.subquery),
                           uncorrelated=not free_refs(src.subquery))
            if src.join_filters:
                node = PFilter(node, src.join_filters)
            continue
        if node is not None and src.join_spatial is not None:
            geom, index = src.join_spatial
            _attach_subplans(geom)
            node = PIndexedSpatialJoin(node, src.dataset, index, src.alias,
                                       geom, refine=src.join_filters)
            continue
        right = _source_node(src)
        if node is None:
            node = right
            if src.join_filters:
                node = PFilter(node, src.join_filters)
        elif src.join_equi is not None:
            lk, rk = src.join_equi
            for e in lk + rk:
                _attach_subplans(e)
            node = PEquiJoin(node, right, lk, rk, residual=src.join_filters)
        else:
            node = PNestedLoopJoin(node, right, src.join_filters)
    if sel.conjuncts:
        node = PFilter(node if node is not None else PSingleton(), sel.conjuncts)
        for f in sel.conjuncts:
            _attach_subplans(f)
    return node


def _source_node(src: BoundSource) -> POp:
    if src.kind == "iterate":
        node: POp = PSubqueryScan(src.alias, _subplan(src.subquery))
    elif isinstance(src.access, TimeWindow):
        _attach_subplans(src.access.low)
        if src.access.high is not None:
            _attach_subplans(src.access.high)
        node = PTimeScan(src.dataset, src.access.index, src.alias,
                         src.access.low, src.access.high, src.access.low_inclusive)
    elif isinstance(src.access, SpatialProbe):
        _attach_subplans(src.access.region)
        node = PSpatialProbe(src.dataset, src.access.index, src.alias, src.access.region)
    else:
        node = PScan(src.dataset, src.alias)
    if src.local_filters:
        node = PFilter(node, src.local_filters)
    return node


def _subplan(sel: BoundSelect) -> PhysicalPlan:
    return PhysicalPlan(root=_project(sel), kind="query")


def _attach_subplans(e) -> None:
    if isinstance(e, SubqueryExpr):
        e.plan = _subplan(e.select)
    elif isinstance(e, Field):
        _attach_subplans(e.base)
    elif isinstance(e, Func):
        for a in e.args:
            _attach_subplans(a)
    elif isinstance(e, (Cmp, Arith)):
        _attach_subplans(e.left)
        _attach_subplans(e.right)
    elif isinstance(e, Logic):
        for a in e.items:
            _attach_subplans(a)
    elif isinstance(e, (NotE, NegE)):
        _attach_subplans(e.expr)
    elif isinstance(e, ObjectExpr):
        for _, v in e.fields:
            _attach_subplans(v)
    elif isinstance(e, ArrayExpr):
        for v in e.items:
            _attach_subplans(v)


def _collect_params(node) -> list[str]:
    out: list[str] = []

    def walk_expr(e):
        from .plan import params_of

        params_of(e, out)

    def walk(op):
        if op is None:
            return
        if isinstance(op, PScan):
            return
        if isinstance(op, PTimeScan):
            walk_expr(op.low)
            if op.high is not None:
                walk_expr(op.high)
        elif isinstance(op, PSpatialProbe):
            walk_expr(op.region)
        elif isinstance(op, PSubqueryScan):
            walk(op.subplan.root)
        elif isinstance(op, PFilter):
            walk(op.child)
            for c in op.conjuncts:
                walk_expr(c)
        elif isinstance(op, PNestedLoopJoin):
            walk(op.left)
            walk(op.right)
            for c in op.conjuncts:
                walk_expr(c)
        elif isinstance(op, PEquiJoin):
            walk(op.left)
            walk(op.right)
            for e in op.left_keys + op.right_keys + op.residual:
                walk_expr(e)
        elif isinstance(op, PIndexedSpatialJoin):
            walk(op.left)
            walk_expr(op.left_geom)
            for c in op.refine:
                walk_expr(c)
        elif isinstance(op, PEnrich):
            walk(op.child)
            walk(op.subplan.root)
        elif isinstance(op, PProject):
            walk(op.child)
            if op.value is not None:
                walk_expr(op.value)
            for _, e in op.items or []:
                walk_expr(e)
        elif isinstance(op, PInsertSink):
            walk(op.child)
            walk_expr(op.record)
            for _, e in op.carry:
                walk_expr(e)
        elif isinstance(op, PNotifySink):
            walk(op.child)
        elif isinstance(op, PDeleteSink):
            walk(op.child)
            walk_expr(op.key)

    walk(node)
    return out


# ---------------------------------------------------------------------------
# channel compilation


def compile_channel(fn: FunctionDef, subs_dataset: str, results_dataset: str,
                    catalog, channel_name: str,
                    dedup_path: list[str] | None = None) -> PhysicalPlan:
    """Shared channel plan: subscriptions joined against the function body.

    The function's parameters become references to the subscription row's
    param0..paramK fields, so one execution serves every subscription; the
    projection stages result records and the notify sink groups the new
    results' subscription ids by broker.
    """
    if not isinstance(fn.body, ast.SelectExpr):
        raise UnsupportedConstruct("a channel function body must be a query")
    binder = Binder(catalog, tuple(fn.params))
    sel = binder.bind_select(fn.body, _Scope(tuple(fn.params)))
    if sel.items is None:
        raise UnsupportedConstruct("a channel function must SELECT named fields")

    sub_alias = "__sub"
    _replace_params(sel, {p: Field(Var(sub_alias), f"param{i}")
                          for i, p in enumerate(fn.params)})
    sub_src = BoundSource(sub_alias, "dataset", subs_dataset)
    sel.sources = _subscription_first_order([sub_src] + sel.sources, sel.conjuncts)

    payload = ObjectExpr(sel.items)
    if dedup_path:
        dedup_expr = _resolve_payload_path(sel.items, dedup_path)
    else:
        dedup_expr = Func("content_hash", [payload])
    record = ObjectExpr([
        ("subscriptionId", Field(Var(sub_alias), "subscriptionId")),
        ("channelExecutionTime", Func("current_datetime", [])),
        ("dedupKey", dedup_expr),
        ("payload", payload),
    ])
    logical = LogicalPlan(
        kind="channel",
        select=BoundSelect(sources=sel.sources, conjuncts=sel.conjuncts),
        dataset=results_dataset,
        record=record,
        channel=ChannelInfo(
            name=channel_name,
            subscription_alias=sub_alias,
            broker_expr=Field(Var(sub_alias), "brokerName"),
            results_dataset=results_dataset,
            unique_fields=("subscriptionId", "dedupKey"),
        ),
    )
    return compile_plan(optimize(logical, catalog), catalog)


def _subscription_first_order(sources, conjuncts):
    """Greedy connected ordering: after the subscription scan, prefer sources
    reachable through an equality conjunct; enrichment sources keep their
    relative order at the end."""
    enrich = [s for s in sources[1:] if s.kind == "enrich"]
    rest = [s for s in sources[1:] if s.kind != "enrich"]
    ordered = [sources[0]]
    bound = {sources[0].alias}
    while rest:
        pick = None
        for s in rest:
            if s.kind == "dataset" and _has_equi_link(s.alias, bound, conjuncts):
                pick = s
                break
        if pick is None:
            pick = rest[0]
        rest.remove(pick)
        ordered.append(pick)
        bound.add(pick.alias)
    return ordered + enrich


def _has_equi_link(alias, bound, conjuncts) -> bool:
    from .plan import refs

    for c in conjuncts:
        if isinstance(c, Cmp) and c.op == "=":
            r = refs(c)
            if alias in r and (r - {alias}) and (r - {alias}) <= bound:
                return True
    return False


def _resolve_payload_path(items, path: list[str]):
    head, *tail = path
    expr = None
    for name, e in items:
        if name == head:
            expr = e
            break
    if expr is None:
        raise UnsupportedConstruct(
            f"DEDUP BY path starts at {head!r}, which the channel function does not select"
        )
    for part in tail:
        expr = Field(expr, part)
    return expr


def _replace_params(sel: BoundSelect, mapping: dict[str, object]) -> None:
    sel.conjuncts = [_subst(c, mapping) for c in sel.conjuncts]
    if sel.value is not None:
        sel.value = _subst(sel.value, mapping)
    if sel.items is not None:
        sel.items = [(n, _subst(e, mapping)) for n, e in sel.items]
    for src in sel.sources:
        src.local_filters = [_subst(c, mapping) for c in src.local_filters]
        src.join_filters = [_subst(c, mapping) for c in src.join_filters]
        if src.subquery is not None:
            _replace_params(src.subquery, mapping)


def _subst(e, mapping):
    if isinstance(e, Param) and e.slot in mapping:
        return copy.deepcopy(mapping[e.slot])
    if isinstance(e, Field):
        return Field(_subst(e.base, mapping), e.name)
    if isinstance(e, Func):
        return Func(e.name, [_subst(a, mapping) for a in e.args])
    if isinstance(e, Cmp):
        return Cmp(e.op, _subst(e.left, mapping), _subst(e.right, mapping))
    if isinstance(e, Arith):
        return Arith(e.op, _subst(e.left, mapping), _subst(e.right, mapping))
    if isinstance(e, Logic):
        return Logic(e.op, [_subst(a, mapping) for a in e.items])
    if isinstance(e, NotE):
        return NotE(_subst(e.expr, mapping))
    if isinstance(e, NegE):
        return NegE(_subst(e.expr, mapping))
    if isinstance(e, ObjectExpr):
        return ObjectExpr([(n, _subst(v, mapping)) for n, v in e.fields])
    if isinstance(e, ArrayExpr):
        return ArrayExpr([_subst(v, mapping) for v in e.items])
    if isinstance(e, SubqueryExpr):
        _replace_params(e.select, mapping)
        return e
    return e
