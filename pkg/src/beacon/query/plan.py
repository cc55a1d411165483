"""Bound expressions, logical plans, and physical operator trees.

The binder resolves names into this representation; the optimizer picks
access paths and join strategies on the logical side; the compiler lowers
to the physical operator tree the runtime interprets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# ---------------------------------------------------------------------------
# bound expressions


class BExpr:
    pass


@dataclass
class Const(BExpr):
    value: object


@dataclass
class Var(BExpr):
    name: str


@dataclass
class Param(BExpr):
    slot: str


@dataclass
class Field(BExpr):
    base: BExpr
    name: str


@dataclass
class Func(BExpr):
    name: str
    args: list[BExpr]


@dataclass
class Cmp(BExpr):
    op: str  # = != < <= > >=
    left: BExpr
    right: BExpr


@dataclass
class Arith(BExpr):
    op: str  # + - * /
    left: BExpr
    right: BExpr


@dataclass
class Logic(BExpr):
    op: str  # AND | OR
    items: list[BExpr]


@dataclass
class NotE(BExpr):
    expr: BExpr


@dataclass
class NegE(BExpr):
    expr: BExpr


@dataclass
class ObjectExpr(BExpr):
    fields: list[tuple[str, BExpr]]


@dataclass
class ArrayExpr(BExpr):
    items: list[BExpr]


@dataclass
class SubqueryExpr(BExpr):
    select: "BoundSelect"
    plan: object = None  # PProject tree, filled in by the compiler


def refs(e: BExpr) -> set[str]:
    """Free row-variable names of an expression (subquery scopes subtracted)."""
    out: set[str] = set()
    _refs(e, out)
    return out


def _refs(e, out: set[str]) -> None:
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, Field):
        _refs(e.base, out)
    elif isinstance(e, (Func,)):
        for a in e.args:
            _refs(a, out)
    elif isinstance(e, (Cmp, Arith)):
        _refs(e.left, out)
        _refs(e.right, out)
    elif isinstance(e, Logic):
        for a in e.items:
            _refs(a, out)
    elif isinstance(e, (NotE, NegE)):
        _refs(e.expr, out)
    elif isinstance(e, ObjectExpr):
        for _, v in e.fields:
            _refs(v, out)
    elif isinstance(e, ArrayExpr):
        for v in e.items:
            _refs(v, out)
    elif isinstance(e, SubqueryExpr):
        out |= free_refs(e.select)


def params_of(e: BExpr, out: list[str]) -> None:
    if isinstance(e, Param):
        if e.slot not in out:
            out.append(e.slot)
    elif isinstance(e, Field):
        params_of(e.base, out)
    elif isinstance(e, Func):
        for a in e.args:
            params_of(a, out)
    elif isinstance(e, (Cmp, Arith)):
        params_of(e.left, out)
        params_of(e.right, out)
    elif isinstance(e, Logic):
        for a in e.items:
            params_of(a, out)
    elif isinstance(e, (NotE, NegE)):
        params_of(e.expr, out)
    elif isinstance(e, ObjectExpr):
        for _, v in e.fields:
            params_of(v, out)
    elif isinstance(e, ArrayExpr):
        for v in e.items:
            params_of(v, out)
    elif isinstance(e, SubqueryExpr):
        _select_params(e.select, out)


def _select_params(sel: "BoundSelect", out: list[str]) -> None:
    for src in sel.sources:
        if src.subquery is not None:
            _select_params(src.subquery, out)
    for c in sel.conjuncts:
        params_of(c, out)
    if sel.value is not None:
        params_of(sel.value, out)
    for _, e in sel.items or []:
        params_of(e, out)


# ---------------------------------------------------------------------------
# logical plans


@dataclass
class FullScan:
    pass


@dataclass
class TimeWindow:
    index: str
    low: BExpr
    high: BExpr | None       # None = unbounded; otherwise (low, high]
    low_inclusive: bool = False


@dataclass
class SpatialProbe:
    index: str
    region: BExpr


@dataclass
class BoundSource:
    alias: str
    kind: str                       # dataset | iterate | enrich
    dataset: str | None = None
    subquery: "BoundSelect | None" = None
    access: object = field(default_factory=FullScan)
    local_filters: list[BExpr] = field(default_factory=list)
    join_equi: tuple[list[BExpr], list[BExpr]] | None = None
    join_spatial: tuple[BExpr, str] | None = None
    join_filters: list[BExpr] = field(default_factory=list)


@dataclass
class BoundSelect:
    sources: list[BoundSource] = field(default_factory=list)
    conjuncts: list[BExpr] = field(default_factory=list)  # applied after all joins
    items: list[tuple[str, BExpr]] | None = None
    value: BExpr | None = None


def free_refs(sel: BoundSelect) -> set[str]:
    """Aliases a select references but does not itself bind (correlation)."""
    bound: set[str] = set()
    out: set[str] = set()
    for src in sel.sources:
        if src.subquery is not None:
            out |= free_refs(src.subquery) - bound
        for c in src.local_filters + src.join_filters:
            out |= refs(c) - bound
        if src.join_equi:
            for e in src.join_equi[0] + src.join_equi[1]:
                out |= refs(e) - bound
        if src.join_spatial:
            out |= refs(src.join_spatial[0]) - bound
        if isinstance(src.access, TimeWindow):
            out |= refs(src.access.low) - bound
            if src.access.high is not None:
                out |= refs(src.access.high) - bound
        if isinstance(src.access, SpatialProbe):
            out |= refs(src.access.region) - bound
        bound.add(src.alias)
    for c in sel.conjuncts:
        out |= refs(c) - bound
    if sel.value is not None:
        out |= refs(sel.value) - bound
    for _, e in sel.items or []:
        out |= refs(e) - bound
    return out


@dataclass
class ChannelInfo:
    name: str
    subscription_alias: str
    broker_expr: BExpr
    results_dataset: str
    unique_fields: tuple[str, ...] | None


@dataclass
class LogicalPlan:
    kind: str                         # query | insert | delete | channel
    select: BoundSelect | None = None
    dataset: str | None = None        # sink target
    record: BExpr | None = None       # insert record expression
    delete_alias: str | None = None
    channel: ChannelInfo | None = None
    text: str | None = None


@dataclass
class CatalogAction:
    """A DDL statement that passed binding; the engine dispatches it."""

    stmt: object


# ---------------------------------------------------------------------------
# physical operators (interpreted by beacon.runtime)


class POp:
    pass


@dataclass
class PSingleton(POp):
    """Yields one empty row; the source of FROM-less selects."""


@dataclass
class PScan(POp):
    dataset: str
    alias: str


@dataclass
class PTimeScan(POp):
    dataset: str
    index: str
    alias: str
    low: BExpr
    high: BExpr | None
    low_inclusive: bool = False


@dataclass
class PSpatialProbe(POp):
    dataset: str
    index: str
    alias: str
    region: BExpr


@dataclass
class PSubqueryScan(POp):
    alias: str
    subplan: "PhysicalPlan"


@dataclass
class PFilter(POp):
    child: POp
    conjuncts: list[BExpr]


@dataclass
class PNestedLoopJoin(POp):
    left: POp
    right: POp
    conjuncts: list[BExpr]


@dataclass
class PEquiJoin(POp):
    left: POp
    right: POp
    left_keys: list[BExpr]
    right_keys: list[BExpr]
    residual: list[BExpr]


@dataclass
class PIndexedSpatialJoin(POp):
    left: POp
    dataset: str
    index: str
    alias: str
    left_geom: BExpr
    refine: list[BExpr]


@dataclass
class PEnrich(POp):
    child: POp | None
    alias: str
    subplan: "PhysicalPlan"
    uncorrelated: bool = False  # safe to evaluate once per invocation


@dataclass
class PProject(POp):
    child: POp | None
    items: list[tuple[str, BExpr]] | None = None
    value: BExpr | None = None


@dataclass
class PInsertSink(POp):
    child: POp | None
    dataset: str
    record: BExpr
    unique_fields: tuple[str, ...] | None = None
    carry: list[tuple[str, BExpr]] = field(default_factory=list)


@dataclass
class PNotifySink(POp):
    child: PInsertSink
    subscription_field: str = "subscriptionId"
    broker_carry: str = "brokerName"


@dataclass
class PDeleteSink(POp):
    child: POp
    dataset: str
    key: BExpr


@dataclass
class PhysicalPlan:
    root: POp
    kind: str                       # query | insert | delete | channel
    param_slots: tuple[str, ...] = ()
    text: str | None = None
