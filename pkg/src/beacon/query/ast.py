"""Syntax trees for the statement language.

Parsing never consults the catalog: every name here is unresolved text
until the binder runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta

from ..schema import FieldSpec

# ---------------------------------------------------------------------------
# expressions


class Expr:
    pass


@dataclass
class Literal(Expr):
    value: object  # None | bool | int | float | str


@dataclass
class ObjectLit(Expr):
    fields: list[tuple[str, Expr]]


@dataclass
class ArrayLit(Expr):
    items: list[Expr]


@dataclass
class BagLit(Expr):
    items: list[Expr]


@dataclass
class Ident(Expr):
    name: str


@dataclass
class FieldAccess(Expr):
    base: Expr
    name: str


@dataclass
class Call(Expr):
    name: str
    args: list[Expr]


@dataclass
class BinOp(Expr):
    op: str  # = != < <= > >= + - * / AND OR
    left: Expr
    right: Expr


@dataclass
class Not(Expr):
    expr: Expr


@dataclass
class Neg(Expr):
    expr: Expr


@dataclass
class FromSource:
    source: object  # str (dataset name) | SelectExpr
    alias: str


@dataclass
class SelectExpr(Expr):
    value: Expr | None = None                       # SELECT VALUE form
    items: list[tuple[Expr, str | None]] = field(default_factory=list)
    sources: list[FromSource] = field(default_factory=list)
    where: Expr | None = None


# ---------------------------------------------------------------------------
# statements


class Statement:
    pass


@dataclass
class UseStmt(Statement):
    name: str


@dataclass
class CreateType(Statement):
    name: str
    fields: list[FieldSpec]
    open: bool = True


@dataclass
class CreateDataset(Statement):
    name: str
    type_name: str
    pk_field: str
    autogenerated: bool = False


@dataclass
class CreateIndex(Statement):
    name: str
    dataset: str
    field: str
    kind: str  # BTREE | RTREE


@dataclass
class CreateFeed(Statement):
    name: str
    config: dict


@dataclass
class ConnectFeed(Statement):
    feed: str
    dataset: str
    function: str | None = None


@dataclass
class StartFeed(Statement):
    feed: str


@dataclass
class StopFeed(Statement):
    feed: str


@dataclass
class CreateFunction(Statement):
    name: str
    params: list[str]
    body: Expr


@dataclass
class CreateChannel(Statement):
    name: str
    function: str
    arity: int
    period: timedelta
    dedup_path: list[str] | None = None


@dataclass
class CreateBroker(Statement):
    name: str
    endpoint: str


@dataclass
class CreateProcedure(Statement):
    name: str
    params: list[str]
    body: Statement          # Query | Insert | Delete
    period: timedelta | None = None


@dataclass
class ExecuteProcedure(Statement):
    name: str
    args: list[Expr]


@dataclass
class Subscribe(Statement):
    channel: str
    args: list[Expr]
    broker: str


@dataclass
class Unsubscribe(Statement):
    subscription_id: Expr
    channel: str


@dataclass
class InsertStmt(Statement):
    dataset: str
    source: Expr  # object literal or SelectExpr


@dataclass
class DeleteStmt(Statement):
    alias: str
    dataset: str
    where: Expr | None = None


@dataclass
class QueryStmt(Statement):
    select: SelectExpr
