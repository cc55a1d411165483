"""Name resolution: syntax trees to logical plans against a catalog snapshot.

Parsing never touches the catalog; binding does.  DDL statements come back
as CatalogAction for the engine to dispatch, DML/queries as LogicalPlan.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import (
    ArityMismatch,
    UnknownDataset,
    UnknownFunction,
    UnknownParameter,
    UnsupportedConstruct,
    ValidationFailure,
)
from ..schema import normalize_kind
from . import ast
from .plan import (
    Arith,
    ArrayExpr,
    BExpr,
    BoundSelect,
    BoundSource,
    CatalogAction,
    Cmp,
    Const,
    Field,
    Func,
    Logic,
    LogicalPlan,
    NegE,
    NotE,
    ObjectExpr,
    Param,
    SubqueryExpr,
    Var,
    free_refs,
)
from .scalar import BUILTINS, FOLDABLE, call_builtin


@dataclass
class FunctionDef:
    """A named parameterized function; identity is (name, arity)."""

    name: str
    params: list[str]
    body: ast.Expr

    @property
    def arity(self) -> int:
        return len(self.params)


class _Scope:
    def __init__(self, params: tuple[str, ...], outer: "_Scope | None" = None):
        self.aliases: dict[str, str | None] = {}  # alias -> dataset name (or None)
        self.params = params
        self.outer = outer

    def add(self, alias: str, dataset: str | None) -> None:
        if alias in self.aliases:
            raise ValidationFailure(f"duplicate alias {alias!r} in one scope")
        self.aliases[alias] = dataset

    def lookup(self, name: str) -> tuple[str, str | None] | None:
        scope: _Scope | None = self
        while scope is not None:
            if name in scope.aliases:
                return ("alias", scope.aliases[name])
            scope = scope.outer
        if name in self.params:
            return ("param", None)
        return None


class Binder:
    def __init__(self, catalog, params: tuple[str, ...] = ()):
        self.catalog = catalog
        self.params = tuple(params)

    # -- statements ---------------------------------------------------------

    def bind_statement(self, stmt: ast.Statement):
        if isinstance(stmt, ast.QueryStmt):
            sel = self.bind_select(stmt.select, _Scope(self.params))
            return LogicalPlan(kind="query", select=sel)
        if isinstance(stmt, ast.InsertStmt):
            self._require_dataset(stmt.dataset)
            if isinstance(stmt.source, ast.SelectExpr):
                sel = self.bind_select(stmt.source, _Scope(self.params))
                record = ObjectExpr(sel.items) if sel.items is not None else sel.value
                return LogicalPlan(kind="insert", select=sel, dataset=stmt.dataset,
                                   record=record)
            record = self.bind_expr(stmt.source, _Scope(self.params))
            return LogicalPlan(kind="insert", dataset=stmt.dataset, record=record)
        if isinstance(stmt, ast.DeleteStmt):
            self._require_dataset(stmt.dataset)
            scope = _Scope(self.params)
            scope.add(stmt.alias, stmt.dataset)
            sel = BoundSelect(sources=[BoundSource(stmt.alias, "dataset", stmt.dataset)])
            if stmt.where is not None:
                sel.conjuncts = self._conjuncts(stmt.where, scope)
            sel.value = Var(stmt.alias)
            return LogicalPlan(kind="delete", select=sel, dataset=stmt.dataset,
                               delete_alias=stmt.alias)
        # DDL: validate what the catalog can see, then hand to the engine
        if isinstance(stmt, ast.CreateDataset):
            if self.catalog.types.get(stmt.type_name) is None:
                raise ValidationFailure(f"unknown type {stmt.type_name!r}")
        elif isinstance(stmt, ast.CreateIndex):
            self._require_dataset(stmt.dataset)
        elif isinstance(stmt, ast.CreateFunction):
            Binder(self.catalog, tuple(stmt.params)).bind_expr(
                stmt.body, _Scope(tuple(stmt.params)))
        elif isinstance(stmt, ast.CreateChannel):
            self._require_function(stmt.function, stmt.arity)
        elif isinstance(stmt, ast.CreateProcedure):
            Binder(self.catalog, tuple(stmt.params)).bind_statement(stmt.body)
        return CatalogAction(stmt)

    def _require_dataset(self, name: str) -> None:
        if not self.catalog.has_dataset(name):
            raise UnknownDataset(f"dataset {name} does not exist")

    def _require_function(self, name: str, arity: int) -> FunctionDef:
        fn = self.catalog.function(name, arity)
        if fn is not None:
            return fn
        for other_arity in range(0, 17):
            if self.catalog.function(name, other_arity) is not None:
                raise ArityMismatch(f"function {name} exists but not with arity {arity}")
        raise UnknownFunction(f"no function {name}@{arity}")

    # -- selects -------------------------------------------------------------

    def bind_select(self, sel: ast.SelectExpr, outer: _Scope) -> BoundSelect:
        scope = _Scope(self.params, outer)
        bound = BoundSelect()
        for src in sel.sources:
            bound.sources.append(self._bind_source(src, scope))
        if sel.where is not None:
            bound.conjuncts = self._conjuncts(sel.where, scope)
        if sel.value is not None:
            bound.value = self.bind_expr(sel.value, scope)
        else:
            items: list[tuple[str, BExpr]] = []
            used: set[str] = set()
            for i, (expr, alias) in enumerate(sel.items):
                name = alias or self._implicit_name(expr) or f"${i + 1}"
                if name in used:
                    raise ValidationFailure(f"duplicate output field {name!r}")
                used.add(name)
                items.append((name, self.bind_expr(expr, scope)))
            bound.items = items
        return bound

    @staticmethod
    def _implicit_name(expr: ast.Expr) -> str | None:
        if isinstance(expr, ast.Ident):
            return expr.name
        if isinstance(expr, ast.FieldAccess):
            return expr.name
        return None

    def _bind_source(self, src: ast.FromSource, scope: _Scope) -> BoundSource:
        if isinstance(src.source, str):
            self._require_dataset(src.source)
            bound = BoundSource(src.alias, "dataset", src.source)
            scope.add(src.alias, src.source)
            return bound
        sub = self.bind_select(src.source, scope)
        correlated = bool(free_refs(sub))
        if src.source.value is not None:
            # SELECT VALUE subqueries unnest into rows; a correlated one would
            # need lateral-join semantics, which the language does not offer
            if correlated:
                raise UnsupportedConstruct(
                    f"correlated SELECT VALUE subquery in FROM ({src.alias})"
                )
            bound = BoundSource(src.alias, "iterate", subquery=sub)
        else:
            # bare SELECT subqueries bind their whole result as an array field
            bound = BoundSource(src.alias, "enrich", subquery=sub)
        scope.add(src.alias, None)
        return bound

    def _conjuncts(self, where: ast.Expr, scope: _Scope) -> list[BExpr]:
        out: list[BExpr] = []

        def walk(e: ast.Expr):
            if isinstance(e, ast.BinOp) and e.op == "AND":
                walk(e.left)
                walk(e.right)
            else:
                out.append(self.bind_expr(e, scope))

        walk(where)
        return out

    # -- expressions ------------------------------------------------------------

    def bind_expr(self, e: ast.Expr, scope: _Scope) -> BExpr:
        if isinstance(e, ast.Literal):
            return Const(e.value)
        if isinstance(e, ast.ObjectLit):
            return ObjectExpr([(n, self.bind_expr(v, scope)) for n, v in e.fields])
        if isinstance(e, (ast.ArrayLit, ast.BagLit)):
            return ArrayExpr([self.bind_expr(v, scope) for v in e.items])
        if isinstance(e, ast.Ident):
            hit = scope.lookup(e.name)
            if hit is None:
                raise UnknownParameter(f"unresolved name {e.name!r}")
            if hit[0] == "param":
                return Param(e.name)
            return Var(e.name)
        if isinstance(e, ast.FieldAccess):
            base = self.bind_expr(e.base, scope)
            self._check_field(base, e.name, scope)
            return Field(base, e.name)
        if isinstance(e, ast.Call):
            spec = BUILTINS.get(e.name)
            if spec is None:
                raise UnknownFunction(f"unknown function {e.name}")
            if spec.arity != len(e.args):
                raise ArityMismatch(
                    f"{e.name} takes {spec.arity} argument(s), got {len(e.args)}"
                )
            args = [self.bind_expr(a, scope) for a in e.args]
            if e.name in FOLDABLE and all(isinstance(a, Const) for a in args):
                return Const(call_builtin(e.name, [a.value for a in args], None))
            return Func(e.name, args)
        if isinstance(e, ast.BinOp):
            if e.op in ("AND", "OR"):
                return Logic(e.op, [self.bind_expr(e.left, scope),
                                    self.bind_expr(e.right, scope)])
            left = self.bind_expr(e.left, scope)
            right = self.bind_expr(e.right, scope)
            if e.op in ("=", "!=", "<", "<=", ">", ">="):
                return Cmp(e.op, left, right)
            return Arith(e.op, left, right)
        if isinstance(e, ast.Not):
            return NotE(self.bind_expr(e.expr, scope))
        if isinstance(e, ast.Neg):
            return NegE(self.bind_expr(e.expr, scope))
        if isinstance(e, ast.SelectExpr):
            return SubqueryExpr(self.bind_select(e, scope))
        raise UnsupportedConstruct(f"cannot bind {type(e).__name__}")

    def _check_field(self, base: BExpr, name: str, scope: _Scope) -> None:
        # closed datatypes reject unknown first-level fields at bind time
        if not isinstance(base, Var):
            return
        hit = scope.lookup(base.name)
        if hit is None or hit[0] != "alias" or hit[1] is None:
            return
        try:
            ds = self.catalog.dataset(hit[1])
        except UnknownDataset:
            return
        dt = ds.datatype
        if not dt.open and dt.get_field(name) is None and name != ds.pk_field:
            raise ValidationFailure(f"closed type {dt.name} has no field {name!r}")


def bind(stmt: ast.Statement, catalog, params: tuple[str, ...] = ()):
    """Resolve a parsed statement; returns LogicalPlan or CatalogAction."""
    return Binder(catalog, params).bind_statement(stmt)
