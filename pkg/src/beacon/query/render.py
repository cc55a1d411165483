"""Render syntax trees back to statement text (parse/print round-trip)."""

from __future__ import annotations

import json

from ..values import format_duration
from . import ast


def _expr(e: ast.Expr) -> str:
    if isinstance(e, ast.Literal):
        if e.value is None:
            return "null"
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        if isinstance(e.value, str):
            return json.dumps(e.value, ensure_ascii=False)
        return repr(e.value)
    if isinstance(e, ast.ObjectLit):
        inner = ", ".join(f"{json.dumps(n)}: {_expr(v)}" for n, v in e.fields)
        return "{" + inner + "}"
    if isinstance(e, ast.ArrayLit):
        return "[" + ", ".join(_expr(v) for v in e.items) + "]"
    if isinstance(e, ast.BagLit):
        return "{{" + ", ".join(_expr(v) for v in e.items) + "}}"
    if isinstance(e, ast.Ident):
        return e.name
    if isinstance(e, ast.FieldAccess):
        base = _expr(e.base)
        if isinstance(e.base, ast.SelectExpr):
            base = f"({base})"
        return f"{base}.{e.name}"
    if isinstance(e, ast.Call):
        return f"{e.name}({', '.join(_expr(a) for a in e.args)})"
    if isinstance(e, ast.BinOp):
        return f"({_expr(e.left)} {e.op} {_expr(e.right)})"
    if isinstance(e, ast.Not):
        return f"NOT ({_expr(e.expr)})"
    if isinstance(e, ast.Neg):
        return f"-({_expr(e.expr)})"
    if isinstance(e, ast.SelectExpr):
        return _select(e)
    raise TypeError(f"cannot render {type(e).__name__}")


def _paren_expr(e: ast.Expr) -> str:
    # subqueries as arguments/sources need their own parentheses
    if isinstance(e, ast.SelectExpr):
        return f"({_select(e)})"
    return _expr(e)


def _select(sel: ast.SelectExpr) -> str:
    parts = ["SELECT"]
    if sel.value is not None:
        parts.append("VALUE " + _paren_expr(sel.value))
    else:
        items = []
        for expr, alias in sel.items:
            items.append(_paren_expr(expr) + (f" AS {alias}" if alias else ""))
        parts.append(", ".join(items))
    if sel.sources:
        rendered = []
        for src in sel.sources:
            if isinstance(src.source, ast.SelectExpr):
                rendered.append(f"({_select(src.source)}) {src.alias}")
            else:
                rendered.append(f"{src.source} {src.alias}")
        parts.append("FROM " + ", ".join(rendered))
    if sel.where is not None:
        parts.append("WHERE " + _expr(sel.where))
    return " ".join(parts)


def render(stmt: ast.Statement) -> str:
    if isinstance(stmt, ast.UseStmt):
        return f"USE {stmt.name};"
    if isinstance(stmt, ast.CreateType):
        fields = []
        for f in stmt.fields:
            if f.kind == "multiset":
                kind = f"{{{{ {f.item} }}}}"
            elif f.kind == "array":
                kind = f"[{f.item}]"
            else:
                kind = f.kind
            fields.append(f"  {f.name}: {kind}{'?' if f.optional else ''}")
        closed = "" if stmt.open else "CLOSED "
        return f"CREATE TYPE {stmt.name} AS {closed}{{\n" + ",\n".join(fields) + "\n};"
    if isinstance(stmt, ast.CreateDataset):
        auto = " autogenerated" if stmt.autogenerated else ""
        return (f"CREATE DATASET {stmt.name}({stmt.type_name}) "
                f"PRIMARY KEY {stmt.pk_field}{auto};")
    if isinstance(stmt, ast.CreateIndex):
        return (f"CREATE INDEX {stmt.name} ON {stmt.dataset}({stmt.field}) "
                f"TYPE {stmt.kind};")
    if isinstance(stmt, ast.CreateFeed):
        body = ", ".join(f"{json.dumps(k)} : {json.dumps(v)}" for k, v in stmt.config.items())
        return f"CREATE FEED {stmt.name} WITH {{{body}}};"
    if isinstance(stmt, ast.ConnectFeed):
        apply = f" APPLY FUNCTION {stmt.function}" if stmt.function else ""
        return f"CONNECT FEED {stmt.feed} TO DATASET {stmt.dataset}{apply};"
    if isinstance(stmt, ast.StartFeed):
        return f"START FEED {stmt.feed};"
    if isinstance(stmt, ast.StopFeed):
        return f"STOP FEED {stmt.feed};"
    if isinstance(stmt, ast.CreateFunction):
        return (f"CREATE FUNCTION {stmt.name}({', '.join(stmt.params)}) "
                f"{{ {_expr(stmt.body)} }};")
    if isinstance(stmt, ast.CreateChannel):
        dedup = ""
        if stmt.dedup_path:
            dedup = " DEDUP BY " + ".".join(stmt.dedup_path)
        return (f"CREATE REPETITIVE CHANNEL {stmt.name} USING {stmt.function}@{stmt.arity} "
                f'PERIOD duration("{format_duration(stmt.period)}"){dedup};')
    if isinstance(stmt, ast.CreateBroker):
        return f'CREATE BROKER {stmt.name} AT {json.dumps(stmt.endpoint)};'
    if isinstance(stmt, ast.CreateProcedure):
        period = ""
        if stmt.period is not None:
            period = f' PERIOD duration("{format_duration(stmt.period)}")'
        body = render(stmt.body).rstrip(";")
        return (f"CREATE PROCEDURE {stmt.name}({', '.join(stmt.params)}) "
                f"{{ {body} }}{period};")
    if isinstance(stmt, ast.ExecuteProcedure):
        return f"EXECUTE {stmt.name}({', '.join(_expr(a) for a in stmt.args)});"
    if isinstance(stmt, ast.Subscribe):
        args = ", ".join(_expr(a) for a in stmt.args)
        return f"SUBSCRIBE TO {stmt.channel}({args}) ON {stmt.broker};"
    if isinstance(stmt, ast.Unsubscribe):
        return f"UNSUBSCRIBE {_expr(stmt.subscription_id)} FROM {stmt.channel};"
    if isinstance(stmt, ast.InsertStmt):
        return f"INSERT INTO {stmt.dataset} ({_expr(stmt.source)});"
    if isinstance(stmt, ast.DeleteStmt):
        where = f" WHERE {_expr(stmt.where)}" if stmt.where is not None else ""
        return f"DELETE {stmt.alias} FROM {stmt.dataset}{where};"
    if isinstance(stmt, ast.QueryStmt):
        return _select(stmt.select) + ";"
    raise TypeError(f"cannot render {type(stmt).__name__}")
