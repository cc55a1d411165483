"""Expression evaluation and the built-in function table."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from ..errors import EvalTypeError, MissingParameter
from ..values import (
    dumps,
    kind_of,
    parse_circle,
    parse_datetime,
    parse_duration,
    parse_point,
    spatial_intersect,
)
from .plan import (
    Arith,
    ArrayExpr,
    Cmp,
    Const,
    Field,
    Func,
    Logic,
    NegE,
    NotE,
    ObjectExpr,
    Param,
    SubqueryExpr,
    Var,
)


@dataclass
class BuiltinSpec:
    arity: int
    fn: object


def _current_datetime(args, ctx):
    if ctx is None or ctx.execution_time is None:
        raise EvalTypeError("current_datetime() needs an evaluation context")
    return ctx.execution_time


def _object_merge(args, ctx):
    a, b = args
    if not isinstance(a, dict) or not isinstance(b, dict):
        raise EvalTypeError("object_merge expects two objects")
    # the first argument wins on conflicting field names
    out = dict(b)
    out.update(a)
    return out


def _array_count(args, ctx):
    (arr,) = args
    if not isinstance(arr, list):
        raise EvalTypeError(f"array_count expects an array, got {kind_of(arr)}")
    return len(arr)


def _content_hash(args, ctx):
    return hashlib.sha256(dumps(args[0]).encode("utf-8")).hexdigest()


BUILTINS: dict[str, BuiltinSpec] = {
    "current_datetime": BuiltinSpec(0, _current_datetime),
    "day_time_duration": BuiltinSpec(1, lambda a, c: parse_duration(a[0])),
    "duration": BuiltinSpec(1, lambda a, c: parse_duration(a[0])),
    "datetime": BuiltinSpec(1, lambda a, c: parse_datetime(a[0])),
    "point": BuiltinSpec(1, lambda a, c: parse_point(a[0])),
    "circle": BuiltinSpec(1, lambda a, c: parse_circle(a[0])),
    "object_merge": BuiltinSpec(2, _object_merge),
    "array_count": BuiltinSpec(1, _array_count),
    "spatial_intersect": BuiltinSpec(2, lambda a, c: spatial_intersect(a[0], a[1])),
    "content_hash": BuiltinSpec(1, _content_hash),
}

# safe to evaluate at bind time when every argument is a literal
FOLDABLE = {"day_time_duration", "duration", "datetime", "point", "circle"}


def call_builtin(name: str, args: list, ctx):
    return BUILTINS[name].fn(args, ctx)


@dataclass
class EvalContext:
    execution_time: datetime | None = None
    args: dict = field(default_factory=dict)
    subquery_runner: object = None  # injected by the runtime

    def param(self, slot: str):
        if slot not in self.args:
            raise MissingParameter(f"no value bound for parameter {slot!r}")
        return self.args[slot]


_COMPARABLE = {"number", "string", "datetime", "duration", "boolean"}


def _truthy(v) -> bool:
    if isinstance(v, bool):
        return v
    if v is None:
        return False
    raise EvalTypeError(f"expected a boolean, got {kind_of(v)}")


def compare(op: str, left, right) -> bool:
    if op == "=":
        return _eq(left, right)
    if op == "!=":
        return not _eq(left, right)
    if left is None or right is None:
        return False
    lk, rk = kind_of(left), kind_of(right)
    if lk != rk or lk not in _COMPARABLE:
        return False
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    raise EvalTypeError(f"unknown comparison {op}")


def _eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if kind_of(a) != kind_of(b):
        return False
    return a == b


def arith(op: str, left, right):
    lk, rk = kind_of(left), kind_of(right)
    if op == "+":
        if lk == "number" and rk == "number":
            return left + right
        if lk == "datetime" and rk == "duration":
            return left + right
        if lk == "duration" and rk == "datetime":
            return right + left
        if lk == "duration" and rk == "duration":
            return left + right
    elif op == "-":
        if lk == "number" and rk == "number":
            return left - right
        if lk == "datetime" and rk == "duration":
            return left - right
        if lk == "datetime" and rk == "datetime":
            return left - right
        if lk == "duration" and rk == "duration":
            return left - right
    elif op in ("*", "/"):
        if lk == "number" and rk == "number":
            return left * right if op == "*" else left / right
    raise EvalTypeError(f"cannot apply {op} to {lk} and {rk}")


def eval_expr(expr, env: dict, ctx: EvalContext):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Param):
        return ctx.param(expr.slot)
    if isinstance(expr, Field):
        base = eval_expr(expr.base, env, ctx)
        if isinstance(base, dict):
            return base.get(expr.name)
        return None
    if isinstance(expr, Func):
        args = [eval_expr(a, env, ctx) for a in expr.args]
        return call_builtin(expr.name, args, ctx)
    if isinstance(expr, Cmp):
        return compare(expr.op, eval_expr(expr.left, env, ctx), eval_expr(expr.right, env, ctx))
    if isinstance(expr, Arith):
        return arith(expr.op, eval_expr(expr.left, env, ctx), eval_expr(expr.right, env, ctx))
    if isinstance(expr, Logic):
        if expr.op == "AND":
            return all(_truthy(eval_expr(e, env, ctx)) for e in expr.items)
        return any(_truthy(eval_expr(e, env, ctx)) for e in expr.items)
    if isinstance(expr, NotE):
        return not _truthy(eval_expr(expr.expr, env, ctx))
    if isinstance(expr, NegE):
        v = eval_expr(expr.expr, env, ctx)
        if kind_of(v) != "number":
            raise EvalTypeError(f"cannot negate {kind_of(v)}")
        return -v
    if isinstance(expr, ObjectExpr):
        return {name: eval_expr(v, env, ctx) for name, v in expr.fields}
    if isinstance(expr, ArrayExpr):
        return [eval_expr(v, env, ctx) for v in expr.items]
    if isinstance(expr, SubqueryExpr):
        if ctx.subquery_runner is None:
            raise EvalTypeError("subqueries need a query runtime")
        return ctx.subquery_runner(expr, env, ctx)
    raise EvalTypeError(f"cannot evaluate {type(expr).__name__}")


def eval_scalar(expr, bindings: dict, now: datetime | None = None):
    """Evaluate a bound scalar expression; bindings cover vars and parameters."""
    ctx = EvalContext(execution_time=now, args=dict(bindings))
    return eval_expr(expr, dict(bindings), ctx)
