"""Record datatypes and validation.

Open types accept and preserve unknown fields; closed types reject them.
The only coercion applied is integer-to-float where a float field is
declared (and millisecond truncation of datetimes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

from . import values
from .errors import ValidationFailure
from .values import Circle, Point

# scalar kind aliases accepted in DDL
_SCALAR_KINDS = {
    "string": "string",
    "int": "int",
    "int32": "int",
    "int64": "int",
    "integer": "int",
    "float": "float",
    "double": "float",
    "boolean": "boolean",
    "bool": "boolean",
    "datetime": "datetime",
    "duration": "duration",
    "point": "point",
    "circle": "circle",
    "uuid": "uuid",
    "any": "any",
    "object": "object",
}


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str                    # scalar kind, named type, or "multiset"/"array"
    optional: bool = False
    item: str | None = None      # element kind for multiset/array fields


@dataclass
class DatatypeDef:
    name: str
    fields: list[FieldSpec] = field(default_factory=list)
    open: bool = True

    def field_names(self) -> set[str]:
        return {f.name for f in self.fields}

    def get_field(self, name: str) -> FieldSpec | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


def normalize_kind(kind: str) -> str:
    return _SCALAR_KINDS.get(kind.lower(), kind)


class TypeRegistry:
    """Named datatypes; validation resolves nested type references here."""

    def __init__(self):
        self._types: dict[str, DatatypeDef] = {}

    def add(self, dt: DatatypeDef) -> None:
        self._types[dt.name] = dt

    def get(self, name: str) -> DatatypeDef | None:
        return self._types.get(name)

    def names(self) -> list[str]:
        return sorted(self._types)

    def validate(self, dt: DatatypeDef, record) -> dict:
        """Check `record` against `dt`; returns the (possibly coerced) record."""
        if not isinstance(record, dict):
            raise ValidationFailure(
                f"record for type {dt.name} must be an object, got {values.kind_of(record)}"
            )
        out = None  # copy lazily, only when a coercion changes something
        declared = dt.field_names()
        for spec in dt.fields:
            if spec.name not in record:
                if spec.optional:
                    continue
                raise ValidationFailure(f"missing required field {spec.name!r} for type {dt.name}")
            coerced = self._check_field(dt, spec, record[spec.name])
            if coerced is not record[spec.name]:
                if out is None:
                    out = dict(record)
                out[spec.name] = coerced
        if not dt.open:
            extra = set(record) - declared
            if extra:
                raise ValidationFailure(
                    f"closed type {dt.name} rejects unknown fields: {sorted(extra)}"
                )
        return out if out is not None else record

    def _check_field(self, dt: DatatypeDef, spec: FieldSpec, value):
        if spec.kind in ("multiset", "array"):
            if not isinstance(value, list):
                raise ValidationFailure(
                    f"{dt.name}.{spec.name}: expected a collection, got {values.kind_of(value)}"
                )
            if spec.item is None:
                return value
            out = None
            for i, item in enumerate(value):
                coerced = self._check_kind(dt, f"{spec.name}[{i}]", spec.item, item)
                if coerced is not item:
                    if out is None:
                        out = list(value)
                    out[i] = coerced
            return out if out is not None else value
        return self._check_kind(dt, spec.name, spec.kind, value)

    def _check_kind(self, dt: DatatypeDef, where: str, kind: str, value):
        kind = normalize_kind(kind)
        if kind == "any":
            return value
        if kind == "string" or kind == "uuid":
            if not isinstance(value, str):
                raise ValidationFailure(f"{dt.name}.{where}: expected string, got {values.kind_of(value)}")
            return value
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationFailure(f"{dt.name}.{where}: expected int, got {values.kind_of(value)}")
            return value
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationFailure(f"{dt.name}.{where}: expected float, got {values.kind_of(value)}")
            return float(value) if isinstance(value, int) else value
        if kind == "boolean":
            if not isinstance(value, bool):
                raise ValidationFailure(f"{dt.name}.{where}: expected boolean, got {values.kind_of(value)}")
            return value
        if kind == "datetime":
            if not isinstance(value, datetime):
                raise ValidationFailure(f"{dt.name}.{where}: expected datetime, got {values.kind_of(value)}")
            trunc = value - timedelta(microseconds=value.microsecond % 1000)
            return trunc if trunc != value else value
        if kind == "duration":
            if not isinstance(value, timedelta):
                raise ValidationFailure(f"{dt.name}.{where}: expected duration, got {values.kind_of(value)}")
            return value
        if kind == "point":
            if not isinstance(value, Point):
                raise ValidationFailure(f"{dt.name}.{where}: expected point, got {values.kind_of(value)}")
            return value
        if kind == "circle":
            if not isinstance(value, Circle):
                raise ValidationFailure(f"{dt.name}.{where}: expected circle, got {values.kind_of(value)}")
            return value
        if kind == "object":
            if not isinstance(value, dict):
                raise ValidationFailure(f"{dt.name}.{where}: expected object, got {values.kind_of(value)}")
            return value
        nested = self.get(kind)
        if nested is None:
            raise ValidationFailure(f"{dt.name}.{where}: unknown type {kind!r}")
        return self.validate(nested, value)


def index_compatible(kind: str, index_kind: str) -> bool:
    """Which field kinds each index kind accepts."""
    kind = normalize_kind(kind)
    if index_kind == "BTREE":
        return kind in ("string", "int", "float", "datetime", "uuid", "any")
    if index_kind == "RTREE":
        return kind in ("point", "circle", "any")
    return False
