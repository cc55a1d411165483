"""Keyed record storage with secondary indexes and snapshot support.

Each dataset keeps its records and index structures in a *generation*.
Taking a snapshot freezes the current generation (O(1)); the first mutation
after a freeze clones it, so readers hold immutable state while writers move
on.  Stored records are treated as immutable: all callers copy before
modifying.
"""

from __future__ import annotations

import io
import json
import logging
import threading
import uuid
from dataclasses import dataclass, field

from . import values
from .errors import (
    DuplicateKey,
    DuplicateName,
    IncompatibleFieldKind,
    UnknownDataset,
    UnknownIndex,
    UnknownKeyField,
    ValidationFailure,
    WrongIndexKind,
)
from .indexes import OrderedIndex, RTree
from .schema import DatatypeDef, TypeRegistry, index_compatible
from .values import freeze

logger = logging.getLogger(__name__)

INDEX_KINDS = ("BTREE", "RTREE")


@dataclass(frozen=True)
class IndexDef:
    name: str
    dataset: str
    field: str
    kind: str  # BTREE | RTREE


class _Generation:
    __slots__ = ("records", "indexes", "frozen")

    def __init__(self):
        self.records: dict = {}
        self.indexes: dict[str, OrderedIndex | RTree] = {}
        self.frozen = False

    def clone(self) -> "_Generation":
        g = _Generation()
        g.records = dict(self.records)
        g.indexes = {name: idx.clone() for name, idx in self.indexes.items()}
        return g


class Wal:
    """Append-only newline-delimited JSON log of record mutations."""

    def __init__(self, path):
        self._lock = threading.Lock()
        self._fh: io.TextIOBase = open(path, "a", encoding="utf-8")

    def append(self, op: str, dataset: str, key, record=None) -> None:
        entry = {"op": op, "dataset": dataset, "key": values.to_wire(key)}
        if record is not None:
            entry["record"] = values.to_wire(record)
        line = json.dumps(entry, separators=(",", ":"), ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    @staticmethod
    def replay(path, catalog: "Catalog") -> int:
        count = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = values.loads(line)
                ds = catalog.dataset(entry["dataset"])
                op = entry["op"]
                if op == "insert":
                    ds.insert(entry["record"], replay_key=entry["key"])
                elif op == "upsert":
                    ds.upsert(entry["record"])
                elif op == "delete":
                    ds.delete_key(entry["key"])
                count += 1
        return count


class DatasetSnapshot:
    """Immutable view over a frozen generation."""

    def __init__(self, dataset: "Dataset", gen: _Generation):
        self.name = dataset.name
        self._dataset = dataset
        self._gen = gen

    def __len__(self):
        return len(self._gen.records)

    def get(self, key):
        return self._gen.records.get(freeze(key))

    def fetch(self, frozen_key):
        return self._gen.records.get(frozen_key)

    def records(self):
        return self._gen.records.values()

    def items(self):
        return self._gen.records.items()

    def index_scan(self, index_name, low, high, low_inclusive=True, high_inclusive=False):
        idx = self._index(index_name, "BTREE")
        return idx.scan(low, high, low_inclusive, high_inclusive)

    def index_probe(self, index_name, region):
        idx = self._index(index_name, "RTREE")
        return idx.probe(region)

    def index_for_field(self, fieldname, kind) -> str | None:
        return self._dataset.index_for_field(fieldname, kind)

    def _index(self, name, want_kind):
        idef = self._dataset.index_def(name)
        if idef.kind != want_kind:
            raise WrongIndexKind(f"index {name} is {idef.kind}, not {want_kind}")
        return self._gen.indexes[name]


class Dataset:
    """One keyed record collection plus its secondary indexes.

    Mutations are serialized by a per-dataset lock and keep every index
    consistent before returning.  `unique guards` enforce uniqueness over
    field tuples (used by channel result staging).
    """

    def __init__(self, name: str, datatype: DatatypeDef, pk_field: str,
                 autogenerated: bool, types: TypeRegistry, wal: Wal | None = None):
        if not autogenerated:
            spec = datatype.get_field(pk_field)
            if spec is None:
                raise UnknownKeyField(
                    f"primary key field {pk_field!r} is not declared by type {datatype.name}"
                )
        self.name = name
        self.datatype = datatype
        self.pk_field = pk_field
        self.autogenerated = autogenerated
        self._types = types
        self._wal = wal
        self._lock = threading.RLock()
        self._gen = _Generation()
        self._index_defs: dict[str, IndexDef] = {}
        self._guards: dict[tuple, set] = {}
        self._listeners: list = []

    # -- snapshots ----------------------------------------------------------

    def snapshot(self) -> DatasetSnapshot:
        with self._lock:
            self._gen.frozen = True
            return DatasetSnapshot(self, self._gen)

    def _writable(self) -> _Generation:
        if self._gen.frozen:
            self._gen = self._gen.clone()
        return self._gen

    # -- observers ------------------------------------------------------------

    def add_listener(self, fn) -> None:
        """fn(op, key, record_or_None) invoked after each applied mutation."""
        with self._lock:
            self._listeners.append(fn)

    def add_unique_guard(self, fields: tuple[str, ...]) -> None:
        with self._lock:
            seen = set()
            for rec in self._gen.records.values():
                seen.add(self._guard_key(fields, rec))
            self._guards[fields] = seen

    def guard_contains(self, fields: tuple[str, ...], rec_like) -> bool:
        with self._lock:
            guard = self._guards.get(fields)
            if guard is None:
                return False
            return self._guard_key(fields, rec_like) in guard

    @staticmethod
    def _guard_key(fields, rec):
        return tuple(freeze(rec.get(f)) for f in fields)

    # -- mutations ------------------------------------------------------------

    def insert(self, record, replay_key=None):
        with self._lock:
            if self.autogenerated and isinstance(record, dict) and self.pk_field not in record:
                record = dict(record)
                record[self.pk_field] = replay_key if replay_key is not None else str(uuid.uuid4())
            record = self._types.validate(self.datatype, record)
            key = self._key_of(record)
            if freeze(key) in self._gen.records:
                raise DuplicateKey(f"{self.name}: key {key!r} already present")
            self._apply("insert", key, record)
            return key

    def upsert(self, record):
        with self._lock:
            record = self._types.validate(self.datatype, record)
            if self.pk_field not in record:
                raise ValidationFailure(
                    f"{self.name}: upsert requires an explicit {self.pk_field!r} value"
                )
            key = self._key_of(record)
            self._apply("upsert", key, record)
            return key

    def delete(self, predicate) -> int:
        """Remove every record satisfying `predicate(record)`; returns the count."""
        with self._lock:
            doomed = [k for k, rec in self._gen.records.items() if predicate(rec)]
            for k in doomed:
                self._apply("delete", self._gen.records[k][self.pk_field], None)
            return len(doomed)

    def delete_key(self, key) -> bool:
        with self._lock:
            if freeze(key) not in self._gen.records:
                return False
            self._apply("delete", key, None)
            return True

    def get(self, key):
        with self._lock:
            return self._gen.records.get(freeze(key))

    def __len__(self):
        with self._lock:
            return len(self._gen.records)

    def keys(self):
        with self._lock:
            return list(self._gen.records)

    def _key_of(self, record):
        if self.pk_field not in record:
            raise ValidationFailure(f"{self.name}: record lacks key field {self.pk_field!r}")
        return record[self.pk_field]

    def _apply(self, op, key, record):
        gen = self._writable()
        fkey = freeze(key)
        old = gen.records.get(fkey)
        if op == "delete":
            del gen.records[fkey]
        else:
            gen.records[fkey] = record
        for name, idef in self._index_defs.items():
            idx = gen.indexes[name]
            if old is not None and idef.field in old and old[idef.field] is not None:
                idx.remove(old[idef.field], fkey)
            if record is not None and idef.field in record and record[idef.field] is not None:
                idx.add(record[idef.field], fkey)
        for fields, guard in self._guards.items():
            if old is not None:
                guard.discard(self._guard_key(fields, old))
            if record is not None:
                guard.add(self._guard_key(fields, record))
        if self._wal is not None:
            self._wal.append(op if op != "upsert" else "upsert", self.name, key, record)
        for fn in self._listeners:
            try:
                fn(op, key, record)
            except Exception:
                logger.exception("dataset %s listener failed", self.name)

    # -- indexes ---------------------------------------------------------------

    def create_index(self, name: str, fieldname: str, kind: str) -> IndexDef:
        with self._lock:
            if kind not in INDEX_KINDS:
                raise WrongIndexKind(f"unknown index kind {kind!r}")
            if name in self._index_defs:
                raise DuplicateName(f"index {name} already exists")
            spec = self.datatype.get_field(fieldname)
            declared = spec.kind if spec is not None else "any"
            if not index_compatible(declared, kind):
                raise IncompatibleFieldKind(
                    f"cannot build {kind} over {self.name}.{fieldname} ({declared})"
                )
            idef = IndexDef(name, self.name, fieldname, kind)
            gen = self._writable()
            idx = OrderedIndex() if kind == "BTREE" else RTree()
            for fkey, rec in gen.records.items():
                if fieldname in rec and rec[fieldname] is not None:
                    idx.add(rec[fieldname], fkey)
            gen.indexes[name] = idx
            self._index_defs[name] = idef
            return idef

    def index_def(self, name: str) -> IndexDef:
        idef = self._index_defs.get(name)
        if idef is None:
            raise UnknownIndex(f"no index {name} on {self.name}")
        return idef

    def index_defs(self) -> list[IndexDef]:
        return list(self._index_defs.values())

    def index_for_field(self, fieldname: str, kind: str) -> str | None:
        for idef in self._index_defs.values():
            if idef.field == fieldname and idef.kind == kind:
                return idef.name
        return None

    def index_range_scan(self, index_name, low, high):
        """Keys with low <= field < high, ascending."""
        return self.snapshot().index_scan(index_name, low, high, True, False)

    def index_spatial_probe(self, index_name, region):
        return self.snapshot().index_probe(index_name, region)


@dataclass
class CatalogSnapshot:
    datasets: dict[str, DatasetSnapshot] = field(default_factory=dict)

    def dataset(self, name: str) -> DatasetSnapshot:
        ds = self.datasets.get(name)
        if ds is None:
            raise UnknownDataset(f"dataset {name} does not exist")
        return ds


class Catalog:
    """Engine-wide registry of types, datasets, and named functions."""

    def __init__(self, wal: Wal | None = None):
        self._lock = threading.RLock()
        self.types = TypeRegistry()
        self._datasets: dict[str, Dataset] = {}
        self._functions: dict[tuple[str, int], object] = {}
        self._index_owner: dict[str, str] = {}
        self._wal = wal

    # -- datasets ----------------------------------------------------------

    def create_dataset(self, name: str, datatype: DatatypeDef, pk_field: str,
                       autogenerated: bool = False) -> Dataset:
        with self._lock:
            if name in self._datasets:
                raise DuplicateName(f"dataset {name} already exists")
            ds = Dataset(name, datatype, pk_field, autogenerated, self.types, self._wal)
            self._datasets[name] = ds
            return ds

    def dataset(self, name: str) -> Dataset:
        ds = self._datasets.get(name)
        if ds is None:
            raise UnknownDataset(f"dataset {name} does not exist")
        return ds

    def has_dataset(self, name: str) -> bool:
        return name in self._datasets

    def dataset_names(self) -> list[str]:
        with self._lock:
            return sorted(self._datasets)

    def drop_dataset(self, name: str) -> None:
        with self._lock:
            ds = self.dataset(name)
            for idef in ds.index_defs():
                self._index_owner.pop(idef.name, None)
            del self._datasets[name]

    def create_index(self, index_name: str, dataset: str, fieldname: str, kind: str) -> IndexDef:
        with self._lock:
            if index_name in self._index_owner:
                raise DuplicateName(f"index {index_name} already exists")
            idef = self.dataset(dataset).create_index(index_name, fieldname, kind)
            self._index_owner[index_name] = dataset
            return idef

    def index(self, index_name: str) -> tuple[Dataset, IndexDef]:
        owner = self._index_owner.get(index_name)
        if owner is None:
            raise UnknownIndex(f"no index named {index_name}")
        ds = self.dataset(owner)
        return ds, ds.index_def(index_name)

    # -- functions -----------------------------------------------------------

    def add_function(self, fn) -> None:
        with self._lock:
            ident = (fn.name, len(fn.params))
            if ident in self._functions:
                raise DuplicateName(f"function {fn.name}@{len(fn.params)} already exists")
            self._functions[ident] = fn

    def function(self, name: str, arity: int):
        return self._functions.get((name, arity))

    # -- snapshots -------------------------------------------------------------

    def snapshot(self) -> CatalogSnapshot:
        with self._lock:
            snap = CatalogSnapshot()
            for name in sorted(self._datasets):
                snap.datasets[name] = self._datasets[name].snapshot()
            return snap
