"""Core calculus: types, terms, values, schemas, databases.

Everything downstream (checker, evaluators, translators, normalizer) works on
the structures defined here.  Terms and values are immutable dataclasses;
records keep their fields in sorted label order and bags are counted multisets
with a canonical item order, so structural equality is multiset equality and
nothing ever depends on insertion order.
"""

from __future__ import annotations

import dataclasses as dc
import json
from typing import Iterator, Optional, Union

# The time axis is a signed 64-bit integer with two reserved sentinels.  The
# extremes themselves are kept out of the value range so that sentinel
# arithmetic can saturate without wrapping.
INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1
BEGINNING_OF_TIME = INT64_MIN + 1
FOREVER = INT64_MAX - 1


class TqError(Exception):
    """Base class for every error this package raises on purpose."""


class ModelError(TqError):
    """Malformed core structure: bad label, bad row shape, bad schema."""


class InternalError(TqError):
    """A state the typechecker should have made unreachable."""


@dc.dataclass(frozen=True)
class Span:
    """Source position (1-based line and column) for diagnostics."""

    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


# ---------------------------------------------------------------------------
# Types

BASE_TYPES = ("int", "bool", "string", "time")


@dc.dataclass(frozen=True)
class Base:
    """A base type: int, bool, string or time."""

    name: str

    def __str__(self) -> str:
        return self.name


@dc.dataclass(frozen=True)
class Bag:
    elem: "Type"

    def __str__(self) -> str:
        return f"bag({self.elem})"


@dc.dataclass(frozen=True)
class Record:
    """A record type; fields are kept sorted by label."""

    fields: tuple  # of (label, Type)

    def __post_init__(self):
        _check_labels([l for l, _ in self.fields])
        object.__setattr__(self, "fields", tuple(sorted(self.fields)))

    def labels(self) -> tuple:
        return tuple(l for l, _ in self.fields)

    def field_type(self, label: str) -> Optional["Type"]:
        for l, t in self.fields:
            if l == label:
                return t
        return None

    def __str__(self) -> str:
        inner = ", ".join(f"{l}: {t}" for l, t in self.fields)
        return f"({inner})"


@dc.dataclass(frozen=True)
class Fun:
    """Function type; the arrow carries the latent effect set."""

    arg: "Type"
    res: "Type"
    effects: frozenset = frozenset()

    def __str__(self) -> str:
        if self.effects:
            eff = ",".join(sorted(self.effects))
            return f"({self.arg} -[{eff}]> {self.res})"
        return f"({self.arg} -> {self.res})"


@dc.dataclass(frozen=True)
class Table:
    """A table handle type; carries the table's dialect so the checker can
    dispatch get and the modification forms."""

    row: Record
    dialect: str = "plain"

    def __str__(self) -> str:
        if self.dialect != "plain":
            return f"table[{self.dialect}]{self.row}"
        return f"table{self.row}"


@dc.dataclass(frozen=True)
class TransactionRow:
    data: "Type"

    def __str__(self) -> str:
        return f"trow{self.data}"


@dc.dataclass(frozen=True)
class ValidRow:
    data: "Type"

    def __str__(self) -> str:
        return f"vrow{self.data}"


Type = Union[Base, Bag, Record, Fun, Table, TransactionRow, ValidRow]

INT = Base("int")
BOOL = Base("bool")
STRING = Base("string")
TIME = Base("time")

READ = "read"
WRITE = "write"
PURE: frozenset = frozenset()
EFF_READ = frozenset({READ})
EFF_WRITE = frozenset({WRITE})


def _check_labels(labels) -> None:
    seen = set()
    for l in labels:
        if l in seen:
            raise ModelError(f"duplicate label {l!r}")
        seen.add(l)


# ---------------------------------------------------------------------------
# Terms
#
# All constructors take their subterms positionally; `span` is diagnostic
# only and never part of structural equality.  Temporal table operations
# carry a `row_type` slot that the checker's annotation pass fills in; it
# does participate in equality so that annotation idempotence is a real
# statement.

_SPAN = dict(default=None, compare=False, repr=False, kw_only=True)


@dc.dataclass(frozen=True)
class Var:
    name: str
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Const:
    """A literal; tag is one of int, bool, string, time."""

    tag: str
    value: object
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class TableRef:
    name: str
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Lambda:
    """Abstraction.  param_type may be None only when the lambda is applied
    immediately (the let and sequencing sugar), where the argument fixes it."""

    param: str
    param_type: Optional[Type]
    body: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Apply:
    fn: "Term"
    arg: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class PrimOp:
    op: str
    args: tuple  # of Term
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class If:
    cond: "Term"
    then: "Term"
    other: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class EmptyBag:
    """The empty bag; elem_type is an optional ascription for positions where
    no surrounding term pins the element type down."""

    elem_type: Optional[Type] = None
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class SingletonBag:
    elem: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class BagUnion:
    left: "Term"
    right: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class For:
    """Bag comprehension: union of body instances over the source bag."""

    binder: str
    source: "Term"
    body: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class RecordLit:
    fields: tuple  # of (label, Term), sorted by label
    span: Optional[Span] = dc.field(**_SPAN)

    def __post_init__(self):
        _check_labels([l for l, _ in self.fields])
        object.__setattr__(self, "fields", tuple(sorted(self.fields)))


@dc.dataclass(frozen=True)
class Project:
    rec: "Term"
    label: str
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Now:
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Query:
    """Marks a read-only subcomputation of query type."""

    body: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Get:
    table: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Insert:
    table: "Term"
    rows: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Update:
    binder: str
    table: "Term"
    pred: "Term"
    sets: tuple  # of (label, Term)
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Delete:
    binder: str
    table: "Term"
    pred: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class RowLit:
    """A period-stamped row value under construction."""

    data: "Term"
    start: "Term"
    end: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class DataOf:
    row: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class StartOf:
    row: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class EndOf:
    row: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class SeqInsert:
    table: "Term"
    rows: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class SeqUpdate:
    binder: str
    table: "Term"
    pa_start: "Term"
    pa_end: "Term"
    pred: "Term"
    sets: tuple  # of (label, Term)
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class SeqDelete:
    binder: str
    table: "Term"
    pa_start: "Term"
    pa_end: "Term"
    pred: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class NonseqUpdate:
    """Nonsequenced update; the binder sees the whole stamped row."""

    binder: str
    table: "Term"
    pred: "Term"
    sets: tuple  # of (label, Term)
    valid_from: "Term"
    valid_to: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class NonseqDelete:
    binder: str
    table: "Term"
    pred: "Term"
    row_type: Optional[Record] = dc.field(default=None, kw_only=True)
    span: Optional[Span] = dc.field(**_SPAN)


@dc.dataclass(frozen=True)
class Join:
    """A flat comprehension to be stamped with the intersection of its
    temporal generators' periods."""

    body: "Term"
    span: Optional[Span] = dc.field(**_SPAN)


Term = Union[
    Var, Const, TableRef, Lambda, Apply, PrimOp, If, EmptyBag, SingletonBag,
    BagUnion, For, RecordLit, Project, Now, Query, Get, Insert, Update,
    Delete, RowLit, DataOf, StartOf, EndOf, SeqInsert, SeqUpdate, SeqDelete,
    NonseqUpdate, NonseqDelete, Join,
]


# ---------------------------------------------------------------------------
# Values


@dc.dataclass(frozen=True)
class ConstVal:
    tag: str
    value: object


@dc.dataclass(frozen=True)
class ClosureVal:
    param: str
    body: Term
    env: tuple  # of (name, Value)


@dc.dataclass(frozen=True)
class TableRefVal:
    name: str


@dc.dataclass(frozen=True)
class RecordVal:
    fields: tuple  # of (label, Value), sorted by label

    def __post_init__(self):
        _check_labels([l for l, _ in self.fields])
        object.__setattr__(self, "fields", tuple(sorted(self.fields)))

    def get(self, label: str) -> "Value":
        for l, v in self.fields:
            if l == label:
                return v
        raise ModelError(f"record has no field {label!r}")

    def labels(self) -> tuple:
        return tuple(l for l, _ in self.fields)


@dc.dataclass(frozen=True)
class RowVal:
    """A stamped row: payload record plus closed-open period [start, end)."""

    data: "Value"
    start: int
    end: int


@dc.dataclass(frozen=True)
class BagVal:
    """Counted multiset.  Items are (value, count) pairs with count > 0,
    merged and sorted by a canonical key, so equality is multiset equality."""

    items: tuple = ()

    def __post_init__(self):
        merged: dict = {}
        for v, n in self.items:
            if n < 0:
                raise ModelError("negative multiplicity")
            if n:
                merged[v] = merged.get(v, 0) + n
        canon = tuple(sorted(merged.items(), key=lambda p: canonical_key(p[0])))
        object.__setattr__(self, "items", canon)

    @classmethod
    def of(cls, *values) -> "BagVal":
        return cls(tuple((v, 1) for v in values))

    def count(self, value) -> int:
        for v, n in self.items:
            if v == value:
                return n
        return 0

    def total(self) -> int:
        return sum(n for _, n in self.items)

    def expand(self) -> Iterator["Value"]:
        for v, n in self.items:
            for _ in range(n):
                yield v

    def scale(self, k: int) -> "BagVal":
        return BagVal(tuple((v, n * k) for v, n in self.items))

    def is_empty(self) -> bool:
        return not self.items


Value = Union[ConstVal, ClosureVal, TableRefVal, RecordVal, RowVal, BagVal]

UNIT = RecordVal(())
TRUE = ConstVal("bool", True)
FALSE = ConstVal("bool", False)


def bag_union(a: BagVal, b: BagVal) -> BagVal:
    return BagVal(a.items + b.items)


# ---------------------------------------------------------------------------
# JSON encoding
#
# The canonical encoding: base constants are bare JSON scalars except times,
# which appear as {"time": n} with the sentinels spelled "inf" and "-inf";
# records, bags and rows are tagged one-key objects.  Bags carry an explicit
# unordered flag and list (item, multiplicity) pairs in canonical order.


def enc_time(t: int) -> object:
    if t == FOREVER:
        return "inf"
    if t == BEGINNING_OF_TIME:
        return "-inf"
    return t


def dec_time(x: object) -> int:
    if x == "inf":
        return FOREVER
    if x == "-inf":
        return BEGINNING_OF_TIME
    if isinstance(x, bool) or not isinstance(x, int):
        raise ModelError(f"bad time encoding: {x!r}")
    if not BEGINNING_OF_TIME <= x <= FOREVER:
        raise ModelError(f"time out of range: {x}")
    return x


def value_to_jsonable(v: Value) -> object:
    match v:
        case ConstVal("time", t):
            return {"time": enc_time(t)}
        case ConstVal(_, x):
            return x
        case RecordVal(fields):
            return {"record": {l: value_to_jsonable(w) for l, w in fields}}
        case RowVal(data, start, end):
            return {"row": [value_to_jsonable(data), enc_time(start), enc_time(end)]}
        case BagVal(items):
            return {
                "bag": [[value_to_jsonable(w), n] for w, n in items],
                "unordered": True,
            }
        case TableRefVal(name):
            return {"table": name}
        case ClosureVal(param, body, env):
            return {
                "closure": {
                    "param": param,
                    "body": repr(body),
                    "env": [[n, value_to_jsonable(w)] for n, w in env],
                }
            }
    raise ModelError(f"cannot encode {v!r}")


def canonical_key(v: Value) -> str:
    return json.dumps(value_to_jsonable(v), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Schemas and databases


@dc.dataclass(frozen=True)
class TableSchema:
    """One table: typed columns in declared order, a dialect tag, and the
    names of the period columns used by the flat representation."""

    name: str
    columns: tuple  # of (label, Base) in declared order
    dialect: str = "plain"  # plain | transaction | valid
    period: tuple = ("start", "end")

    def __post_init__(self):
        _check_labels([l for l, _ in self.columns])
        if self.dialect not in ("plain", "transaction", "valid"):
            raise ModelError(f"bad table dialect {self.dialect!r}")
        s, e = self.period
        if s == e:
            raise ModelError("period column names must differ")
        if self.dialect != "plain":
            for l, _ in self.columns:
                if l in (s, e):
                    raise ModelError(
                        f"table {self.name}: period column {l!r} clashes with a data column"
                    )

    def row_type(self) -> Record:
        return Record(self.columns)

    def data_labels(self) -> tuple:
        return tuple(sorted(l for l, _ in self.columns))


@dc.dataclass
class Schema:
    tables: dict  # name -> TableSchema

    def table(self, name: str) -> TableSchema:
        ts = self.tables.get(name)
        if ts is None:
            raise ModelError(f"unknown table {name!r}")
        return ts


@dc.dataclass
class Database:
    """Maps table names to bags; plain tables hold records, temporal tables
    hold stamped rows."""

    tables: dict  # name -> BagVal

    def table(self, name: str) -> BagVal:
        bag = self.tables.get(name)
        if bag is None:
            raise ModelError(f"unknown table {name!r}")
        return bag

    def with_table(self, name: str, bag: BagVal) -> "Database":
        out = dict(self.tables)
        out[name] = bag
        return Database(out)

    def copy(self) -> "Database":
        return Database(dict(self.tables))


def empty_database(schema: Schema) -> Database:
    return Database({name: BagVal() for name in schema.tables})


# ---------------------------------------------------------------------------
# Structural operations


def record_with(rec: RecordVal, updates) -> RecordVal:
    """Functional record update; every updated label must already exist."""
    present = dict(rec.fields)
    for l, v in updates:
        if l not in present:
            raise ModelError(f"record has no field {l!r}")
        present[l] = v
    return RecordVal(tuple(present.items()))


def flatten_row(row: RowVal, period=("start", "end")) -> RecordVal:
    """Merge a stamped row into one flat record carrying its period as two
    time columns."""
    s, e = period
    if not isinstance(row.data, RecordVal):
        raise ModelError("row payload is not a record")
    for l, _ in row.data.fields:
        if l in (s, e):
            raise ModelError(f"period column {l!r} clashes with a data column")
    extra = (
        (s, ConstVal("time", row.start)),
        (e, ConstVal("time", row.end)),
    )
    return RecordVal(row.data.fields + extra)


def unflatten_row(rec: RecordVal, period=("start", "end")) -> RowVal:
    """Inverse of flatten_row given the period column names."""
    s, e = period
    start = rec.get(s)
    end = rec.get(e)
    if not (isinstance(start, ConstVal) and start.tag == "time"):
        raise ModelError(f"column {s!r} is not a time")
    if not (isinstance(end, ConstVal) and end.tag == "time"):
        raise ModelError(f"column {e!r} is not a time")
    data = tuple((l, v) for l, v in rec.fields if l not in (s, e))
    return RowVal(RecordVal(data), start.value, end.value)


def flatten_schema(schema: Schema) -> Schema:
    """The flat image of a schema: temporal tables become plain tables with
    their period columns appended."""
    out = {}
    for name, ts in schema.tables.items():
        if ts.dialect == "plain":
            out[name] = ts
        else:
            s, e = ts.period
            cols = ts.columns + ((s, TIME), (e, TIME))
            out[name] = TableSchema(name, cols, "plain", ts.period)
    return Schema(out)


def flatten_db(db: Database, schema: Schema) -> Database:
    """Flatten every temporal table's rows; plain tables pass through."""
    out = {}
    for name, bag in db.tables.items():
        ts = schema.table(name)
        if ts.dialect == "plain":
            out[name] = bag
        else:
            out[name] = BagVal(
                tuple((flatten_row(r, ts.period), n) for r, n in bag.items)
            )
    return Database(out)


def max_timestamp(db: Database, schema: Schema) -> int:
    """Latest finite timestamp across temporal tables, starts included, or
    the beginning of time for an empty history.  A transaction clock at or
    past this point can close any open row without inverting its period."""
    best = BEGINNING_OF_TIME
    for name, bag in db.tables.items():
        if schema.table(name).dialect == "plain":
            continue
        for row, _ in bag.items:
            if not isinstance(row, RowVal):
                continue
            if row.start != FOREVER and row.start > best:
                best = row.start
            if row.end != FOREVER and row.end > best:
                best = row.end
    return best


def wf_violations(db: Database, schema: Schema):
    """Stamped rows whose period is empty or inverted, as (table, row) pairs."""
    bad = []
    for name, bag in sorted(db.tables.items()):
        if schema.table(name).dialect == "plain":
            continue
        for row, _ in bag.items:
            if not isinstance(row, RowVal):
                raise ModelError(f"table {name!r} holds a non-row value")
            if not row.start < row.end:
                bad.append((name, row))
    return bad


def well_formed(db: Database, schema: Schema) -> bool:
    return not wf_violations(db, schema)


def eta_expand(var: str, labels) -> RecordLit:
    """Spell a record variable out field by field: (l1 = x.l1, ...)."""
    return RecordLit(tuple((l, Project(Var(var), l)) for l in labels))


# ---------------------------------------------------------------------------
# Term traversal helpers


def term_size(t: Term) -> int:
    n = 1
    for sub in subterms(t):
        n += term_size(sub)
    return n


def subterms(t: Term):
    """Immediate subterms, binders ignored."""
    match t:
        case Var() | Const() | TableRef() | Now() | EmptyBag():
            return ()
        case Lambda(_, _, body):
            return (body,)
        case Apply(fn, arg):
            return (fn, arg)
        case PrimOp(_, args):
            return tuple(args)
        case If(c, a, b):
            return (c, a, b)
        case SingletonBag(e):
            return (e,)
        case BagUnion(a, b):
            return (a, b)
        case For(_, src, body):
            return (src, body)
        case RecordLit(fields):
            return tuple(m for _, m in fields)
        case Project(r, _):
            return (r,)
        case Query(b) | Join(b):
            return (b,)
        case Get(m):
            return (m,)
        case Insert(m, n) | SeqInsert(m, n):
            return (m, n)
        case Update(_, m, p, sets):
            return (m, p) + tuple(e for _, e in sets)
        case Delete(_, m, p):
            return (m, p)
        case RowLit(d, s, e):
            return (d, s, e)
        case DataOf(r) | StartOf(r) | EndOf(r):
            return (r,)
        case SeqUpdate(_, m, ps, pe, p, sets):
            return (m, ps, pe, p) + tuple(e for _, e in sets)
        case SeqDelete(_, m, ps, pe, p):
            return (m, ps, pe, p)
        case NonseqUpdate(_, m, p, sets, f, to):
            return (m, p) + tuple(e for _, e in sets) + (f, to)
        case NonseqDelete(_, m, p):
            return (m, p)
    raise InternalError(f"subterms: {type(t).__name__}")


def free_vars(t: Term) -> frozenset:
    match t:
        case Var(name):
            return frozenset({name})
        case Lambda(param, _, body):
            return free_vars(body) - {param}
        case For(binder, src, body):
            return free_vars(src) | (free_vars(body) - {binder})
        case Update(binder, m, p, sets):
            inner = free_vars(p)
            for _, e in sets:
                inner |= free_vars(e)
            return free_vars(m) | (inner - {binder})
        case Delete(binder, m, p) | NonseqDelete(binder, m, p):
            return free_vars(m) | (free_vars(p) - {binder})
        case SeqUpdate(binder, m, ps, pe, p, sets):
            inner = free_vars(p)
            for _, e in sets:
                inner |= free_vars(e)
            outer = free_vars(m) | free_vars(ps) | free_vars(pe)
            return outer | (inner - {binder})
        case SeqDelete(binder, m, ps, pe, p):
            outer = free_vars(m) | free_vars(ps) | free_vars(pe)
            return outer | (free_vars(p) - {binder})
        case NonseqUpdate(binder, m, p, sets, f, to):
            inner = free_vars(p) | free_vars(f) | free_vars(to)
            for _, e in sets:
                inner |= free_vars(e)
            return free_vars(m) | (inner - {binder})
        case _:
            out: frozenset = frozenset()
            for sub in subterms(t):
                out |= free_vars(sub)
            return out


class FreshNames:
    """Deterministic fresh-name supply; names keep their original stem."""

    def __init__(self, taken=()):
        self._counter = 0
        self._taken = set(taken)

    def fresh(self, stem: str) -> str:
        stem = stem.split("_")[0] or "x"
        while True:
            self._counter += 1
            cand = f"{stem}_{self._counter}"
            if cand not in self._taken:
                self._taken.add(cand)
                return cand


def alpha_rename(t: Term, names: Optional[FreshNames] = None) -> Term:
    """Rename every binder to a fresh name.  Afterwards all binders are
    pairwise distinct and distinct from the free variables, which makes the
    naive substitution below capture-free."""
    if names is None:
        names = FreshNames(free_vars(t))

    def go(t: Term, ren: dict) -> Term:
        match t:
            case Var(name):
                return dc.replace(t, name=ren.get(name, name))
            case Lambda(param, pt, body):
                p2 = names.fresh(param)
                return dc.replace(t, param=p2, body=go(body, {**ren, param: p2}))
            case For(binder, src, body):
                b2 = names.fresh(binder)
                return dc.replace(
                    t, binder=b2, source=go(src, ren), body=go(body, {**ren, binder: b2})
                )
            case Update(binder, m, p, sets):
                b2 = names.fresh(binder)
                inner = {**ren, binder: b2}
                return dc.replace(
                    t,
                    binder=b2,
                    table=go(m, ren),
                    pred=go(p, inner),
                    sets=tuple((l, go(e, inner)) for l, e in sets),
                )
            case Delete(binder, m, p) | NonseqDelete(binder, m, p):
                b2 = names.fresh(binder)
                inner = {**ren, binder: b2}
                return dc.replace(t, binder=b2, table=go(m, ren), pred=go(p, inner))
            case SeqUpdate(binder, m, ps, pe, p, sets):
                b2 = names.fresh(binder)
                inner = {**ren, binder: b2}
                return dc.replace(
                    t,
                    binder=b2,
                    table=go(m, ren),
                    pa_start=go(ps, ren),
                    pa_end=go(pe, ren),
                    pred=go(p, inner),
                    sets=tuple((l, go(e, inner)) for l, e in sets),
                )
            case SeqDelete(binder, m, ps, pe, p):
                b2 = names.fresh(binder)
                inner = {**ren, binder: b2}
                return dc.replace(
                    t,
                    binder=b2,
                    table=go(m, ren),
                    pa_start=go(ps, ren),
                    pa_end=go(pe, ren),
                    pred=go(p, inner),
                )
            case NonseqUpdate(binder, m, p, sets, f, to):
                b2 = names.fresh(binder)
                inner = {**ren, binder: b2}
                return dc.replace(
                    t,
                    binder=b2,
                    table=go(m, ren),
                    pred=go(p, inner),
                    sets=tuple((l, go(e, inner)) for l, e in sets),
                    valid_from=go(f, inner),
                    valid_to=go(to, inner),
                )
            case _:
                return map_subterms(t, lambda s: go(s, ren))

    return go(t, {})


def map_subterms(t: Term, f) -> Term:
    """Rebuild a term with every immediate subterm passed through f.
    Binders are left alone; callers deal with scope themselves."""
    match t:
        case Var() | Const() | TableRef() | Now() | EmptyBag():
            return t
        case Lambda():
            return dc.replace(t, body=f(t.body))
        case Apply():
            return dc.replace(t, fn=f(t.fn), arg=f(t.arg))
        case PrimOp():
            return dc.replace(t, args=tuple(f(a) for a in t.args))
        case If():
            return dc.replace(t, cond=f(t.cond), then=f(t.then), other=f(t.other))
        case SingletonBag():
            return dc.replace(t, elem=f(t.elem))
        case BagUnion():
            return dc.replace(t, left=f(t.left), right=f(t.right))
        case For():
            return dc.replace(t, source=f(t.source), body=f(t.body))
        case RecordLit():
            return dc.replace(t, fields=tuple((l, f(e)) for l, e in t.fields))
        case Project():
            return dc.replace(t, rec=f(t.rec))
        case Query() | Join():
            return dc.replace(t, body=f(t.body))
        case Get():
            return dc.replace(t, table=f(t.table))
        case Insert() | SeqInsert():
            return dc.replace(t, table=f(t.table), rows=f(t.rows))
        case Update():
            return dc.replace(
                t,
                table=f(t.table),
                pred=f(t.pred),
                sets=tuple((l, f(e)) for l, e in t.sets),
            )
        case Delete() | NonseqDelete():
            return dc.replace(t, table=f(t.table), pred=f(t.pred))
        case RowLit():
            return dc.replace(t, data=f(t.data), start=f(t.start), end=f(t.end))
        case DataOf() | StartOf() | EndOf():
            return dc.replace(t, row=f(t.row))
        case SeqUpdate():
            return dc.replace(
                t,
                table=f(t.table),
                pa_start=f(t.pa_start),
                pa_end=f(t.pa_end),
                pred=f(t.pred),
                sets=tuple((l, f(e)) for l, e in t.sets),
            )
        case SeqDelete():
            return dc.replace(
                t,
                table=f(t.table),
                pa_start=f(t.pa_start),
                pa_end=f(t.pa_end),
                pred=f(t.pred),
            )
        case NonseqUpdate():
            return dc.replace(
                t,
                table=f(t.table),
                pred=f(t.pred),
                sets=tuple((l, f(e)) for l, e in t.sets),
                valid_from=f(t.valid_from),
                valid_to=f(t.valid_to),
            )
    raise InternalError(f"map_subterms: {type(t).__name__}")


def subst(t: Term, name: str, repl: Term) -> Term:
    """Substitute repl for the free variable name.  Only safe on terms whose
    binders have been freshened (see alpha_rename); asserts the precondition
    rather than renaming on the fly."""

    def binder_of(t: Term):
        if isinstance(t, Lambda):
            return t.param
        if isinstance(t, For):
            return t.binder
        return getattr(t, "binder", None)

    repl_free = free_vars(repl)

    def go(t: Term) -> Term:
        if isinstance(t, Var):
            return repl if t.name == name else t
        b = binder_of(t)
        if b == name:
            # Freshened terms never shadow: every binder is distinct from
            # every other name in the tree.
            raise InternalError(f"subst into unfreshened term: binder {b}")
        if b is not None:
            assert b not in repl_free, f"capture of {b} while substituting {name}"
        return map_subterms(t, go)

    return go(t)


def let_(name: str, bound: Term, body: Term) -> Term:
    """The let sugar: an immediately applied lambda."""
    return Apply(Lambda(name, None, body), bound)


def seq_(first: Term, rest: Term) -> Term:
    return let_("_", first, rest)
