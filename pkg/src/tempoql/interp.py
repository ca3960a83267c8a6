"""Big-step evaluators for the three dialects.

One evaluator serves all of them; the modification forms dispatch on the
target table's dialect, so the plain forms act as current-time operations on
temporal tables.  Three judgement modes thread through evaluation:

- "pure": no database access; the clock is still available.
- "read": adds get.
- "full": adds the write forms and threads the database left to right.

Predicates, set clauses, inserted rows and period arguments always evaluate
in pure mode, query and join bodies in read mode, exactly as the typing
rules promise.  An evaluator works on a private copy of the database, so a
dynamic failure (Aborted) leaves the caller's database untouched.

The clock is fixed for the whole evaluation.  Transaction-time evaluation
requires a well-formed database whose history does not extend past the
clock; valid-time evaluation requires well-formedness only.

Per-rule counters can be collected by passing a coverage dict; sequenced
modifications additionally count which overlap case fired per row.
"""

from __future__ import annotations

import dataclasses as dc
from typing import Optional, Tuple

from .model import (
    BEGINNING_OF_TIME,
    FOREVER,
    Apply,
    BagUnion,
    BagVal,
    ClosureVal,
    Const,
    ConstVal,
    Database,
    DataOf,
    Delete,
    EmptyBag,
    EndOf,
    For,
    Get,
    If,
    Insert,
    InternalError,
    Join,
    Lambda,
    NonseqDelete,
    NonseqUpdate,
    Now,
    PrimOp,
    Project,
    Query,
    RecordLit,
    RecordVal,
    RowLit,
    RowVal,
    Schema,
    SeqDelete,
    SeqInsert,
    SeqUpdate,
    SingletonBag,
    StartOf,
    TableRef,
    TableRefVal,
    Term,
    TqError,
    Update,
    Value,
    Var,
    bag_union,
    max_timestamp,
    record_with,
    well_formed,
)

class Aborted(TqError):
    """A dynamic well-formedness check failed; the database is unchanged."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


@dc.dataclass
class EvalContext:
    schema: Schema
    clock: int
    dialect: str  # linq | t | v
    current: str = "desugar"  # desugar | direct, for current ops on valid tables
    coverage: Optional[dict] = None


class Evaluator:
    def __init__(self, ctx: EvalContext, db: Database):
        self.ctx = ctx
        self.schema = ctx.schema
        self.clock = ctx.clock
        self.tables = dict(db.tables)

    def bump(self, rule: str) -> None:
        cov = self.ctx.coverage
        if cov is not None:
            cov[rule] = cov.get(rule, 0) + 1

    def run(self, term: Term) -> Tuple[Value, Database]:
        v = self.eval(term, {}, "full")
        return v, Database(dict(self.tables))

    # -- the big-step relation

    def eval(self, t: Term, env: dict, mode: str) -> Value:
        match t:
            case Const(tag, v):
                self.bump("E-Val")
                return ConstVal(tag, v)
            case Var(name):
                self.bump("E-Val")
                if name not in env:
                    raise InternalError(f"unbound variable {name}")
                return env[name]
            case Lambda(param, _, body):
                self.bump("E-Val")
                return ClosureVal(param, body, tuple(sorted(env.items())))
            case TableRef(name):
                self.bump("E-Val")
                return TableRefVal(name)
            case EmptyBag():
                self.bump("E-Val")
                return BagVal()
            case Now():
                self.bump("E-Now")
                return ConstVal("time", self.clock)
            case Apply(fn, arg):
                self.bump("E-App")
                f = self.eval(fn, env, mode)
                a = self.eval(arg, env, mode)
                if not isinstance(f, ClosureVal):
                    raise InternalError("applied a non-closure")
                cenv = dict(f.env)
                cenv[f.param] = a
                return self.eval(f.body, cenv, mode)
            case PrimOp(op, args):
                self.bump("E-Op")
                vals = [self.eval(a, env, mode) for a in args]
                return apply_prim(op, vals)
            case If(cond, then, other):
                c = self.eval(cond, env, mode)
                if not (isinstance(c, ConstVal) and c.tag == "bool"):
                    raise InternalError("condition did not evaluate to a bool")
                if c.value:
                    self.bump("E-IfT")
                    return self.eval(then, env, mode)
                self.bump("E-IfF")
                return self.eval(other, env, mode)
            case SingletonBag(e):
                self.bump("E-Bag")
                return BagVal.of(self.eval(e, env, mode))
            case BagUnion(a, b):
                self.bump("E-BagUnion")
                va = self.eval(a, env, mode)
                vb = self.eval(b, env, mode)
                return bag_union(va, vb)
            case RecordLit(fields):
                self.bump("E-Record")
                return RecordVal(tuple((l, self.eval(e, env, mode)) for l, e in fields))
            case Project(rec, label):
                self.bump("E-Project")
                r = self.eval(rec, env, mode)
                if not isinstance(r, RecordVal):
                    raise InternalError("projection from a non-record")
                return r.get(label)
            case Query(body):
                self.bump("E-Query")
                return self.eval(body, env, "read")
            case For(binder, src, body):
                bag = self.eval(src, env, mode)
                if not isinstance(bag, BagVal):
                    raise InternalError("comprehension source is not a bag")
                if bag.is_empty():
                    self.bump("E-ForEmpty")
                    return BagVal()
                self.bump("E-For")
                pieces = []
                # element at a time: a full-mode body may write, so the
                # database threads through iterations in canonical order
                for v in bag.expand():
                    piece = self.eval(body, {**env, binder: v}, mode)
                    if not isinstance(piece, BagVal):
                        raise InternalError("comprehension body is not a bag")
                    pieces.append(piece.items)
                return BagVal(tuple(p for items in pieces for p in items))
            case Get(m):
                if mode == "pure":
                    raise InternalError("get in pure position")
                self.bump("E-Get")
                tv = self.eval(m, env, mode)
                return self.table_bag(tv)
            case DataOf(r):
                self.bump("E-Data")
                return self.row_of(r, env, mode).data
            case StartOf(r):
                self.bump("E-Start")
                return ConstVal("time", self.row_of(r, env, mode).start)
            case EndOf(r):
                self.bump("E-End")
                return ConstVal("time", self.row_of(r, env, mode).end)
            case RowLit(d, s, e):
                self.bump("EV-Row")
                dv = self.eval(d, env, mode)
                sv = self.time_of(self.eval(s, env, mode))
                ev = self.time_of(self.eval(e, env, mode))
                return RowVal(dv, sv, ev)
            case Join(body):
                # join evaluates through the normalizer; see querycomp
                raise InternalError("join must be normalized before evaluation")
            case Insert() | Update() | Delete() | SeqInsert() | SeqUpdate() \
                    | SeqDelete() | NonseqUpdate() | NonseqDelete():
                if mode != "full":
                    raise InternalError(f"write in {mode} position")
                return self.modify(t, env)
        raise InternalError(f"no rule for {type(t).__name__}")

    # -- helpers

    def table_bag(self, tv: Value) -> BagVal:
        if not isinstance(tv, TableRefVal):
            raise InternalError("get of a non-table value")
        bag = self.tables.get(tv.name)
        if bag is None:
            raise InternalError(f"table {tv.name} missing from the database")
        return bag

    def row_of(self, r: Term, env: dict, mode: str) -> RowVal:
        v = self.eval(r, env, mode)
        if not isinstance(v, RowVal):
            raise InternalError("row accessor on a non-row")
        return v

    def time_of(self, v: Value) -> int:
        if not (isinstance(v, ConstVal) and v.tag == "time"):
            raise InternalError("expected a time value")
        return v.value

    def pure(self, t: Term, env: dict) -> Value:
        return self.eval(t, env, "pure")

    def pure_bool(self, t: Term, env: dict) -> bool:
        v = self.pure(t, env)
        if not (isinstance(v, ConstVal) and v.tag == "bool"):
            raise InternalError("predicate did not evaluate to a bool")
        return v.value

    def target(self, m: Term, env: dict):
        tv = self.eval(m, env, "full")
        if not isinstance(tv, TableRefVal):
            raise InternalError("modification of a non-table value")
        ts = self.schema.table(tv.name)
        bag = self.tables.get(tv.name)
        if bag is None:
            raise InternalError(f"table {tv.name} missing from the database")
        return tv.name, ts, bag

    # -- modifications, dispatched on the target table's dialect

    def modify(self, t: Term, env: dict) -> Value:
        unit = RecordVal(())
        match t:
            case Insert(m, rows):
                name, ts, bag = self.target(m, env)
                rv = self.pure(rows, env)
                if not isinstance(rv, BagVal):
                    raise InternalError("inserted rows are not a bag")
                if ts.dialect == "plain":
                    self.bump("E-Insert")
                    self.tables[name] = bag_union(bag, rv)
                elif ts.dialect == "transaction":
                    self.bump("ET-Insert")
                    stamped = BagVal(
                        tuple((RowVal(r, self.clock, FOREVER), n) for r, n in rv.items)
                    )
                    self.tables[name] = bag_union(bag, stamped)
                else:
                    # current insert on a valid table: stamp [now, forever)
                    self.bump("EV-SeqInsert")
                    stamped = BagVal(
                        tuple((RowVal(r, self.clock, FOREVER), n) for r, n in rv.items)
                    )
                    self.tables[name] = bag_union(bag, stamped)
                return unit
            case Update(binder, m, pred, sets):
                name, ts, bag = self.target(m, env)
                if ts.dialect == "plain":
                    self.bump("E-Update")
                    out = []
                    for r, n in bag.items:
                        if self.pure_bool(pred, {**env, binder: r}):
                            vals = [(l, self.pure(e, {**env, binder: r})) for l, e in sets]
                            out.append((record_with(r, vals), n))
                        else:
                            out.append((r, n))
                    self.tables[name] = BagVal(tuple(out))
                elif ts.dialect == "transaction":
                    self.bump("ET-Update")
                    out = []
                    for row, n in bag.items:
                        d = row.data
                        if row.end == FOREVER and self.pure_bool(pred, {**env, binder: d}):
                            vals = [(l, self.pure(e, {**env, binder: d})) for l, e in sets]
                            out.append((RowVal(d, row.start, self.clock), n))
                            out.append((RowVal(record_with(d, vals), self.clock, FOREVER), n))
                        else:
                            out.append((row, n))
                    self.tables[name] = BagVal(tuple(out))
                elif self.ctx.current == "direct":
                    self.current_update_direct(t, name, bag, env)
                else:
                    desugared = SeqUpdate(
                        binder, m, Now(), Const("time", FOREVER), pred, sets,
                        row_type=t.row_type,
                    )
                    return self.modify(desugared, env)
                return unit
            case Delete(binder, m, pred):
                name, ts, bag = self.target(m, env)
                if ts.dialect == "plain":
                    self.bump("E-Delete")
                    out = [
                        (r, n)
                        for r, n in bag.items
                        if not self.pure_bool(pred, {**env, binder: r})
                    ]
                    self.tables[name] = BagVal(tuple(out))
                elif ts.dialect == "transaction":
                    self.bump("ET-Delete")
                    out = []
                    for row, n in bag.items:
                        d = row.data
                        if row.end == FOREVER and self.pure_bool(pred, {**env, binder: d}):
                            out.append((RowVal(d, row.start, self.clock), n))
                        else:
                            out.append((row, n))
                    self.tables[name] = BagVal(tuple(out))
                elif self.ctx.current == "direct":
                    self.current_delete_direct(t, name, bag, env)
                else:
                    desugared = SeqDelete(
                        binder, m, Now(), Const("time", FOREVER), pred,
                        row_type=t.row_type,
                    )
                    return self.modify(desugared, env)
                return unit
            case SeqInsert(m, rows):
                self.bump("EV-SeqInsert")
                name, ts, bag = self.target(m, env)
                rv = self.pure(rows, env)
                if not isinstance(rv, BagVal):
                    raise InternalError("inserted rows are not a bag")
                for row, _ in rv.items:
                    if not isinstance(row, RowVal):
                        raise InternalError("sequenced insert of a non-row")
                    if not row.start < row.end:
                        raise Aborted(
                            f"sequenced insert into {name}: row period "
                            f"[{row.start}, {row.end}) is empty"
                        )
                self.tables[name] = bag_union(bag, rv)
                return unit
            case SeqUpdate(binder, m, ps, pe, pred, sets):
                self.bump("EV-SeqUpdate")
                name, ts, bag = self.target(m, env)
                a_start = self.time_of(self.pure(ps, env))
                a_end = self.time_of(self.pure(pe, env))
                if not a_start < a_end:
                    raise Aborted(
                        f"sequenced update on {name}: applicability period "
                        f"[{a_start}, {a_end}) is empty"
                    )
                out = []
                for row, n in bag.items:
                    case, pieces = self.overlap_update(
                        row, a_start, a_end, pred, sets, binder, env
                    )
                    self.bump(f"EV-SeqUpdate-case{case}")
                    out.extend((p, n) for p in pieces)
                self.tables[name] = BagVal(tuple(out))
                return unit
            case SeqDelete(binder, m, ps, pe, pred):
                self.bump("EV-SeqDelete")
                name, ts, bag = self.target(m, env)
                a_start = self.time_of(self.pure(ps, env))
                a_end = self.time_of(self.pure(pe, env))
                if not a_start < a_end:
                    raise Aborted(
                        f"sequenced delete on {name}: applicability period "
                        f"[{a_start}, {a_end}) is empty"
                    )
                out = []
                for row, n in bag.items:
                    case, pieces = self.overlap_delete(row, a_start, a_end, pred, binder, env)
                    self.bump(f"EV-SeqDelete-case{case}")
                    out.extend((p, n) for p in pieces)
                self.tables[name] = BagVal(tuple(out))
                return unit
            case NonseqUpdate(binder, m, pred, sets, vf, vt):
                self.bump("EV-NonseqUpdate")
                name, ts, bag = self.target(m, env)
                out = []
                for row, n in bag.items:
                    scope = {**env, binder: row}
                    if not self.pure_bool(pred, scope):
                        out.append((row, n))
                        continue
                    new_start = self.time_of(self.pure(vf, scope))
                    new_end = self.time_of(self.pure(vt, scope))
                    if not new_start < new_end:
                        raise Aborted(
                            f"nonsequenced update on {name}: new period "
                            f"[{new_start}, {new_end}) is empty"
                        )
                    vals = [(l, self.pure(e, scope)) for l, e in sets]
                    out.append((RowVal(record_with(row.data, vals), new_start, new_end), n))
                self.tables[name] = BagVal(tuple(out))
                return unit
            case NonseqDelete(binder, m, pred):
                self.bump("EV-NonseqDelete")
                name, ts, bag = self.target(m, env)
                out = [
                    (row, n)
                    for row, n in bag.items
                    if not self.pure_bool(pred, {**env, binder: row})
                ]
                self.tables[name] = BagVal(tuple(out))
                return unit
        raise InternalError(f"modify: {type(t).__name__}")

    # The five overlap cases of a sequenced modification.  Cases 1 to 4
    # require the applicability period to genuinely overlap the row's period;
    # a touching or disjoint pair, like a false predicate, is case 5.

    def overlap_update(self, row, a_start, a_end, pred, sets, binder, env):
        if not isinstance(row, RowVal):
            raise InternalError("sequenced update over a non-row")
        s, e = row.start, row.end
        scope = {**env, binder: row.data}
        if not (a_start < e and a_end > s and self.pure_bool(pred, scope)):
            return 5, [row]
        vals = [(l, self.pure(x, scope)) for l, x in sets]
        w = record_with(row.data, vals)
        if a_start <= s and a_end >= e:
            return 1, [RowVal(w, s, e)]
        if a_start <= s:  # a_end < e
            return 2, [RowVal(w, s, a_end), RowVal(row.data, a_end, e)]
        if a_end < e:  # a_start > s
            return 3, [
                RowVal(row.data, s, a_start),
                RowVal(w, a_start, a_end),
                RowVal(row.data, a_end, e),
            ]
        return 4, [RowVal(row.data, s, a_start), RowVal(w, a_start, e)]

    def overlap_delete(self, row, a_start, a_end, pred, binder, env):
        if not isinstance(row, RowVal):
            raise InternalError("sequenced delete over a non-row")
        s, e = row.start, row.end
        scope = {**env, binder: row.data}
        if not (a_start < e and a_end > s and self.pure_bool(pred, scope)):
            return 5, [row]
        if a_start <= s and a_end >= e:
            return 1, []
        if a_start <= s:
            return 2, [RowVal(row.data, a_end, e)]
        if a_end < e:
            return 3, [RowVal(row.data, s, a_start), RowVal(row.data, a_end, e)]
        return 4, [RowVal(row.data, s, a_start)]

    # Current modifications evaluated directly: a row wholly in the future
    # (t <= start) is rewritten or removed outright, a straddling row is
    # split at the clock, and a row wholly in the past is untouched.

    def current_update_direct(self, t: Update, name, bag, env) -> None:
        self.bump("CV-Update")
        out = []
        for row, n in bag.items:
            d = row.data
            scope = {**env, t.binder: d}
            if self.pure_bool(t.pred, scope):
                vals = [(l, self.pure(e, scope)) for l, e in t.sets]
                if self.clock <= row.start:
                    self.bump("CV-Update-future")
                    out.append((RowVal(record_with(d, vals), row.start, row.end), n))
                    continue
                if row.start < self.clock < row.end:
                    self.bump("CV-Update-split")
                    out.append((RowVal(d, row.start, self.clock), n))
                    out.append((RowVal(record_with(d, vals), self.clock, row.end), n))
                    continue
            self.bump("CV-Update-skip")
            out.append((row, n))
        self.tables[name] = BagVal(tuple(out))

    def current_delete_direct(self, t: Delete, name, bag, env) -> None:
        self.bump("CV-Delete")
        out = []
        for row, n in bag.items:
            if self.pure_bool(t.pred, {**env, t.binder: row.data}):
                if self.clock <= row.start:
                    self.bump("CV-Delete-future")
                    continue
                if row.start < self.clock < row.end:
                    self.bump("CV-Delete-split")
                    out.append((RowVal(row.data, row.start, self.clock), n))
                    continue
            self.bump("CV-Delete-skip")
            out.append((row, n))
        self.tables[name] = BagVal(tuple(out))


def apply_prim(op: str, vals) -> Value:
    def scalar(v):
        if not isinstance(v, ConstVal):
            raise InternalError(f"operator {op} on a non-scalar")
        return v

    match op:
        case "==" | "!=":
            a, b = (scalar(v) for v in vals)
            eq = (a.tag, a.value) == (b.tag, b.value)
            return ConstVal("bool", eq if op == "==" else not eq)
        case "<" | "<=" | ">" | ">=":
            a, b = (scalar(v) for v in vals)
            if a.tag != b.tag:
                raise InternalError("comparison across base types")
            x, y = a.value, b.value
            res = {"<": x < y, "<=": x <= y, ">": x > y, ">=": x >= y}[op]
            return ConstVal("bool", res)
        case "&&":
            a, b = (scalar(v) for v in vals)
            return ConstVal("bool", bool(a.value) and bool(b.value))
        case "||":
            a, b = (scalar(v) for v in vals)
            return ConstVal("bool", bool(a.value) or bool(b.value))
        case "!":
            (a,) = (scalar(v) for v in vals)
            return ConstVal("bool", not a.value)
        case "+" | "-" | "*":
            a, b = (scalar(v) for v in vals)
            if a.tag == "time":
                return ConstVal("time", time_shift(a.value, b.value, op))
            x = {"+": a.value + b.value, "-": a.value - b.value, "*": a.value * b.value}[op]
            return ConstVal("int", x)
        case "greatest":
            return ConstVal("time", max(scalar(v).value for v in vals))
        case "least":
            return ConstVal("time", min(scalar(v).value for v in vals))
    raise InternalError(f"unknown operator {op}")


def time_shift(t: int, n: int, op: str) -> int:
    """Time plus or minus an integer; the sentinels absorb arithmetic."""
    if t in (FOREVER, BEGINNING_OF_TIME):
        return t
    x = t + n if op == "+" else t - n
    return max(BEGINNING_OF_TIME, min(FOREVER, x))


# -- entry points


def _run(ctx: EvalContext, db: Database, term: Term) -> Tuple[Value, Database]:
    return Evaluator(ctx, db).run(term)


def eval_linq(
    schema: Schema, db: Database, term: Term, clock: int, coverage=None
) -> Tuple[Value, Database]:
    ctx = EvalContext(schema, clock, "linq", coverage=coverage)
    return _run(ctx, db, term)


def _history_consistent(db: Database, schema: Schema) -> bool:
    # Closing a row in the instant it appeared leaves an empty [c, c)
    # period; those belong to a legal history, inverted periods do not.
    for name, bag in db.tables.items():
        if schema.table(name).dialect == "plain":
            continue
        for row, _ in bag.items:
            if not row.start <= row.end:
                return False
    return True


def eval_tlinq(
    schema: Schema, db: Database, term: Term, clock: int, coverage=None
) -> Tuple[Value, Database]:
    if not _history_consistent(db, schema):
        raise InternalError("transaction-time evaluation over an ill-formed database")
    if max_timestamp(db, schema) > clock:
        raise InternalError("clock precedes the history's latest timestamp")
    ctx = EvalContext(schema, clock, "t", coverage=coverage)
    return _run(ctx, db, term)


def eval_vlinq(
    schema: Schema,
    db: Database,
    term: Term,
    clock: int,
    current: str = "desugar",
    coverage=None,
) -> Tuple[Value, Database]:
    if current not in ("desugar", "direct"):
        raise ValueError(f"bad current-op mode {current!r}")
    if not well_formed(db, schema):
        raise InternalError("valid-time evaluation over an ill-formed database")
    ctx = EvalContext(schema, clock, "v", current=current, coverage=coverage)
    return _run(ctx, db, term)


def eval_vlinq_current_direct(
    schema: Schema, db: Database, term: Term, clock: int, coverage=None
) -> Tuple[Value, Database]:
    return eval_vlinq(schema, db, term, clock, current="direct", coverage=coverage)
