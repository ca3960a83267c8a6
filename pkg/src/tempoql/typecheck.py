"""Type-and-effect checker for all three dialects.

The same syntax-directed rules serve three language levels, selected by the
dialect argument:

- "linq": the plain query core; only plain tables, no temporal constructs.
- "t": transaction time; get yields stamped rows, the plain modification
  forms work on transaction tables and the evaluator stamps the periods.
- "v": valid time; get yields stamped rows, plain modifications are the
  current forms, plus the sequenced and nonsequenced forms and join.

Effects are sets drawn from {read, write}.  Query and join bodies must be
read-only and of query type; predicates, set clauses and inserted rows must
be pure.  Checking is deterministic and monomorphic: lambda parameters carry
ascriptions except when the lambda is immediately applied (the let sugar),
where the argument supplies the type.

infer returns the type and effect set; annotate returns the same term with
the row record type filled in on every temporal table operation, which the
translators and evaluators rely on.
"""

from __future__ import annotations

import dataclasses as dc
from typing import Optional, Tuple

from .model import (
    BASE_TYPES,
    BOOL,
    Apply,
    Bag,
    BagUnion,
    Base,
    Const,
    DataOf,
    Delete,
    EmptyBag,
    EndOf,
    For,
    Fun,
    Get,
    If,
    Insert,
    Join,
    Lambda,
    NonseqDelete,
    NonseqUpdate,
    Now,
    PrimOp,
    Project,
    Query,
    Record,
    RecordLit,
    RowLit,
    Schema,
    SeqDelete,
    SeqInsert,
    SeqUpdate,
    SingletonBag,
    Span,
    StartOf,
    Table,
    TableRef,
    Term,
    TqError,
    TransactionRow,
    Type,
    Update,
    ValidRow,
    Var,
    EFF_READ,
    EFF_WRITE,
    PURE,
    TIME,
)

DIALECTS = ("linq", "t", "v")

ERROR_KINDS = (
    "mismatch",
    "unknown-var",
    "unknown-table",
    "effect-violation",
    "not-query-type",
    "not-flat",
    "label-error",
)


class TypeCheckError(TqError):
    def __init__(self, kind: str, message: str, span: Optional[Span] = None):
        assert kind in ERROR_KINDS, kind
        self.kind = kind
        self.message = message
        self.span = span
        where = f"{span}: " if span is not None else ""
        super().__init__(f"{where}{message} [{kind}]")


def is_query_type(t: Type) -> bool:
    """Base types, records of query types, bags of query types.

    A period-stamped row of a query-typed payload also counts: it is a
    (data, start, end) record in all but name, and queries over temporal
    tables return bags of them.
    """
    match t:
        case Base(name):
            return name in BASE_TYPES
        case Record(fields):
            return all(is_query_type(ft) for _, ft in fields)
        case Bag(elem):
            return is_query_type(elem)
        case TransactionRow(data) | ValidRow(data):
            return is_query_type(data)
    return False


def is_flat_type(t: Type) -> bool:
    """Base, or a record of base types: the shapes a join row may take."""
    match t:
        case Base(name):
            return name in BASE_TYPES
        case Record(fields):
            return all(isinstance(ft, Base) for _, ft in fields)
    return False


def fmt_effects(eff: frozenset) -> str:
    return "{" + ",".join(sorted(eff)) + "}"


# Comparison operators work at every base type; booleans order false < true,
# strings lexicographically.
_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")


def prim_signature(op: str, arg_types, span) -> Type:
    def bad():
        shown = ", ".join(str(a) for a in arg_types)
        raise TypeCheckError("mismatch", f"{op} does not apply to ({shown})", span)

    if op in _CMP_OPS:
        if len(arg_types) != 2 or arg_types[0] != arg_types[1]:
            bad()
        if not isinstance(arg_types[0], Base):
            bad()
        return BOOL
    if op in ("&&", "||"):
        if arg_types != [BOOL, BOOL]:
            bad()
        return BOOL
    if op == "!":
        if arg_types != [BOOL]:
            bad()
        return BOOL
    if op in ("+", "-"):
        if arg_types == [Base("int"), Base("int")]:
            return Base("int")
        if arg_types == [TIME, Base("int")]:
            return TIME
        bad()
    if op == "*":
        if arg_types == [Base("int"), Base("int")]:
            return Base("int")
        bad()
    if op in ("greatest", "least"):
        if not arg_types or any(a != TIME for a in arg_types):
            bad()
        return TIME
    raise TypeCheckError("mismatch", f"unknown operator {op}", span)


class Checker:
    def __init__(self, schema: Schema, dialect: str):
        if dialect not in DIALECTS:
            raise ValueError(f"bad dialect {dialect!r}")
        self.schema = schema
        self.dialect = dialect

    # Every rule returns (type, effects, annotated term).

    def infer(self, env: dict, t: Term):
        match t:
            case Var(name):
                if name not in env:
                    raise TypeCheckError("unknown-var", f"unbound variable {name}", t.span)
                return env[name], PURE, t
            case Const(tag, _):
                return Base(tag), PURE, t
            case TableRef(name):
                if name not in self.schema.tables:
                    raise TypeCheckError("unknown-table", f"unknown table {name}", t.span)
                ts = self.schema.tables[name]
                return Table(ts.row_type(), ts.dialect), PURE, t
            case Now():
                return TIME, PURE, t
            case Lambda(param, pt, body):
                if pt is None:
                    raise TypeCheckError(
                        "mismatch",
                        f"parameter {param} needs a type ascription",
                        t.span,
                    )
                bt, beff, body2 = self.infer({**env, param: pt}, body)
                return Fun(pt, bt, beff), PURE, dc.replace(t, body=body2)
            case Apply(Lambda(param, None, body), arg):
                # let sugar: the bound term fixes the parameter type
                at, aeff, arg2 = self.infer(env, arg)
                bt, beff, body2 = self.infer({**env, param: at}, body)
                fn2 = dc.replace(t.fn, body=body2)
                return bt, aeff | beff, dc.replace(t, fn=fn2, arg=arg2)
            case Apply(fn, arg):
                ft, feff, fn2 = self.infer(env, fn)
                if not isinstance(ft, Fun):
                    raise TypeCheckError("mismatch", f"applied a non-function of type {ft}", t.span)
                at, aeff, arg2 = self.infer(env, arg)
                if at != ft.arg:
                    raise TypeCheckError(
                        "mismatch", f"argument has type {at}, expected {ft.arg}", t.span
                    )
                return ft.res, feff | aeff | ft.effects, dc.replace(t, fn=fn2, arg=arg2)
            case PrimOp(op, args):
                eff = PURE
                tys, args2 = [], []
                for a in args:
                    ty, e, a2 = self.infer(env, a)
                    tys.append(ty)
                    eff |= e
                    args2.append(a2)
                res = prim_signature(op, tys, t.span)
                return res, eff, dc.replace(t, args=tuple(args2))
            case If(cond, then, other):
                ct, ceff, cond2 = self.infer(env, cond)
                if ct != BOOL:
                    raise TypeCheckError("mismatch", f"condition has type {ct}, expected bool", t.span)
                tt, teff, then2, ot, oeff, other2 = self._infer_peers(env, then, other, t.span)
                if tt != ot:
                    raise TypeCheckError(
                        "mismatch", f"branches differ: {tt} vs {ot}", t.span
                    )
                return tt, ceff | teff | oeff, dc.replace(t, cond=cond2, then=then2, other=other2)
            case EmptyBag(None):
                raise TypeCheckError(
                    "mismatch",
                    "cannot infer the element type of an empty bag here; ascribe it with [|: T |]",
                    t.span,
                )
            case EmptyBag(et):
                return Bag(et), PURE, t
            case SingletonBag(e):
                ty, eff, e2 = self.infer(env, e)
                return Bag(ty), eff, dc.replace(t, elem=e2)
            case BagUnion(a, b):
                at, aeff, a2, bt, beff, b2 = self._infer_peers(env, a, b, t.span)
                if at != bt:
                    raise TypeCheckError("mismatch", f"union of {at} and {bt}", t.span)
                if not isinstance(at, Bag):
                    raise TypeCheckError("mismatch", f"union of non-bags: {at}", t.span)
                return at, aeff | beff, dc.replace(t, left=a2, right=b2)
            case For(binder, src, body):
                st, seff, src2 = self.infer(env, src)
                if not isinstance(st, Bag):
                    raise TypeCheckError("mismatch", f"comprehension source has type {st}", t.span)
                bt, beff, body2 = self.infer({**env, binder: st.elem}, body)
                if not isinstance(bt, Bag):
                    raise TypeCheckError("mismatch", f"comprehension body has type {bt}", t.span)
                return bt, seff | beff, dc.replace(t, source=src2, body=body2)
            case RecordLit(fields):
                eff = PURE
                tys, fields2 = [], []
                for l, e in fields:
                    ty, ef, e2 = self.infer(env, e)
                    tys.append((l, ty))
                    eff |= ef
                    fields2.append((l, e2))
                return Record(tuple(tys)), eff, dc.replace(t, fields=tuple(fields2))
            case Project(rec, label):
                rt, reff, rec2 = self.infer(env, rec)
                if not isinstance(rt, Record):
                    raise TypeCheckError("mismatch", f"projection from non-record type {rt}", t.span)
                ft = rt.field_type(label)
                if ft is None:
                    raise TypeCheckError("label-error", f"no field {label} in {rt}", t.span)
                return ft, reff, dc.replace(t, rec=rec2)
            case Query(body):
                bt, beff, body2 = self.infer(env, body)
                if not beff <= EFF_READ:
                    raise TypeCheckError(
                        "effect-violation",
                        f"query body has effects {fmt_effects(beff)}, only read is allowed",
                        t.span,
                    )
                if not (isinstance(bt, Bag) and is_query_type(bt.elem)):
                    raise TypeCheckError(
                        "not-query-type", f"query body has type {bt}", t.span
                    )
                return bt, beff, dc.replace(t, body=body2)
            case Join(body):
                if self.dialect == "linq":
                    raise TypeCheckError("mismatch", "join needs a temporal dialect", t.span)
                bt, beff, body2 = self.infer(env, body)
                if not beff <= EFF_READ:
                    raise TypeCheckError(
                        "effect-violation",
                        f"join body has effects {fmt_effects(beff)}, only read is allowed",
                        t.span,
                    )
                if not (isinstance(bt, Bag) and is_flat_type(bt.elem)):
                    raise TypeCheckError(
                        "not-flat",
                        f"join body must produce flat rows, got {bt}",
                        t.span,
                    )
                wrap = ValidRow if self.dialect == "v" else TransactionRow
                return Bag(wrap(bt.elem)), beff, dc.replace(t, body=body2)
            case Get(m):
                tt, teff, m2 = self.infer(env, m)
                if not isinstance(tt, Table):
                    raise TypeCheckError("mismatch", f"get from non-table type {tt}", t.span)
                eff = EFF_READ | teff
                if tt.dialect == "plain":
                    return Bag(tt.row), eff, dc.replace(t, table=m2)
                if tt.dialect == "transaction" and self.dialect == "t":
                    return Bag(TransactionRow(tt.row)), eff, dc.replace(t, table=m2, row_type=tt.row)
                if tt.dialect == "valid" and self.dialect == "v":
                    return Bag(ValidRow(tt.row)), eff, dc.replace(t, table=m2, row_type=tt.row)
                raise TypeCheckError(
                    "mismatch",
                    f"{tt.dialect} table read in {self.dialect} dialect",
                    t.span,
                )
            case DataOf(r) | StartOf(r) | EndOf(r):
                if self.dialect == "linq":
                    raise TypeCheckError("mismatch", "row accessors need a temporal dialect", t.span)
                rt, reff, r2 = self.infer(env, r)
                want = TransactionRow if self.dialect == "t" else ValidRow
                if not isinstance(rt, want):
                    raise TypeCheckError(
                        "mismatch", f"row accessor applied to type {rt}", t.span
                    )
                res = rt.data if isinstance(t, DataOf) else TIME
                return res, reff, dc.replace(t, row=r2)
            case RowLit(d, s, e):
                if self.dialect != "v":
                    raise TypeCheckError(
                        "mismatch", "stamped row literals belong to the valid-time dialect", t.span
                    )
                dt, deff, d2 = self.infer(env, d)
                st, seff, s2 = self.infer(env, s)
                et, eeff, e2 = self.infer(env, e)
                if st != TIME or et != TIME:
                    raise TypeCheckError("mismatch", "row period bounds must be times", t.span)
                return ValidRow(dt), deff | seff | eeff, dc.replace(t, data=d2, start=s2, end=e2)
            case Insert(m, rows):
                return self._check_insert(env, t, m, rows)
            case Update(binder, m, pred, sets):
                return self._check_update(env, t, m, binder, pred, sets)
            case Delete(binder, m, pred):
                return self._check_delete(env, t, m, binder, pred)
            case SeqInsert(m, rows):
                tt, teff, m2 = self._temporal_table(env, m, "valid", t.span)
                rt, reff, rows2 = self.infer(env, rows)
                self._require_pure(reff, "inserted rows", t.span)
                if rt != Bag(ValidRow(tt.row)):
                    raise TypeCheckError(
                        "mismatch",
                        f"sequenced insert rows have type {rt}, expected {Bag(ValidRow(tt.row))}",
                        t.span,
                    )
                return Record(()), EFF_WRITE | teff, dc.replace(
                    t, table=m2, rows=rows2, row_type=tt.row
                )
            case SeqUpdate(binder, m, ps, pe, pred, sets):
                tt, teff, m2 = self._temporal_table(env, m, "valid", t.span)
                ps2 = self._check_time_arg(env, ps, "applicability start", t.span)
                pe2 = self._check_time_arg(env, pe, "applicability end", t.span)
                pred2 = self._check_pred(env, binder, tt.row, pred, t.span)
                sets2 = self._check_sets(env, binder, tt.row, sets, t.span)
                return Record(()), EFF_WRITE | teff, dc.replace(
                    t, table=m2, pa_start=ps2, pa_end=pe2, pred=pred2, sets=sets2,
                    row_type=tt.row,
                )
            case SeqDelete(binder, m, ps, pe, pred):
                tt, teff, m2 = self._temporal_table(env, m, "valid", t.span)
                ps2 = self._check_time_arg(env, ps, "applicability start", t.span)
                pe2 = self._check_time_arg(env, pe, "applicability end", t.span)
                pred2 = self._check_pred(env, binder, tt.row, pred, t.span)
                return Record(()), EFF_WRITE | teff, dc.replace(
                    t, table=m2, pa_start=ps2, pa_end=pe2, pred=pred2, row_type=tt.row
                )
            case NonseqUpdate(binder, m, pred, sets, vf, vt):
                tt, teff, m2 = self._temporal_table(env, m, "valid", t.span)
                bound = ValidRow(tt.row)
                pred2 = self._check_pred(env, binder, bound, pred, t.span)
                sets2 = self._check_sets(env, binder, tt.row, sets, t.span, bound=bound)
                vf2 = self._check_time_arg(env, vf, "valid-from", t.span, binder, bound)
                vt2 = self._check_time_arg(env, vt, "valid-to", t.span, binder, bound)
                return Record(()), EFF_WRITE | teff, dc.replace(
                    t, table=m2, pred=pred2, sets=sets2, valid_from=vf2, valid_to=vt2,
                    row_type=tt.row,
                )
            case NonseqDelete(binder, m, pred):
                tt, teff, m2 = self._temporal_table(env, m, "valid", t.span)
                pred2 = self._check_pred(env, binder, ValidRow(tt.row), pred, t.span)
                return Record(()), EFF_WRITE | teff, dc.replace(
                    t, table=m2, pred=pred2, row_type=tt.row
                )
        raise TypeCheckError("mismatch", f"cannot type {type(t).__name__}", getattr(t, "span", None))

    # -- helpers

    def _infer_peers(self, env, a, b, span):
        """Infer two terms that must share a type, letting a bare empty bag
        adopt its peer's element type."""
        bare_a = isinstance(a, EmptyBag) and a.elem_type is None
        bare_b = isinstance(b, EmptyBag) and b.elem_type is None
        if bare_a and not bare_b:
            bt, beff, b2 = self.infer(env, b)
            if not isinstance(bt, Bag):
                raise TypeCheckError("mismatch", f"empty bag beside type {bt}", span)
            return bt, PURE, a, bt, beff, b2
        if bare_b and not bare_a:
            at, aeff, a2 = self.infer(env, a)
            if not isinstance(at, Bag):
                raise TypeCheckError("mismatch", f"empty bag beside type {at}", span)
            return at, aeff, a2, at, PURE, b
        at, aeff, a2 = self.infer(env, a)
        bt, beff, b2 = self.infer(env, b)
        return at, aeff, a2, bt, beff, b2

    def _require_pure(self, eff, what, span):
        if eff != PURE:
            raise TypeCheckError(
                "effect-violation", f"{what} must be pure, has {fmt_effects(eff)}", span
            )

    def _table_for_dialect(self) -> str:
        return {"linq": "plain", "t": "transaction", "v": "valid"}[self.dialect]

    def _temporal_table(self, env, m, want_dialect, span):
        tt, teff, m2 = self.infer(env, m)
        if not isinstance(tt, Table):
            raise TypeCheckError("mismatch", f"expected a table, got {tt}", span)
        if tt.dialect != want_dialect:
            raise TypeCheckError(
                "mismatch",
                f"operation needs a {want_dialect} table, got a {tt.dialect} one",
                span,
            )
        if want_dialect == "valid" and self.dialect != "v":
            raise TypeCheckError(
                "mismatch", "sequenced forms belong to the valid-time dialect", span
            )
        return tt, teff, m2

    def _check_time_arg(self, env, e, what, span, binder=None, bound=None):
        scope = env if binder is None else {**env, binder: bound}
        ty, eff, e2 = self.infer(scope, e)
        self._require_pure(eff, what, span)
        if ty != TIME:
            raise TypeCheckError("mismatch", f"{what} has type {ty}, expected time", span)
        return e2

    def _check_pred(self, env, binder, bound, pred, span):
        ty, eff, pred2 = self.infer({**env, binder: bound}, pred)
        self._require_pure(eff, "predicate", span)
        if ty != BOOL:
            raise TypeCheckError("mismatch", f"predicate has type {ty}, expected bool", span)
        return pred2

    def _check_sets(self, env, binder, row: Record, sets, span, bound=None):
        bound = row if bound is None else bound
        out = []
        for label, e in sets:
            want = row.field_type(label)
            if want is None:
                raise TypeCheckError("label-error", f"no column {label} to set", span)
            ty, eff, e2 = self.infer({**env, binder: bound}, e)
            self._require_pure(eff, f"set clause for {label}", span)
            if ty != want:
                raise TypeCheckError(
                    "mismatch", f"set {label} to type {ty}, column has type {want}", span
                )
            out.append((label, e2))
        return tuple(out)

    def _check_insert(self, env, t, m, rows):
        want = self._table_for_dialect()
        tt, teff, m2 = self.infer(env, m)
        if not isinstance(tt, Table):
            raise TypeCheckError("mismatch", f"insert into non-table type {tt}", t.span)
        if tt.dialect != want:
            raise TypeCheckError(
                "mismatch",
                f"insert needs a {want} table in this dialect, got a {tt.dialect} one",
                t.span,
            )
        rt, reff, rows2 = self.infer(env, rows)
        self._require_pure(reff, "inserted rows", t.span)
        if rt != Bag(tt.row):
            raise TypeCheckError(
                "mismatch", f"inserted rows have type {rt}, expected {Bag(tt.row)}", t.span
            )
        ann = tt.row if want != "plain" else None
        return Record(()), EFF_WRITE | teff, dc.replace(t, table=m2, rows=rows2, row_type=ann)

    def _check_update(self, env, t, m, binder, pred, sets):
        want = self._table_for_dialect()
        tt, teff, m2 = self.infer(env, m)
        if not isinstance(tt, Table) or tt.dialect != want:
            got = tt.dialect if isinstance(tt, Table) else tt
            raise TypeCheckError(
                "mismatch", f"update needs a {want} table in this dialect, got {got}", t.span
            )
        pred2 = self._check_pred(env, binder, tt.row, pred, t.span)
        sets2 = self._check_sets(env, binder, tt.row, sets, t.span)
        ann = tt.row if want != "plain" else None
        return Record(()), EFF_WRITE | teff, dc.replace(
            t, table=m2, pred=pred2, sets=sets2, row_type=ann
        )

    def _check_delete(self, env, t, m, binder, pred):
        want = self._table_for_dialect()
        tt, teff, m2 = self.infer(env, m)
        if not isinstance(tt, Table) or tt.dialect != want:
            got = tt.dialect if isinstance(tt, Table) else tt
            raise TypeCheckError(
                "mismatch", f"delete needs a {want} table in this dialect, got {got}", t.span
            )
        pred2 = self._check_pred(env, binder, tt.row, pred, t.span)
        ann = tt.row if want != "plain" else None
        return Record(()), EFF_WRITE | teff, dc.replace(t, table=m2, pred=pred2, row_type=ann)


def infer(schema: Schema, env: dict, term: Term, dialect: str) -> Tuple[Type, frozenset]:
    ty, eff, _ = Checker(schema, dialect).infer(dict(env), term)
    return ty, eff


def annotate(schema: Schema, term: Term, dialect: str) -> Term:
    """Typecheck and return the term with row types filled in on temporal
    operations.  Running it twice changes nothing."""
    _, _, t2 = Checker(schema, dialect).infer({}, term)
    return t2


def value_has_type(v, t: Type, schema: Optional[Schema] = None) -> bool:
    """Shallow structural check used by the soundness fuzz."""
    from .model import BagVal, ClosureVal, ConstVal, RecordVal, RowVal, TableRefVal

    match (v, t):
        case (ConstVal(tag, _), Base(name)):
            return tag == name
        case (RecordVal(fields), Record(tfields)):
            if tuple(l for l, _ in fields) != tuple(l for l, _ in tfields):
                return False
            return all(
                value_has_type(fv, ft, schema)
                for (_, fv), (_, ft) in zip(fields, tfields)
            )
        case (BagVal(items), Bag(elem)):
            return all(value_has_type(w, elem, schema) for w, _ in items)
        case (RowVal(data, start, end), TransactionRow(dt) | ValidRow(dt)):
            return (
                isinstance(start, int)
                and isinstance(end, int)
                and value_has_type(data, dt, schema)
            )
        case (ClosureVal(), Fun()):
            return True
        case (TableRefVal(name), Table(row, dialect)):
            if schema is None:
                return True
            ts = schema.tables.get(name)
            return ts is not None and ts.row_type() == row and ts.dialect == dialect
    return False
