"""Rewriting read-only query bodies to a flat normal form, stamping
sequenced joins, and emitting SQL.

A normal form is a union of comprehensions.  Each comprehension draws rows
from table gets, filters them with a conjunction of scalar tests, and
builds one flat head per row combination.  That shape maps directly onto
SQL: one SELECT per comprehension, UNION ALL between them.

The sequenced-join rewrite works entirely on this shape.  Every temporal
generator contributes its period: the overlap of all contributing periods
is greatest(starts) to least(ends), a strengthened predicate keeps the
combinations whose overlap is nonempty, and the head is stamped with the
overlap.  Plain generators contribute nothing; with no temporal generators
at all the stamp degenerates to [beginning, forever) and no guard is
needed.

Normalization is a rewrite system driven to a fixpoint, not a one-pass
translation, so that each rule stays small enough to trust by inspection.
The step counter guards against a rule pair cycling; the bound is generous
(10 * size^2) and hitting it is a bug, not an input property.
"""

from __future__ import annotations

import dataclasses as dc
import itertools
import re
from typing import Optional, Tuple, Union

from .interp import apply_prim, eval_linq, eval_tlinq, eval_vlinq
from .model import (
    BEGINNING_OF_TIME,
    FOREVER,
    Apply,
    BagUnion,
    BagVal,
    Const,
    ConstVal,
    Database,
    DataOf,
    EmptyBag,
    EndOf,
    For,
    FreshNames,
    Get,
    If,
    InternalError,
    Join,
    Lambda,
    Now,
    PrimOp,
    Project,
    Query,
    RecordLit,
    RecordVal,
    RowLit,
    RowVal,
    Schema,
    SingletonBag,
    StartOf,
    TableRef,
    TqError,
    Value,
    Var,
    alpha_rename,
    map_subterms,
    subst,
    term_size,
)
from .surface import print_term
from .translate import all_names


class NotNormalizable(TqError):
    """The term falls outside the SQL-translatable fragment."""


class NotFlat(TqError):
    """The sequenced-join rewrite needs a record head to stamp."""


# ---------------------------------------------------------------------------
# Normal-form structure
#
# Base terms mention generator variables only.  A Field names a data column
# whichever representation the generator uses; Boundary names a period
# stamp and is meaningful only on temporal generators.  There is no
# conditional: one surviving outside the predicate is grounds for
# NotNormalizable.


@dc.dataclass(frozen=True)
class Lit:
    tag: str  # int | bool | string | time
    value: object


@dc.dataclass(frozen=True)
class Field:
    var: str
    label: str


@dc.dataclass(frozen=True)
class Boundary:
    var: str
    which: str  # start | end


@dc.dataclass(frozen=True)
class Op:
    op: str
    args: tuple  # of BaseTerm


BaseTerm = Union[Lit, Field, Boundary, Op]


@dc.dataclass(frozen=True)
class RecordHead:
    fields: tuple  # of (label, BaseTerm), sorted by label

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(sorted(self.fields)))


@dc.dataclass(frozen=True)
class Generator:
    var: str
    table: str
    kind: str  # plain | transaction | valid


@dc.dataclass(frozen=True)
class Comprehension:
    generators: Tuple[Generator, ...]
    predicate: Tuple[BaseTerm, ...]  # conjunction; empty means true
    head: Union[BaseTerm, RecordHead]
    # (start, end) base terms once the sequenced-join rewrite has run
    stamp: Optional[tuple] = None


@dc.dataclass(frozen=True)
class NormalForm:
    comprehensions: Tuple[Comprehension, ...]


# ---------------------------------------------------------------------------
# The rewrite system


class _Steps:
    def __init__(self, bound: int):
        self.bound = bound
        self.taken = 0

    def tick(self):
        self.taken += 1
        if self.taken > self.bound:
            raise InternalError(
                f"normalization exceeded its step bound of {self.bound}"
            )


def _bag_shaped(t) -> bool:
    """Structural test for terms that can only denote bags.  Read-only query
    bodies are first-order, so this is a sound stand-in for a type check."""
    match t:
        case EmptyBag() | SingletonBag() | BagUnion() | For() | Get():
            return True
        case If(_, a, b):
            return _bag_shaped(a) or _bag_shaped(b)
        case Query(m):
            return _bag_shaped(m)
        case _:
            return False


def _step(t):
    """One applicable rewrite at the root, or None."""
    match t:
        case Apply(Lambda(x, _, body), arg):
            return subst(body, x, arg)
        case Project(RecordLit(fields), label):
            return dict(fields)[label]
        case DataOf(RowLit(d, _, _)):
            return d
        case StartOf(RowLit(_, s, _)):
            return s
        case EndOf(RowLit(_, _, e)):
            return e
        case Query(m):
            return m
        case For(_, EmptyBag(), _):
            return EmptyBag()
        case For(_, _, EmptyBag()):
            return EmptyBag()
        case For(x, SingletonBag(m), p):
            return subst(p, x, m)
        case For(x, BagUnion(a, b), p):
            return BagUnion(For(x, a, p), For(x, b, p))
        case For(x, For(y, m, n), p):
            return For(y, m, For(x, n, p))
        case For(x, If(c, a, b), p):
            return If(c, For(x, a, p), For(x, b, p))
        case For(x, src, BagUnion(a, b)):
            return BagUnion(For(x, src, a), For(x, src, b))
        case BagUnion(EmptyBag(), m):
            return m
        case BagUnion(m, EmptyBag()):
            return m
        case If(_, EmptyBag(), EmptyBag()):
            return EmptyBag()
        case If(c, If(c2, m, EmptyBag()), EmptyBag()):
            return If(PrimOp("&&", (c, c2)), m, EmptyBag())
        case If(c, For(y, m, n), EmptyBag()):
            return For(y, m, If(c, n, EmptyBag()))
        case If(c, BagUnion(a, b), EmptyBag()):
            return BagUnion(If(c, a, EmptyBag()), If(c, b, EmptyBag()))
        case If(c, m, n) if not isinstance(n, EmptyBag) and (
            _bag_shaped(m) or _bag_shaped(n)
        ):
            return BagUnion(
                If(c, m, EmptyBag()), If(PrimOp("!", (c,)), n, EmptyBag())
            )
        case _:
            return None


def _rewrite_pass(t, steps: _Steps):
    t = map_subterms(t, lambda s: _rewrite_pass(s, steps))
    while True:
        new = _step(t)
        if new is None:
            return t
        steps.tick()
        t = new


def _fixpoint(term, steps: _Steps):
    while True:
        # Substitution duplicates subterms, which would break the global
        # binder freshness the next substitution relies on; re-freshen
        # between passes.
        term = alpha_rename(term, FreshNames(all_names(term)))
        before = steps.taken
        term = _rewrite_pass(term, steps)
        if steps.taken == before:
            return term


# ---------------------------------------------------------------------------
# Reading the normal form off the rewritten term


def _conjuncts(t):
    match t:
        case PrimOp("&&", (a, b)):
            return _conjuncts(a) + _conjuncts(b)
        case Const("bool", True):
            return []
        case _:
            return [t]


class _Reader:
    def __init__(self, schema: Schema, names: FreshNames):
        self.schema = schema
        self.names = names

    def comps(self, t) -> list:
        match t:
            case EmptyBag():
                return []
            case BagUnion(a, b):
                return self.comps(a) + self.comps(b)
            case _:
                return [self.comp(t)]

    def comp(self, t) -> Comprehension:
        gens: list = []
        preds: list = []
        while True:
            match t:
                case For(x, Get(TableRef(tb)), body):
                    gens.append(Generator(x, tb, self.schema.table(tb).dialect))
                    t = body
                case For(_, Get(src), _):
                    raise NotNormalizable(
                        f"generator over a computed table ({type(src).__name__})"
                    )
                case For(_, src, _):
                    raise NotNormalizable(
                        f"generator source is not a table get ({type(src).__name__})"
                    )
                case If(c, body, EmptyBag()):
                    preds.extend(_conjuncts(c))
                    t = body
                case If(_, _, other):
                    raise NotNormalizable(
                        "conditional with a non-empty alternative in bag position"
                    )
                case SingletonBag(h):
                    head = self.head(h, gens)
                    break
                case Get(TableRef(tb)):
                    x = self.names.fresh("x")
                    gens.append(Generator(x, tb, self.schema.table(tb).dialect))
                    head = self.eta(gens[-1])
                    break
                case Var(name):
                    raise NotNormalizable(
                        f"bag-typed variable {name!r} has no table source"
                    )
                case _:
                    raise NotNormalizable(
                        f"{type(t).__name__} cannot close a comprehension"
                    )
        by_var = {g.var: g for g in gens}
        return Comprehension(
            tuple(gens),
            tuple(self.base(p, by_var) for p in preds),
            head,
        )

    def eta(self, gen: Generator) -> RecordHead:
        cols = self.schema.table(gen.table).columns
        return RecordHead(tuple((l, Field(gen.var, l)) for l, _ in cols))

    def head(self, t, gens) -> Union[BaseTerm, RecordHead]:
        by_var = {g.var: g for g in gens}
        match t:
            case RecordLit(fields):
                out = []
                for l, v in fields:
                    if isinstance(v, RecordLit):
                        raise NotNormalizable(f"nested record at head field {l!r}")
                    out.append((l, self.base(v, by_var)))
                return RecordHead(tuple(out))
            case Var(x) if x in by_var and by_var[x].kind == "plain":
                return self.eta(by_var[x])
            case DataOf(Var(x)) if x in by_var and by_var[x].kind != "plain":
                return self.eta(by_var[x])
            case RowLit():
                raise NotNormalizable("stamped rows cannot appear in a flat head")
            case _:
                return self.base(t, by_var)

    def base(self, t, by_var) -> BaseTerm:
        match t:
            case Const(tag, value):
                return Lit(tag, value)
            case Now():
                return Op("now", ())
            case Project(Var(x), l) if x in by_var:
                if by_var[x].kind != "plain":
                    raise NotNormalizable(
                        f"projection from the temporal row {x!r} without data()"
                    )
                return Field(x, l)
            case Project(DataOf(Var(x)), l) if x in by_var:
                return Field(x, l)
            case StartOf(Var(x)) if x in by_var:
                return Boundary(x, "start")
            case EndOf(Var(x)) if x in by_var:
                return Boundary(x, "end")
            case PrimOp(op, args):
                return Op(op, tuple(self.base(a, by_var) for a in args))
            case If():
                raise NotNormalizable("conditional outside the predicate")
            case Var(name):
                if name in by_var:
                    raise NotNormalizable(
                        f"the {by_var[name].kind} row {name!r} cannot appear "
                        "whole in a base position"
                    )
                raise NotNormalizable(f"free variable {name!r} in a base position")
            case _:
                raise NotNormalizable(
                    f"{type(t).__name__} is not a base term"
                )


def _canonical_vars(nf: NormalForm) -> NormalForm:
    """Rename each comprehension's generators to x1, x2, ... so printing and
    SQL aliasing do not depend on machine-chosen names."""

    def rename_base(b, mapping):
        match b:
            case Field(v, l):
                return Field(mapping[v], l)
            case Boundary(v, w):
                return Boundary(mapping[v], w)
            case Op(op, args):
                return Op(op, tuple(rename_base(a, mapping) for a in args))
            case _:
                return b

    out = []
    for comp in nf.comprehensions:
        mapping = {g.var: f"x{i + 1}" for i, g in enumerate(comp.generators)}
        head = comp.head
        if isinstance(head, RecordHead):
            head = RecordHead(
                tuple((l, rename_base(b, mapping)) for l, b in head.fields)
            )
        else:
            head = rename_base(head, mapping)
        out.append(
            Comprehension(
                tuple(
                    Generator(mapping[g.var], g.table, g.kind)
                    for g in comp.generators
                ),
                tuple(rename_base(p, mapping) for p in comp.predicate),
                head,
                None
                if comp.stamp is None
                else tuple(rename_base(b, mapping) for b in comp.stamp),
            )
        )
    return NormalForm(tuple(out))


def normalize(schema: Schema, term) -> NormalForm:
    """Drive the query body to the normal-form grammar.

    The result denotes the same bag as the input on every database; the
    tests check that by evaluating both sides.  Terms outside the fragment
    (free bag variables, conditionals in scalar position, computed table
    operands) raise NotNormalizable.
    """
    steps = _Steps(10 * term_size(term) ** 2)
    t = _fixpoint(term, steps)
    names = FreshNames(all_names(t))
    nf = _canonical_vars(NormalForm(tuple(_Reader(schema, names).comps(t))))
    validate_nf(schema, nf)
    return nf


# ---------------------------------------------------------------------------
# Validation

_BASE_TAGS = ("int", "bool", "string", "time")


def validate_nf(schema: Schema, nf: NormalForm) -> None:
    """Check the structural invariants the grammar promises.  Raises
    NotNormalizable naming the first violation."""

    def check_base(b, by_var, where):
        match b:
            case Lit(tag, _):
                if tag not in _BASE_TAGS:
                    raise NotNormalizable(f"{where}: bad literal tag {tag!r}")
            case Field(v, l):
                g = by_var.get(v)
                if g is None:
                    raise NotNormalizable(f"{where}: unknown variable {v!r}")
                cols = [c for c, _ in schema.table(g.table).columns]
                if l not in cols:
                    raise NotNormalizable(
                        f"{where}: table {g.table!r} has no column {l!r}"
                    )
            case Boundary(v, w):
                g = by_var.get(v)
                if g is None:
                    raise NotNormalizable(f"{where}: unknown variable {v!r}")
                if g.kind == "plain":
                    raise NotNormalizable(
                        f"{where}: period boundary of the plain generator {v!r}"
                    )
                if w not in ("start", "end"):
                    raise NotNormalizable(f"{where}: bad boundary {w!r}")
            case Op(_, args):
                for a in args:
                    check_base(a, by_var, where)
            case _:
                raise NotNormalizable(f"{where}: {type(b).__name__} is not a base term")

    for i, comp in enumerate(nf.comprehensions):
        where = f"comprehension {i + 1}"
        seen = set()
        for g in comp.generators:
            if g.var in seen:
                raise NotNormalizable(f"{where}: duplicate generator {g.var!r}")
            seen.add(g.var)
            if g.kind != schema.table(g.table).dialect:
                raise NotNormalizable(
                    f"{where}: generator {g.var!r} tagged {g.kind} but "
                    f"{g.table!r} is {schema.table(g.table).dialect}"
                )
        by_var = {g.var: g for g in comp.generators}
        for p in comp.predicate:
            check_base(p, by_var, where)
        if isinstance(comp.head, RecordHead):
            labels = [l for l, _ in comp.head.fields]
            if len(labels) != len(set(labels)):
                raise NotNormalizable(f"{where}: duplicate head label")
            for _, b in comp.head.fields:
                check_base(b, by_var, where)
        else:
            check_base(comp.head, by_var, where)
        if comp.stamp is not None:
            if len(comp.stamp) != 2:
                raise NotNormalizable(f"{where}: stamp is not a pair")
            for b in comp.stamp:
                check_base(b, by_var, where)


# ---------------------------------------------------------------------------
# Back to the object language


def _base_to_term(b, by_var):
    match b:
        case Lit(tag, value):
            return Const(tag, value)
        case Field(v, l):
            if by_var[v].kind == "plain":
                return Project(Var(v), l)
            return Project(DataOf(Var(v)), l)
        case Boundary(v, "start"):
            return StartOf(Var(v))
        case Boundary(v, _):
            return EndOf(Var(v))
        case Op("now", ()):
            return Now()
        case Op(op, args):
            return PrimOp(op, tuple(_base_to_term(a, by_var) for a in args))
    raise InternalError(f"not a base term: {b!r}")


def _conj_term(parts):
    out = None
    for p in parts:
        out = p if out is None else PrimOp("&&", (out, p))
    return out


def nf_to_term(nf: NormalForm):
    """Build the object-language term a normal form stands for.  Stamped
    comprehensions produce row literals; the printer gives the canonical
    text of the result."""
    comps = []
    for comp in nf.comprehensions:
        by_var = {g.var: g for g in comp.generators}
        if isinstance(comp.head, RecordHead):
            head = RecordLit(
                tuple((l, _base_to_term(b, by_var)) for l, b in comp.head.fields)
            )
        else:
            head = _base_to_term(comp.head, by_var)
        if comp.stamp is not None:
            s, e = comp.stamp
            head = RowLit(head, _base_to_term(s, by_var), _base_to_term(e, by_var))
        body = SingletonBag(head)
        pred = _conj_term([_base_to_term(p, by_var) for p in comp.predicate])
        if pred is not None:
            body = If(pred, body, EmptyBag())
        for g in reversed(comp.generators):
            body = For(g.var, Get(TableRef(g.table)), body)
        comps.append(body)
    if not comps:
        return EmptyBag()
    out = comps[0]
    for c in comps[1:]:
        out = BagUnion(out, c)
    return out


def print_nf(nf: NormalForm) -> str:
    return print_term(nf_to_term(nf))


# ---------------------------------------------------------------------------
# The sequenced-join rewrite


def stamp_sequenced(nf: NormalForm) -> NormalForm:
    """Stamp every comprehension with the overlap of its temporal
    generators' periods and guard out the empty overlaps."""
    out = []
    for i, comp in enumerate(nf.comprehensions):
        if not isinstance(comp.head, RecordHead):
            raise NotFlat(
                f"comprehension {i + 1}: join heads must be records, "
                f"got a scalar"
            )
        if comp.stamp is not None:
            raise NotFlat(f"comprehension {i + 1} is already stamped")
        temporal = [g for g in comp.generators if g.kind != "plain"]
        if len(temporal) == 1:
            start = Boundary(temporal[0].var, "start")
            end = Boundary(temporal[0].var, "end")
            pred = comp.predicate + (Op("<", (start, end)),)
        elif temporal:
            start = Op("greatest", tuple(Boundary(g.var, "start") for g in temporal))
            end = Op("least", tuple(Boundary(g.var, "end") for g in temporal))
            pred = comp.predicate + (Op("<", (start, end)),)
        else:
            start = Lit("time", BEGINNING_OF_TIME)
            end = Lit("time", FOREVER)
            pred = comp.predicate
        out.append(Comprehension(comp.generators, pred, comp.head, (start, end)))
    return NormalForm(tuple(out))


def rewrite_sequenced_join(nf: NormalForm):
    """The join construct as a term: stamp, then wrap the result in query."""
    return Query(nf_to_term(stamp_sequenced(nf)))


# ---------------------------------------------------------------------------
# Evaluating normal forms directly
#
# This evaluator shares nothing with the interpreter beyond the primitive
# operators, so agreement between the two is evidence, not tautology.


def _eval_base(b, env, by_var, clock):
    match b:
        case Lit(tag, value):
            return ConstVal(tag, value)
        case Field(v, l):
            bound = env[v]
            if isinstance(bound, RowVal):
                return bound.data.get(l)
            return bound.get(l)
        case Boundary(v, w):
            row = env[v]
            return ConstVal("time", row.start if w == "start" else row.end)
        case Op("now", ()):
            return ConstVal("time", clock)
        case Op(op, args):
            return apply_prim(op, [_eval_base(a, env, by_var, clock) for a in args])
    raise InternalError(f"not a base term: {b!r}")


def eval_nf(schema: Schema, db: Database, nf: NormalForm, clock: int) -> BagVal:
    items = []
    for comp in nf.comprehensions:
        by_var = {g.var: g for g in comp.generators}
        sources = [db.table(g.table).items for g in comp.generators]
        for combo in itertools.product(*sources):
            env = {g.var: v for g, (v, _) in zip(comp.generators, combo)}
            count = 1
            for _, n in combo:
                count *= n
            keep = True
            for p in comp.predicate:
                v = _eval_base(p, env, by_var, clock)
                if not (isinstance(v, ConstVal) and v.tag == "bool"):
                    raise InternalError("predicate did not evaluate to a bool")
                if not v.value:
                    keep = False
                    break
            if not keep:
                continue
            if isinstance(comp.head, RecordHead):
                out: Value = RecordVal(
                    tuple(
                        (l, _eval_base(b, env, by_var, clock))
                        for l, b in comp.head.fields
                    )
                )
            else:
                out = _eval_base(comp.head, env, by_var, clock)
            if comp.stamp is not None:
                s = _eval_base(comp.stamp[0], env, by_var, clock)
                e = _eval_base(comp.stamp[1], env, by_var, clock)
                out = RowVal(out, s.value, e.value)
            items.append((out, count))
    return BagVal(tuple(items))


# ---------------------------------------------------------------------------
# Evaluating terms that contain join


def _schema_dialect(schema: Schema) -> str:
    kinds = {ts.dialect for ts in schema.tables.values()}
    if "valid" in kinds:
        return "v"
    if "transaction" in kinds:
        return "t"
    return "linq"


def eval_join_term(schema: Schema, db: Database, term, clock: int) -> Value:
    """Evaluate a read-only term whose join nodes go through the pipeline:
    normalize the body, stamp it, and run the rewritten query."""

    def expand(t):
        t = map_subterms(t, expand)
        if isinstance(t, Join):
            return rewrite_sequenced_join(normalize(schema, t.body))
        return t

    evaluator = {"linq": eval_linq, "t": eval_tlinq, "v": eval_vlinq}[
        _schema_dialect(schema)
    ]
    value, _ = evaluator(schema, db, expand(term), clock)
    return value


# ---------------------------------------------------------------------------
# SQL emission

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# lowercase words that must be quoted to survive as column or table names
_RESERVED = frozenset(
    """all and as by case check cross current_timestamp default distinct else
    end exists false from full group having in inner insert into is join key
    left limit not null on or order outer primary right select set start
    table then true union update user using values when where with""".split()
)

DEFAULT_SQL_CONFIG = {
    "forever": str(FOREVER),
    "beginning": str(BEGINNING_OF_TIME),
}

_SQL_INFIX = {
    "==": "=",
    "!=": "<>",
    "<": "<",
    "<=": "<=",
    ">": ">",
    ">=": ">=",
    "+": "+",
    "-": "-",
    "*": "*",
    "&&": "AND",
    "||": "OR",
}


def _sql_ident(name: str) -> str:
    if name.lower() in _RESERVED or not _IDENT_RE.match(name):
        return '"' + name.replace('"', '""') + '"'
    return name


def _strip_parens(s: str) -> str:
    if not (s.startswith("(") and s.endswith(")")):
        return s
    depth = 0
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and i < len(s) - 1:
                return s
    return s[1:-1]


def emit_sql(schema: Schema, nf: NormalForm, config=None) -> str:
    """Render a normal form as SQL text: deterministic, one SELECT per
    comprehension, UNION ALL between them.  Sentinel timestamps are spelled
    per config ({"forever": ..., "beginning": ...}); the defaults are the
    raw carrier values."""
    cfg = dict(DEFAULT_SQL_CONFIG)
    if config:
        unknown = set(config) - set(DEFAULT_SQL_CONFIG)
        if unknown:
            raise TqError(f"unknown dialect-config keys: {sorted(unknown)}")
        cfg.update(config)

    def render(b, by_var) -> str:
        match b:
            case Lit("int", v):
                return str(v)
            case Lit("bool", v):
                return "TRUE" if v else "FALSE"
            case Lit("string", v):
                return "'" + str(v).replace("'", "''") + "'"
            case Lit("time", v):
                if v == FOREVER:
                    return cfg["forever"]
                if v == BEGINNING_OF_TIME:
                    return cfg["beginning"]
                return str(v)
            case Field(x, l):
                return f"{x}.{_sql_ident(l)}"
            case Boundary(x, w):
                ts = schema.table(by_var[x].table)
                col = ts.period[0] if w == "start" else ts.period[1]
                return f"{x}.{_sql_ident(col)}"
            case Op("now", ()):
                return "CURRENT_TIMESTAMP"
            case Op("!", (a,)):
                return f"(NOT {render(a, by_var)})"
            case Op(op, args) if op in ("greatest", "least"):
                inner = ", ".join(render(a, by_var) for a in args)
                return f"{op.upper()}({inner})"
            case Op(op, (a, b2)) if op in _SQL_INFIX:
                return f"({render(a, by_var)} {_SQL_INFIX[op]} {render(b2, by_var)})"
        raise InternalError(f"cannot render {b!r}")

    blocks = []
    for comp in nf.comprehensions:
        by_var = {g.var: g for g in comp.generators}
        items = []
        if isinstance(comp.head, RecordHead):
            for l, b in comp.head.fields:
                items.append(f"{_strip_parens(render(b, by_var))} AS {_sql_ident(l)}")
        else:
            items.append(_strip_parens(render(comp.head, by_var)))
        if comp.stamp is not None:
            s, e = comp.stamp
            items.append(f"{_strip_parens(render(s, by_var))} AS {_sql_ident('start')}")
            items.append(f"{_strip_parens(render(e, by_var))} AS {_sql_ident('end')}")
        lines = ["SELECT " + ", ".join(items)]
        if comp.generators:
            froms = ", ".join(
                f"{_sql_ident(g.table)} AS {g.var}" for g in comp.generators
            )
            lines.append("FROM " + froms)
        if comp.predicate:
            conj = " AND ".join(
                _strip_parens(render(p, by_var)) for p in comp.predicate
            )
            lines.append("WHERE " + conj)
        blocks.append("\n".join(lines))
    if not blocks:
        return "SELECT NULL WHERE FALSE"
    return "\nUNION ALL\n".join(blocks)
