"""Randomized differential checks.

Every temporal statement can be run two ways: natively, or through the
flat translation over the flattened database.  The checkers here generate
well-typed programs and databases from seeds, run both routes statement by
statement, and require the outcomes to correspond; the normalizer and the
sequenced join get the same treatment against independent oracles.  A
statement the native semantics aborts is rolled back on both sides and
excluded from value comparison, which mirrors how the flat image would be
driven in practice: nobody applies the translation of a statement whose
dynamic checks already failed.

All checkers are deterministic functions of their seed.
"""

from __future__ import annotations

import dataclasses as dc
import random
from typing import Callable, Optional, Tuple
from xml.etree import ElementTree

from .engine import apply_atomic, period_contains, snapshot_at
from .interp import Aborted, eval_linq, eval_tlinq, eval_vlinq
from .model import (
    BOOL,
    FOREVER,
    INT,
    STRING,
    Apply,
    BagUnion,
    BagVal,
    Const,
    ConstVal,
    Database,
    Delete,
    EmptyBag,
    EndOf,
    For,
    Get,
    If,
    Insert,
    Lambda,
    NonseqDelete,
    NonseqUpdate,
    Now,
    PrimOp,
    Project,
    Query,
    Record,
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
    TableSchema,
    TqError,
    TransactionRow,
    Update,
    ValidRow,
    Var,
    DataOf,
    flatten_db,
    flatten_schema,
    let_,
    map_subterms,
    subterms,
    wf_violations,
)
from .querycomp import eval_nf, normalize, rewrite_sequenced_join, validate_nf
from .surface import parse_term, print_term
from .translate import flat_wf_violations, translate_t, translate_v, translate_value
from .typecheck import annotate

# Timestamps are drawn from a deliberately tiny universe so that generated
# periods collide, touch, and nest instead of floating past each other.
TIME_UNIVERSE = tuple(range(13)) + (FOREVER,)
_FINITE_TIMES = tuple(range(13))
_INT_POOL = tuple(range(7))
_STRING_POOL = ("ada", "byte", "coil", "dual", "eddy")
_EXTRA_COLUMNS = (("b", INT), ("c", STRING), ("d", BOOL))
_TABLE_NAMES = ("p", "q", "r")
_CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")

_EVALUATORS = {"linq": eval_linq, "t": eval_tlinq, "v": eval_vlinq}
_TEMPORAL_KIND = {"linq": "plain", "t": "transaction", "v": "valid"}


@dc.dataclass(frozen=True)
class Verdict:
    """Outcome of one seeded check."""

    seed: int
    ok: bool
    steps: int = 0
    aborted_steps: int = 0
    reason: Optional[str] = None
    program: Optional[str] = None
    step_index: Optional[int] = None


@dc.dataclass(frozen=True)
class Report:
    name: str
    trials: int
    matches: int
    aborted_steps: int
    mismatches: Tuple[Verdict, ...]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def summary(self) -> str:
        return (
            f"{self.name}: {self.trials} trials, {self.matches} match, "
            f"{self.aborted_steps} aborted steps, "
            f"{self.trials - self.matches} mismatches"
        )


# ---------------------------------------------------------------------------
# Generators


def _gen_schema(rng: random.Random, dialect: str) -> Schema:
    kind = _TEMPORAL_KIND[dialect]
    tables = {}
    for name in _TABLE_NAMES[: rng.randint(1, 2)]:
        extras = sorted(rng.sample(_EXTRA_COLUMNS, rng.randint(0, 2)))
        columns = (("a", INT),) + tuple(extras)
        table_kind = kind if kind == "plain" or rng.random() < 0.75 else "plain"
        period = ("start", "end")
        if table_kind != "plain" and rng.random() < 0.25:
            period = ("vs", "ve")
        tables[name] = TableSchema(name, columns, table_kind, period)
    if kind != "plain" and all(ts.dialect == "plain" for ts in tables.values()):
        first = sorted(tables)[0]
        tables[first] = TableSchema(first, tables[first].columns, kind)
    return Schema(tables)


def _const_val(rng: random.Random, base) -> ConstVal:
    if base == INT:
        return ConstVal("int", rng.choice(_INT_POOL))
    if base == BOOL:
        return ConstVal("bool", rng.random() < 0.5)
    return ConstVal("string", rng.choice(_STRING_POOL))


def _gen_period(rng: random.Random, prev_end):
    # Reusing the previous row's end as a start plants the (e, e) adjacent
    # pairs that stress the closed-open comparisons.
    if (
        prev_end is not None
        and prev_end != FOREVER
        and prev_end < _FINITE_TIMES[-1]
        and rng.random() < 0.3
    ):
        s = prev_end
    else:
        s = rng.choice(_FINITE_TIMES[:-1])
    later = [t for t in _FINITE_TIMES if t > s]
    e = FOREVER if rng.random() < 0.35 else rng.choice(later)
    return s, e


def _gen_db(rng: random.Random, schema: Schema, size: int) -> Database:
    tables = {}
    for name in sorted(schema.tables):
        ts = schema.table(name)
        items = []
        prev_end = None
        for _ in range(size):
            data = RecordVal(tuple((l, _const_val(rng, b)) for l, b in ts.columns))
            count = 2 if rng.random() < 0.15 else 1
            if ts.dialect == "plain":
                items.append((data, count))
                continue
            s, e = _gen_period(rng, prev_end)
            prev_end = e
            items.append((RowVal(data, s, e), count))
        tables[name] = BagVal(tuple(items))
    return Database(tables)


def gen_schema(seed: int, dialect: str) -> Schema:
    return _gen_schema(random.Random(f"schema:{dialect}:{seed}"), dialect)


def gen_db(seed: int, schema: Schema, size: int) -> Database:
    """A well-formed random database with `size` rows per table."""
    return _gen_db(random.Random(f"db:{seed}"), schema, size)


def _horizon(db: Database, schema: Schema) -> int:
    """Latest finite timestamp anywhere in the database; a transaction
    clock at or past this point can close any open row without inverting
    its period."""
    best = 0
    for name in sorted(db.tables):
        if schema.table(name).dialect == "plain":
            continue
        for row, _ in db.table(name).items:
            if row.start != FOREVER:
                best = max(best, row.start)
            if row.end != FOREVER:
                best = max(best, row.end)
    return best


class _Gen:
    """Type-directed term generator for one schema and dialect.

    Construction is guided by the schema, so nearly every candidate
    typechecks; `program` retries the rare miss and falls back to a bare
    table read if the dice stay cold."""

    def __init__(self, rng: random.Random, schema: Schema, dialect: str):
        self.rng = rng
        self.schema = schema
        self.dialect = dialect
        self.counter = 0
        self.rejected = 0
        self.attempted = 0
        names = sorted(schema.tables)
        self.tables = [schema.table(n) for n in names]
        self.temporal = [ts for ts in self.tables if ts.dialect != "plain"]

    def fresh(self, stem: str) -> str:
        self.counter += 1
        return f"{stem}{self.counter}"

    def pick_table(self, temporal_only: bool = False) -> TableSchema:
        pool = self.temporal if temporal_only and self.temporal else self.tables
        return self.rng.choice(pool)

    # -- scalar pieces

    def const(self, base) -> Const:
        v = _const_val(self.rng, base)
        return Const(v.tag, v.value)

    def int_operand(self, proj, ts: TableSchema, scope):
        r = self.rng.random()
        int_cols = [l for l, b in ts.columns if b == INT]
        int_vars = [n for n, b in scope if b == INT]
        if r < 0.25 and int_vars:
            return Var(self.rng.choice(int_vars))
        if r < 0.5 and int_cols:
            return proj(self.rng.choice(int_cols))
        return self.const(INT)

    def atom(self, proj, ts: TableSchema, scope):
        label, base = self.rng.choice(ts.columns)
        if base == INT:
            op = self.rng.choice(_CMP_OPS)
            return PrimOp(op, (proj(label), self.int_operand(proj, ts, scope)))
        if base == BOOL:
            if self.rng.random() < 0.5:
                return proj(label)
            return PrimOp("==", (proj(label), self.const(BOOL)))
        op = self.rng.choice(("==", "!="))
        return PrimOp(op, (proj(label), self.const(STRING)))

    def time_atom(self, row_var: str):
        bound = StartOf(Var(row_var)) if self.rng.random() < 0.5 else EndOf(Var(row_var))
        op = self.rng.choice(_CMP_OPS)
        return PrimOp(op, (bound, Const("time", self.rng.choice(TIME_UNIVERSE))))

    def pred(self, proj, ts: TableSchema, scope, row_var: Optional[str] = None):
        r = self.rng.random()
        if r < 0.08:
            return Const("bool", True)
        if r < 0.12:
            return Const("bool", False)
        atoms = [self.atom(proj, ts, scope)]
        if self.rng.random() < 0.4:
            atoms.append(self.atom(proj, ts, scope))
        if row_var is not None and self.rng.random() < 0.5:
            atoms.append(self.time_atom(row_var))
        out = atoms[0]
        for a in atoms[1:]:
            out = PrimOp(self.rng.choice(("&&", "||")), (out, a))
        if self.rng.random() < 0.1:
            out = PrimOp("!", (out,))
        return out

    def sets(self, proj, ts: TableSchema, scope):
        labels = [l for l, _ in ts.columns]
        k = self.rng.randint(0, len(labels)) if self.rng.random() < 0.15 else self.rng.randint(1, len(labels))
        chosen = sorted(self.rng.sample(labels, min(k, len(labels))))
        out = []
        for l in chosen:
            base = dict(ts.columns)[l]
            if base == INT and self.rng.random() < 0.5:
                out.append((l, PrimOp("+", (proj(l), self.const(INT)))))
            else:
                out.append((l, self.const(base)))
        return tuple(out)

    def record(self, ts: TableSchema, scope) -> RecordLit:
        fields = []
        for l, base in ts.columns:
            scoped = [n for n, b in scope if b == base]
            if scoped and self.rng.random() < 0.2:
                fields.append((l, Var(self.rng.choice(scoped))))
            else:
                fields.append((l, self.const(base)))
        return RecordLit(tuple(fields))

    def pa_bounds(self):
        a = self.rng.choice(_FINITE_TIMES)
        if self.rng.random() < 0.12:
            # occasionally inverted or empty, to travel the abort path
            b = self.rng.choice(TIME_UNIVERSE)
        elif self.rng.random() < 0.25:
            b = FOREVER
        else:
            b = self.rng.choice([t for t in _FINITE_TIMES if t > a] or [FOREVER])
        start = Now() if self.rng.random() < 0.1 else Const("time", a)
        return start, Const("time", b)

    def rows(self, ts: TableSchema, scope, stamped: bool):
        if self.rng.random() < 0.08:
            elem = ValidRow(ts.row_type()) if stamped else ts.row_type()
            return EmptyBag(elem_type=elem)
        parts = []
        for _ in range(self.rng.randint(1, 2)):
            data = self.record(ts, scope)
            if stamped:
                a = self.rng.choice(_FINITE_TIMES)
                bad = self.rng.random() < 0.1
                b = self.rng.choice(TIME_UNIVERSE) if bad else self.rng.choice(
                    [t for t in _FINITE_TIMES if t > a] or [FOREVER]
                )
                parts.append(
                    SingletonBag(RowLit(data, Const("time", a), Const("time", b)))
                )
            else:
                parts.append(SingletonBag(data))
        out = parts[0]
        for p in parts[1:]:
            out = BagUnion(out, p)
        return out

    # -- statements

    def modification(self, scope):
        rng = self.rng
        if self.dialect == "v":
            ts = self.pick_table(temporal_only=True)
            x = self.fresh("x")
            data_proj = lambda l: Project(Var(x), l)
            row_proj = lambda l: Project(DataOf(Var(x)), l)
            kind = rng.choice(
                (
                    "insert",
                    "seq_insert",
                    "update",
                    "seq_update",
                    "nonseq_update",
                    "delete",
                    "seq_delete",
                    "nonseq_delete",
                )
            )
            if kind == "insert":
                return Insert(TableRef(ts.name), self.rows(ts, scope, stamped=False))
            if kind == "seq_insert":
                return SeqInsert(TableRef(ts.name), self.rows(ts, scope, stamped=True))
            if kind == "update":
                return Update(
                    x, TableRef(ts.name), self.pred(data_proj, ts, scope),
                    self.sets(data_proj, ts, scope),
                )
            if kind == "seq_update":
                a, b = self.pa_bounds()
                return SeqUpdate(
                    x, TableRef(ts.name), a, b,
                    self.pred(data_proj, ts, scope), self.sets(data_proj, ts, scope),
                )
            if kind == "nonseq_update":
                vf = StartOf(Var(x)) if rng.random() < 0.5 else Const(
                    "time", rng.choice(_FINITE_TIMES)
                )
                if rng.random() < 0.5:
                    vt = EndOf(Var(x))
                elif rng.random() < 0.5:
                    vt = PrimOp("-", (EndOf(Var(x)), Const("int", 1)))
                else:
                    vt = Const("time", rng.choice(TIME_UNIVERSE))
                return NonseqUpdate(
                    x, TableRef(ts.name),
                    self.pred(row_proj, ts, scope, row_var=x),
                    self.sets(row_proj, ts, scope), vf, vt,
                )
            if kind == "delete":
                return Delete(x, TableRef(ts.name), self.pred(data_proj, ts, scope))
            if kind == "seq_delete":
                a, b = self.pa_bounds()
                return SeqDelete(
                    x, TableRef(ts.name), a, b, self.pred(data_proj, ts, scope)
                )
            return NonseqDelete(
                x, TableRef(ts.name), self.pred(row_proj, ts, scope, row_var=x)
            )
        # transaction and plain modifications share their surface forms
        ts = self.pick_table(temporal_only=self.dialect == "t")
        x = self.fresh("x")
        proj = lambda l: Project(Var(x), l)
        kind = rng.choice(("insert", "update", "delete"))
        if kind == "insert":
            return Insert(TableRef(ts.name), self.rows(ts, scope, stamped=False))
        if kind == "update":
            return Update(
                x, TableRef(ts.name), self.pred(proj, ts, scope), self.sets(proj, ts, scope)
            )
        return Delete(x, TableRef(ts.name), self.pred(proj, ts, scope))

    # -- the normalizable query fragment

    def field_proj(self, var: str, ts: TableSchema):
        if ts.dialect == "plain":
            return lambda l: Project(Var(var), l)
        return lambda l: Project(DataOf(Var(var)), l)

    def base_int(self, gens, scope):
        r = self.rng.random()
        int_sources = [
            (v, ts) for v, ts in gens if any(b == INT for _, b in ts.columns)
        ]
        if r < 0.55 and int_sources:
            v, ts = self.rng.choice(int_sources)
            label = self.rng.choice([l for l, b in ts.columns if b == INT])
            term = self.field_proj(v, ts)(label)
            if self.rng.random() < 0.25:
                term = PrimOp(self.rng.choice(("+", "-", "*")), (term, self.const(INT)))
            return term
        scoped = [n for n, b in scope if b == INT]
        if r < 0.7 and scoped:
            return Var(self.rng.choice(scoped))
        return self.const(INT)

    def comp_pred(self, gens, scope):
        atoms = []
        v, ts = self.rng.choice(gens)
        atoms.append(self.atom(self.field_proj(v, ts), ts, scope))
        if len(gens) == 2 and self.rng.random() < 0.7:
            (v1, t1), (v2, t2) = gens
            c1 = [l for l, b in t1.columns if b == INT]
            c2 = [l for l, b in t2.columns if b == INT]
            if c1 and c2:
                atoms.append(
                    PrimOp(
                        "==",
                        (
                            self.field_proj(v1, t1)(self.rng.choice(c1)),
                            self.field_proj(v2, t2)(self.rng.choice(c2)),
                        ),
                    )
                )
        for v, ts in gens:
            if ts.dialect != "plain" and self.rng.random() < 0.3:
                atoms.append(self.time_atom(v))
        out = atoms[0]
        for a in atoms[1:]:
            out = PrimOp("&&", (out, a))
        return out

    def comp(self, scope, sig):
        gens = [(self.fresh("x"), self.pick_table())]
        if self.rng.random() < 0.35:
            gens.append((self.fresh("x"), self.pick_table()))
        if sig == "scalar":
            head = SingletonBag(self.base_int(gens, scope))
        else:
            head = SingletonBag(
                RecordLit(tuple((l, self.base_int(gens, scope)) for l in sig))
            )
        if self.rng.random() < 0.75:
            head = If(self.comp_pred(gens, scope), head, EmptyBag())
        body = head
        for v, ts in reversed(gens):
            body = For(v, Get(TableRef(ts.name)), body)
        return body

    def query(self, depth: int, scope, sig=None):
        rng = self.rng
        if sig is None:
            sig = "scalar" if rng.random() < 0.1 else tuple(
                ("u", "w")[: rng.randint(1, 2)]
            )
        if depth <= 1:
            return self.comp(scope, sig)
        r = rng.random()
        if r < 0.15:
            return BagUnion(
                self.query(depth - 1, scope, sig), self.query(depth - 1, scope, sig)
            )
        if r < 0.25:
            k = self.fresh("k")
            return let_(
                k, self.const(INT), self.query(depth - 1, scope + ((k, INT),), sig)
            )
        if r < 0.35 and sig != "scalar":
            inner = self.query(depth - 1, scope, sig)
            y = self.fresh("y")
            proj = lambda l: Project(Var(y), l)
            head = SingletonBag(RecordLit(tuple((l, proj(l)) for l in sig)))
            guard = PrimOp(
                self.rng.choice(_CMP_OPS), (proj(sig[0]), self.const(INT))
            )
            return For(y, inner, If(guard, head, EmptyBag()))
        if r < 0.45:
            inner = self.comp(scope, sig)
            other = self.comp(scope, sig)
            cond = PrimOp(
                self.rng.choice(("==", "<")), (self.const(INT), self.const(INT))
            )
            return If(cond, inner, other if rng.random() < 0.5 else EmptyBag())
        return self.comp(scope, sig)

    def read(self, depth: int, scope):
        if self.rng.random() < 0.15:
            return Get(TableRef(self.pick_table().name))
        q = self.query(depth, scope)
        return Query(q) if self.rng.random() < 0.5 else q

    # -- whole statements

    def leaf(self):
        r = self.rng.random()
        if r < 0.4:
            return self.const(self.rng.choice((INT, BOOL, STRING)))
        if r < 0.6:
            return Now()
        return Get(TableRef(self.pick_table().name))

    def candidate(self, depth: int, scope=()):
        if depth <= 1:
            return self.leaf()
        r = self.rng.random()
        if r < 0.4:
            return self.modification(scope)
        if r < 0.8:
            return self.read(depth - 1, scope)
        if r < 0.9:
            s = self.fresh("s")
            return let_(
                s, self.candidate(depth - 1, scope), self.candidate(depth - 1, scope)
            )
        k = self.fresh("k")
        return let_(
            k, self.const(INT), self.candidate(depth - 1, scope + ((k, INT),))
        )

    def program(self, depth: int):
        for _ in range(40):
            self.attempted += 1
            cand = self.candidate(depth)
            try:
                annotate(self.schema, cand, self.dialect)
                return cand
            except TqError:
                self.rejected += 1
        name = sorted(self.schema.tables)[0]
        return Query(Get(TableRef(name)))

    def normalizable_query(self, depth: int):
        for _ in range(40):
            self.attempted += 1
            cand = self.query(depth, ())
            try:
                annotate(self.schema, cand, self.dialect)
                return cand
            except TqError:
                self.rejected += 1
        return Get(TableRef(sorted(self.schema.tables)[0]))


def gen_program(seed: int, dialect: str, depth: int, schema: Optional[Schema] = None):
    """A closed well-typed term of the dialect; depth 1 means a leaf read."""
    rng = random.Random(f"prog:{dialect}:{seed}")
    if schema is None:
        schema = _gen_schema(rng, dialect)
    return _Gen(rng, schema, dialect).program(depth)


def gen_query(seed: int, dialect: str = "linq", depth: int = 3, schema: Optional[Schema] = None):
    """A read-only query in the normalizable fragment."""
    rng = random.Random(f"query:{dialect}:{seed}")
    if schema is None:
        schema = _gen_schema(rng, dialect)
    return _Gen(rng, schema, dialect).normalizable_query(depth)


def generation_stats(n: int, dialect: str, seed: int) -> dict:
    """Raw candidate acceptance over n draws, for the rejection-rate bound."""
    rng = random.Random(f"stats:{dialect}:{seed}")
    accepted = 0
    rejected = 0
    for _ in range(n):
        schema = _gen_schema(rng, dialect)
        g = _Gen(rng, schema, dialect)
        cand = g.candidate(rng.randint(1, 4))
        try:
            annotate(schema, cand, dialect)
            accepted += 1
        except TqError:
            rejected += 1
    return {"attempted": n, "accepted": accepted, "rejected": rejected}


# ---------------------------------------------------------------------------
# Shrinking: greedy subterm deletion, re-typechecking every candidate


def _replace_child(t, index: int, new):
    k = -1

    def swap(s):
        nonlocal k
        k += 1
        return new if k == index else s

    return map_subterms(t, swap)


def _local_trims(t):
    match t:
        case Update() | SeqUpdate() | NonseqUpdate():
            for i in range(len(t.sets)):
                yield dc.replace(t, sets=t.sets[:i] + t.sets[i + 1 :])
            yield dc.replace(t, pred=Const("bool", True))
        case Delete() | SeqDelete() | NonseqDelete():
            yield dc.replace(t, pred=Const("bool", True))
        case Insert(_, BagUnion(l, r)) | SeqInsert(_, BagUnion(l, r)):
            yield dc.replace(t, rows=l)
            yield dc.replace(t, rows=r)
        case If(_, a, b):
            yield a
            yield b


def _deletions(t, depth: int = 0):
    subs = list(subterms(t))
    yield from subs
    yield from _local_trims(t)
    if depth < 6:
        for i, s in enumerate(subs):
            for d in _deletions(s, depth + 1):
                yield _replace_child(t, i, d)


def _shrink(term, schema: Schema, dialect: str, fails: Callable, budget: int = 250):
    current = term
    tried = 0
    improved = True
    while improved and tried < budget:
        improved = False
        for cand in _deletions(current):
            tried += 1
            if tried >= budget:
                break
            try:
                annotate(schema, cand, dialect)
            except TqError:
                continue
            if fails(cand):
                current = cand
                improved = True
                break
    return current


# ---------------------------------------------------------------------------
# Theorem checkers: native vs translated, statement by statement


def _step_check(schema, flat_schema, direct_db, flat_db, stmt, clock, dialect, mode):
    """Returns (status, direct_db, flat_db, reason); status is ok, aborted,
    or mismatch.  The statement comes in unannotated."""
    stamped = annotate(schema, stmt, dialect)
    out = apply_atomic(schema, direct_db, stamped, clock, dialect, mode)
    if out.aborted:
        if dialect != "v":
            return ("mismatch", direct_db, flat_db, f"abort outside valid time: {out.reason}")
        if out.db != direct_db:
            return ("mismatch", direct_db, flat_db, "abort left the database changed")
        return ("aborted", direct_db, flat_db, None)
    if dialect == "t":
        flat_stmt = translate_t(schema, stamped)
    else:
        flat_stmt = translate_v(schema, stamped, current=mode)
    try:
        fval, fdb = eval_linq(flat_schema, flat_db, flat_stmt, clock)
    except Aborted as ab:
        return ("mismatch", direct_db, flat_db, f"flat side aborted: {ab.reason}")
    if translate_value(out.value) != fval:
        return ("mismatch", direct_db, flat_db, "values diverge between the two routes")
    if flatten_db(out.db, schema) != fdb:
        return ("mismatch", direct_db, flat_db, "database images diverge")
    if dialect == "v" and flat_wf_violations(fdb, schema):
        return ("mismatch", direct_db, flat_db, "flat image holds an ill-formed period")
    return ("ok", out.db, fdb, None)


def _check_theorem(seed: int, dialect: str, mode: Optional[str] = None) -> Verdict:
    rng = random.Random(f"{dialect}:{seed}")
    schema = _gen_schema(rng, dialect)
    db = _gen_db(rng, schema, rng.randint(0, 4))
    if dialect == "t":
        clock0 = max(_horizon(db, schema), 0)
    else:
        clock0 = rng.randint(3, 9)
    if mode is None:
        mode = "direct" if seed % 2 else "desugar"
    gen = _Gen(rng, schema, dialect)
    nsteps = rng.randint(1, 3)
    flat_schema = flatten_schema(schema)
    direct_db, flat_db = db, flatten_db(db, schema)
    aborted = 0
    for i in range(nsteps):
        stmt = gen.program(rng.randint(1, 4))
        clock = clock0 + i
        status, direct_db, flat_db, reason = _step_check(
            schema, flat_schema, direct_db, flat_db, stmt, clock, dialect, mode
        )
        if status == "aborted":
            aborted += 1
        elif status == "mismatch":
            snapshot = (direct_db, flat_db)

            def still_fails(cand):
                try:
                    st, _, _, _ = _step_check(
                        schema, flat_schema, snapshot[0], snapshot[1],
                        cand, clock, dialect, mode,
                    )
                except TqError:
                    return True
                return st == "mismatch"

            shrunk = _shrink(stmt, schema, dialect, still_fails)
            return Verdict(
                seed, False, steps=i + 1, aborted_steps=aborted, reason=reason,
                program=print_term(shrunk), step_index=i,
            )
    return Verdict(seed, True, steps=nsteps, aborted_steps=aborted)


def check_theorem_t(seed: int) -> Verdict:
    """Transaction-time statements agree with their flat translations."""
    return _check_theorem(seed, "t")


def check_theorem_v(seed: int, current: Optional[str] = None) -> Verdict:
    """Valid-time statements agree with their flat translations; when the
    current mode is not forced, odd seeds run the direct evaluation of
    current modifications and even seeds the desugared one."""
    return _check_theorem(seed, "v", current)


# ---------------------------------------------------------------------------
# The overlap table


_OVERLAP_SCHEMA = Schema({"p": TableSchema("p", (("n", INT),), "valid")})
_OLD = RecordVal((("n", ConstVal("int", 0)),))
_NEW = RecordVal((("n", ConstVal("int", 1)),))

# One row [4, 9) against seven applicability windows: the five genuine
# configurations, then two touching windows that must count as disjoint.
_OVERLAP_CASES = (
    ("covering", 2, 10, ((_NEW, 4, 9),), ()),
    ("left-overlap", 2, 6, ((_NEW, 4, 6), (_OLD, 6, 9)), ((_OLD, 6, 9),)),
    ("interior", 5, 7, ((_OLD, 4, 5), (_NEW, 5, 7), (_OLD, 7, 9)), ((_OLD, 4, 5), (_OLD, 7, 9))),
    ("right-overlap", 5, 10, ((_OLD, 4, 5), (_NEW, 5, 9)), ((_OLD, 4, 5),)),
    ("disjoint", 10, 12, ((_OLD, 4, 9),), ((_OLD, 4, 9),)),
    ("touching-right", 9, 11, ((_OLD, 4, 9),), ((_OLD, 4, 9),)),
    ("touching-left", 1, 4, ((_OLD, 4, 9),), ((_OLD, 4, 9),)),
)


def check_overlap_cases() -> Verdict:
    """Sequenced update and delete against every overlap configuration of
    one stored row, compared with the exact prescribed fragments."""
    failures = []
    for name, a, b, upd_rows, del_rows in _OVERLAP_CASES:
        for op, want in (("update", upd_rows), ("delete", del_rows)):
            db = Database({"p": BagVal.of(RowVal(_OLD, 4, 9))})
            if op == "update":
                stmt = SeqUpdate(
                    "x", TableRef("p"), Const("time", a), Const("time", b),
                    Const("bool", True), (("n", Const("int", 1)),),
                )
            else:
                stmt = SeqDelete(
                    "x", TableRef("p"), Const("time", a), Const("time", b),
                    Const("bool", True),
                )
            stamped = annotate(_OVERLAP_SCHEMA, stmt, "v")
            out = apply_atomic(_OVERLAP_SCHEMA, db, stamped, 0, "v")
            if out.aborted:
                failures.append(f"{name} {op}: aborted ({out.reason})")
                continue
            got = out.db.table("p")
            expect = BagVal.of(*(RowVal(d, s, e) for d, s, e in want))
            if got != expect:
                failures.append(f"{name} {op}: got {got}")
    if failures:
        return Verdict(0, False, steps=len(_OVERLAP_CASES) * 2, reason="; ".join(failures))
    return Verdict(0, True, steps=len(_OVERLAP_CASES) * 2)


# ---------------------------------------------------------------------------
# The join oracle


_JOIN_SOURCE = (
    "for (x <v- l, y <v- r) where data(x).k == data(y).k "
    "[| (a = data(x).a, b = data(y).b) |]"
)


def _join_schema(rng: random.Random) -> Schema:
    period = ("vs", "ve") if rng.random() < 0.4 else ("start", "end")
    return Schema(
        {
            "l": TableSchema("l", (("k", INT), ("a", INT)), "valid"),
            "r": TableSchema("r", (("k", INT), ("b", INT)), "valid", period),
        }
    )


def _join_db(rng: random.Random, schema: Schema, size: int) -> Database:
    tables = {}
    for name in sorted(schema.tables):
        items = []
        prev_end = None
        for _ in range(rng.randint(0, size)):
            value_label = "a" if name == "l" else "b"
            data = RecordVal(
                (
                    ("k", ConstVal("int", rng.randint(0, 2))),
                    (value_label, ConstVal("int", rng.randint(0, 5))),
                )
            )
            s, e = _gen_period(rng, prev_end)
            prev_end = e
            items.append((RowVal(data, s, e), 2 if rng.random() < 0.15 else 1))
        tables[name] = BagVal(tuple(items))
    return Database(tables)


def _plain_join(left: BagVal, right: BagVal) -> BagVal:
    items = []
    for r1, n1 in left.items:
        for r2, n2 in right.items:
            if r1.get("k") == r2.get("k"):
                items.append(
                    (RecordVal((("a", r1.get("a")), ("b", r2.get("b")))), n1 * n2)
                )
    return BagVal(tuple(items))


def _probe_times(db: Database):
    points = set()
    for bag in db.tables.values():
        for row, _ in bag.items:
            points.add(row.start)
            if row.end != FOREVER:
                points.add(row.end)
    points.discard(FOREVER)
    pts = sorted(points)
    probes = set(pts)
    for x, y in zip(pts, pts[1:]):
        if y - x > 1:
            probes.add((x + y) // 2)
    if pts:
        probes.add(pts[0] - 1)
        probes.add(pts[-1] + 1)
    else:
        probes.add(0)
    probes.add(FOREVER)
    return sorted(probes)


def check_join_oracle(seed: int, size: int = 3) -> Verdict:
    """The sequenced join must show, at every instant, exactly the plain
    join of the input snapshots.  The oracle side is a brute-force nested
    loop, sharing nothing with the query pipeline."""
    rng = random.Random(f"join:{seed}")
    schema = _join_schema(rng)
    db = _join_db(rng, schema, size)
    term = parse_term(_JOIN_SOURCE, tables=tuple(schema.tables))
    rewritten = rewrite_sequenced_join(normalize(schema, term))
    joined, _ = eval_vlinq(schema, db, rewritten, 0)
    probes = _probe_times(db)
    for t in probes:
        at_t = BagVal(
            tuple(
                (row.data, n)
                for row, n in joined.items
                if period_contains(row.start, row.end, t)
            )
        )
        want = _plain_join(
            snapshot_at(db, schema, "l", t), snapshot_at(db, schema, "r", t)
        )
        if at_t != want:
            return Verdict(
                seed, False, steps=len(probes),
                reason=f"join snapshot diverges at t={t}",
            )
    return Verdict(seed, True, steps=len(probes))


# ---------------------------------------------------------------------------
# Normalizer agreement


def check_normalizer(seed: int, dbs: int = 5) -> Verdict:
    """normalize must preserve meaning: the input query and its normal form
    evaluate identically over several random databases."""
    dialect = ("linq", "t", "v")[seed % 3]
    rng = random.Random(f"norm:{seed}")
    schema = _gen_schema(rng, dialect)
    gen = _Gen(rng, schema, dialect)
    query = gen.normalizable_query(rng.randint(1, 4))
    try:
        nf = normalize(schema, query)
        validate_nf(schema, nf)
    except TqError as err:
        return Verdict(
            seed, False, reason=f"not normalizable: {err}", program=print_term(query)
        )
    evaluate = _EVALUATORS[dialect]
    for j in range(dbs):
        db = _gen_db(rng, schema, rng.randint(0, 3))
        clock = rng.choice(_FINITE_TIMES)
        if dialect == "t":
            clock = max(clock, _horizon(db, schema))
        direct, _ = evaluate(schema, db, query, clock)
        if eval_nf(schema, db, nf, clock) != direct:
            return Verdict(
                seed, False, steps=j + 1,
                reason=f"normal form diverges on database {j}",
                program=print_term(query),
            )
    return Verdict(seed, True, steps=dbs)


# ---------------------------------------------------------------------------
# Soundness fuzz


def _relaxed_wf(db: Database, schema: Schema) -> Optional[str]:
    # Transaction histories may close a row in the instant it appeared,
    # leaving a degenerate [c, c) period; valid-time rows never may.
    for name in sorted(db.tables):
        ts = schema.table(name)
        if ts.dialect == "plain":
            continue
        for row, _ in db.table(name).items:
            if ts.dialect == "valid" and not row.start < row.end:
                return f"{name}: empty or inverted period [{row.start}, {row.end})"
            if ts.dialect == "transaction" and not row.start <= row.end:
                return f"{name}: inverted period [{row.start}, {row.end})"
    return None


def check_soundness(seed: int) -> Verdict:
    """Well-typed programs never crash the evaluator: the only dynamic
    failure is a declared abort, aborts happen only under valid time, and
    the database stays well formed throughout."""
    dialect = ("linq", "t", "v")[seed % 3]
    rng = random.Random(f"sound:{seed}")
    schema = _gen_schema(rng, dialect)
    db = _gen_db(rng, schema, rng.randint(0, 4))
    clock0 = max(_horizon(db, schema), 0) if dialect == "t" else rng.randint(3, 9)
    mode = "direct" if seed % 2 else "desugar"
    gen = _Gen(rng, schema, dialect)
    nsteps = rng.randint(1, 3)
    aborted = 0
    for i in range(nsteps):
        stmt = gen.program(rng.randint(1, 4))
        stamped = annotate(schema, stmt, dialect)
        try:
            out = apply_atomic(schema, db, stamped, clock0 + i, dialect, mode)
        except Exception as err:  # any leak past Aborted is a soundness bug
            return Verdict(
                seed, False, steps=i + 1, reason=f"evaluator raised {err!r}",
                program=print_term(stmt), step_index=i,
            )
        if out.aborted:
            if dialect != "v":
                return Verdict(
                    seed, False, steps=i + 1,
                    reason=f"abort outside valid time: {out.reason}",
                    program=print_term(stmt), step_index=i,
                )
            if out.db != db:
                return Verdict(
                    seed, False, steps=i + 1, reason="abort changed the database",
                    program=print_term(stmt), step_index=i,
                )
            aborted += 1
            continue
        db = out.db
        bad = _relaxed_wf(db, schema)
        if bad:
            return Verdict(
                seed, False, steps=i + 1, reason=bad,
                program=print_term(stmt), step_index=i,
            )
    return Verdict(seed, True, steps=nsteps, aborted_steps=aborted)


# ---------------------------------------------------------------------------
# Aggregation


def run_many(name: str, check: Callable[[int], Verdict], n: int, seed: int) -> Report:
    matches = 0
    aborted = 0
    mismatches = []
    for i in range(n):
        v = check(seed + i)
        aborted += v.aborted_steps
        if v.ok:
            matches += 1
        elif len(mismatches) < 5:
            mismatches.append(v)
    return Report(name, n, matches, aborted, tuple(mismatches))


def run_theorem_t(n: int, seed: int) -> Report:
    return run_many("theorem-t", check_theorem_t, n, seed)


def run_theorem_v(n: int, seed: int) -> Report:
    return run_many("theorem-v", check_theorem_v, n, seed)


def run_join_oracle(n: int, seed: int) -> Report:
    return run_many("join-oracle", check_join_oracle, n, seed)


def run_normalizer(n: int, seed: int) -> Report:
    return run_many("normalizer", check_normalizer, n, seed)


def run_soundness(n: int, seed: int) -> Report:
    return run_many("soundness", check_soundness, n, seed)


def rule_coverage(n: int, seed: int) -> dict:
    """Evaluation-rule counters over a mixed run of generated programs;
    used to show every rule of the three dialects fires."""
    cov: dict = {}
    for i in range(n):
        dialect = ("linq", "t", "v")[i % 3]
        mode = "direct" if i % 2 else "desugar"
        rng = random.Random(f"cov:{seed}:{i}")
        schema = _gen_schema(rng, dialect)
        db = _gen_db(rng, schema, rng.randint(1, 4))
        clock = max(_horizon(db, schema), 0) if dialect == "t" else rng.randint(3, 9)
        gen = _Gen(rng, schema, dialect)
        stmt = gen.program(rng.randint(2, 5))
        stamped = annotate(schema, stmt, dialect)
        apply_atomic(schema, db, stamped, clock, dialect, mode, coverage=cov)
    return cov


def junit_report(reports) -> str:
    """A small JUnit-shaped XML document, one suite per report."""
    root = ElementTree.Element("testsuites")
    for r in reports:
        suite = ElementTree.SubElement(
            root, "testsuite", name=r.name,
            tests=str(r.trials), failures=str(r.trials - r.matches),
        )
        for m in r.mismatches:
            case = ElementTree.SubElement(suite, "testcase", name=f"seed-{m.seed}")
            failure = ElementTree.SubElement(
                case, "failure", message=m.reason or "mismatch"
            )
            if m.program:
                failure.text = m.program
        if r.ok:
            ElementTree.SubElement(suite, "testcase", name="all-match")
    return ElementTree.tostring(root, encoding="unicode")
