"""Source-to-source translations from the temporal dialects into the core.

A temporal program runs against tables of period-stamped rows.  Its flat
image runs against the flattened schema (flatten_schema / flatten_db), where
each temporal table has become a plain table with two extra time columns.
translate_t and translate_v rewrite a typechecked program of the respective
dialect into a core program over that image, such that evaluating the output
over the flattened database matches evaluating the input directly.  The
differential tests check exactly that, statement by statement.

The two representations of a stamped row:

  nested   (data = (l1 = v1, ...), start = s, end = e)   row values, accessors
  flat     (l1 = v1, ..., <sCol> = s, <eCol> = e)        table rows

The nested labels are fixed; the flat period column names come from the
table's schema entry.  Translated code moves between the shapes by eta
expansion and projection, never by a runtime conversion.

Current-time operations of the valid-time dialect are handled one of two
ways, selected by the `current` argument: rewritten into sequenced ones over
[now, forever) first (desugar_current), or compiled straight to core update
and delete statements.  Both routes are kept because agreement between them
is itself a tested property.
"""

from .model import (
    FOREVER,
    TIME,
    Apply,
    Bag,
    BagVal,
    Base,
    ClosureVal,
    Const,
    ConstVal,
    DataOf,
    Delete,
    EmptyBag,
    EndOf,
    For,
    FreshNames,
    Fun,
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
    Table,
    TableRef,
    TableRefVal,
    TableSchema,
    Term,
    TqError,
    TransactionRow,
    Type,
    Update,
    ValidRow,
    Var,
    alpha_rename,
    eta_expand,
    let_,
    map_subterms,
    seq_,
    subterms,
    term_size,
)


class TranslateError(TqError):
    pass


CURRENT_MODES = ("desugar", "direct")


# ---------------------------------------------------------------------------
# Types and values


def translate_type(t: Type, period=("start", "end")) -> Type:
    """The flat image of a type.  Stamped-row types become nested records
    with fields data/start/end; a temporal table type becomes a plain table
    over its row extended with the two period columns.  Those columns are
    named per table in a schema; the `period` argument supplies the names
    when translating a bare type."""
    match t:
        case Base():
            return t
        case Bag(elem):
            return Bag(translate_type(elem, period))
        case Record(fields):
            return Record(tuple((l, translate_type(a, period)) for l, a in fields))
        case Fun(arg, res, effects):
            return Fun(translate_type(arg, period), translate_type(res, period), effects)
        case TransactionRow(data) | ValidRow(data):
            return Record(
                (
                    ("data", translate_type(data, period)),
                    ("start", TIME),
                    ("end", TIME),
                )
            )
        case Table(_, "plain"):
            return t
        case Table(row, _):
            s, e = period
            flat = translate_type(row, period)
            return Table(Record(flat.fields + ((s, TIME), (e, TIME))), "plain")
    raise InternalError(f"translate_type: {type(t).__name__}")


def translate_value(v):
    """The flat image of a result value: stamped rows become nested records,
    containers map pointwise, constants are untouched."""
    match v:
        case ConstVal():
            return v
        case TableRefVal():
            return v
        case RowVal(data, start, end):
            return RecordVal(
                (
                    ("data", translate_value(data)),
                    ("start", ConstVal("time", start)),
                    ("end", ConstVal("time", end)),
                )
            )
        case RecordVal(fields):
            return RecordVal(tuple((l, translate_value(x)) for l, x in fields))
        case BagVal(items):
            return BagVal(tuple((translate_value(x), n) for x, n in items))
        case ClosureVal():
            raise TranslateError("function values have no flat counterpart")
    raise InternalError(f"translate_value: {type(v).__name__}")


# ---------------------------------------------------------------------------
# Current-operation desugaring


def desugar_current(term: Term) -> Term:
    """Rewrite the plain write forms, which in the valid-time dialect are the
    current-time operations, into their sequenced equivalents over the period
    [now, forever).  Annotations are preserved; a term with no plain writes
    comes back unchanged."""
    names = FreshNames(all_names(term))

    def go(t: Term) -> Term:
        match t:
            case Insert(m, rows):
                x = names.fresh("x")
                stamped = For(
                    x,
                    go(rows),
                    SingletonBag(RowLit(Var(x), Now(), Const("time", FOREVER))),
                )
                return SeqInsert(go(m), stamped, row_type=t.row_type, span=t.span)
            case Update(binder, m, pred, sets):
                return SeqUpdate(
                    binder,
                    go(m),
                    Now(),
                    Const("time", FOREVER),
                    go(pred),
                    tuple((l, go(n)) for l, n in sets),
                    row_type=t.row_type,
                    span=t.span,
                )
            case Delete(binder, m, pred):
                return SeqDelete(
                    binder,
                    go(m),
                    Now(),
                    Const("time", FOREVER),
                    go(pred),
                    row_type=t.row_type,
                    span=t.span,
                )
            case _:
                return map_subterms(t, go)

    return go(term)


# ---------------------------------------------------------------------------
# Term translation


def all_names(t: Term) -> set:
    """Every variable name occurring in the term, bound or free."""
    names = set()
    for s in subterms(t):
        if isinstance(s, Var):
            names.add(s.name)
        if isinstance(s, Lambda):
            names.add(s.param)
        b = getattr(s, "binder", None)
        if b is not None:
            names.add(b)
    return names


def _conj(*parts):
    out = parts[0]
    for p in parts[1:]:
        out = PrimOp("&&", (out, p))
    return out


def _restrict(var: str, labels, body: Term) -> Term:
    """Rebind var to just its data fields inside body: (fun x -> body)
    applied to the eta expansion of x.  The lambda deliberately shadows the
    outer flat-row binder of the same name."""
    return Apply(Lambda(var, None, body), eta_expand(var, labels))


def _lift(var: str, labels, period, body: Term) -> Term:
    """Rebind var to the nested view of a flat row inside body."""
    s, e = period
    nested = RecordLit(
        (
            ("data", eta_expand(var, labels)),
            ("start", Project(Var(var), s)),
            ("end", Project(Var(var), e)),
        )
    )
    return Apply(Lambda(var, None, body), nested)


def _cmp(op: str, a: Term, b: Term) -> Term:
    return PrimOp(op, (a, b))


class _Translator:
    def __init__(self, schema: Schema, names: FreshNames, dialect: str, current: str):
        self.schema = schema
        self.names = names
        self.dialect = dialect
        self.current = current

    def table_schema(self, m: Term, what: str) -> TableSchema:
        # Period column names live in the schema, so the table operand has
        # to name its table; a computed table would leave them unknown.
        if not isinstance(m, TableRef):
            raise TranslateError(f"{what} must name its table directly")
        return self.schema.table(m.name)

    def labels_of(self, t: Term, what: str):
        if t.row_type is None:
            raise InternalError(f"{what} lacks its row annotation; typecheck first")
        return t.row_type.labels()

    def go(self, t: Term) -> Term:
        match t:
            case DataOf(r):
                return Project(self.go(r), "data")
            case StartOf(r):
                return Project(self.go(r), "start")
            case EndOf(r):
                return Project(self.go(r), "end")
            case RowLit(d, s, e):
                return RecordLit(
                    (("data", self.go(d)), ("start", self.go(s)), ("end", self.go(e)))
                )
            case Get(m) if t.row_type is not None:
                return self.temporal_get(t, m)
            case Insert(m, rows) if t.row_type is not None:
                if self.dialect == "t" or self.current == "direct":
                    return self.stamp_insert(t, m, rows)
                raise InternalError("current insert survived desugaring")
            case Update(binder, m, pred, sets) if t.row_type is not None:
                if self.dialect == "t":
                    return self.t_update(t, binder, m, pred, sets)
                if self.current == "direct":
                    return self.v_current_update(t, binder, m, pred, sets)
                raise InternalError("current update survived desugaring")
            case Delete(binder, m, pred) if t.row_type is not None:
                if self.dialect == "t":
                    return self.t_delete(t, binder, m, pred)
                if self.current == "direct":
                    return self.v_current_delete(t, binder, m, pred)
                raise InternalError("current delete survived desugaring")
            case SeqInsert(m, rows):
                return self.seq_insert(t, m, rows)
            case SeqUpdate(binder, m, ps, pe, pred, sets):
                return self.seq_update(t, binder, m, ps, pe, pred, sets)
            case SeqDelete(binder, m, ps, pe, pred):
                return self.seq_delete(t, binder, m, ps, pe, pred)
            case NonseqUpdate(binder, m, pred, sets, vf, vt):
                return self.nonseq_update(t, binder, m, pred, sets, vf, vt)
            case NonseqDelete(binder, m, pred):
                return self.nonseq_delete(t, binder, m, pred)
            case Insert() | Update() | Delete():
                raise InternalError(
                    f"{type(t).__name__} lacks its row annotation; typecheck first"
                )
            case Join():
                raise TranslateError(
                    "join must go through the query rewrite, not the translation"
                )
            case _:
                return map_subterms(t, self.go)

    # -- reads

    def temporal_get(self, t: Term, m: Term) -> Term:
        ts = self.table_schema(m, "get")
        s, e = ts.period
        labels = self.labels_of(t, "get")
        x = self.names.fresh("x")
        head = RecordLit(
            (
                ("data", eta_expand(x, labels)),
                ("start", Project(Var(x), s)),
                ("end", Project(Var(x), e)),
            )
        )
        return Query(For(x, Get(self.go(m)), SingletonBag(head)))

    # -- transaction-time writes, and the stamping insert shared with the
    #    valid-time current insert

    def stamp_insert(self, t: Term, m: Term, rows: Term) -> Term:
        ts = self.table_schema(m, "insert")
        s, e = ts.period
        labels = self.labels_of(t, "insert")
        x = self.names.fresh("x")
        rows_v = self.names.fresh("rows")
        head = RecordLit(
            eta_expand(x, labels).fields
            + ((s, Now()), (e, Const("time", FOREVER)))
        )
        build = For(x, self.go(rows), SingletonBag(head))
        return let_(rows_v, build, Insert(self.go(m), Var(rows_v)))

    def t_delete(self, t: Term, binder: str, m: Term, pred: Term) -> Term:
        ts = self.table_schema(m, "delete")
        s, e = ts.period
        labels = self.labels_of(t, "delete")
        cond = _conj(
            _restrict(binder, labels, self.go(pred)),
            _cmp("==", Project(Var(binder), e), Const("time", FOREVER)),
        )
        return Update(binder, self.go(m), cond, ((e, Now()),))

    def t_update(self, t: Term, binder: str, m: Term, pred: Term, sets) -> Term:
        ts = self.table_schema(m, "update")
        s, e = ts.period
        labels = self.labels_of(t, "update")
        tbl = self.names.fresh("tbl")
        aff = self.names.fresh("affected")
        cond = _conj(
            _restrict(binder, labels, self.go(pred)),
            _cmp("==", Project(Var(binder), e), Const("time", FOREVER)),
        )
        set_labels = {l for l, _ in sets}
        head = RecordLit(
            tuple((l, Project(Var(binder), l)) for l in labels if l not in set_labels)
            + tuple((l, _restrict(binder, labels, self.go(n))) for l, n in sets)
            + ((s, Now()), (e, Const("time", FOREVER)))
        )
        affected = Query(
            For(binder, Get(Var(tbl)), If(cond, SingletonBag(head), EmptyBag()))
        )
        close = Update(binder, Var(tbl), cond, ((e, Now()),))
        return let_(
            tbl,
            self.go(m),
            let_(aff, affected, seq_(close, Insert(Var(tbl), Var(aff)))),
        )

    # -- valid-time sequenced writes

    def seq_insert(self, t: Term, m: Term, rows: Term) -> Term:
        ts = self.table_schema(m, "sequenced insert")
        s, e = ts.period
        labels = self.labels_of(t, "sequenced insert")
        tbl = self.names.fresh("tbl")
        rows_v = self.names.fresh("rows")
        x = self.names.fresh("x")
        head = RecordLit(
            tuple((l, Project(Project(Var(x), "data"), l)) for l in labels)
            + ((s, Project(Var(x), "start")), (e, Project(Var(x), "end")))
        )
        build = For(x, self.go(rows), SingletonBag(head))
        return let_(
            tbl, self.go(m), let_(rows_v, build, Insert(Var(tbl), Var(rows_v)))
        )

    def remainder_rows(self, binder, tbl, pred_f, cut, labels, ts, side) -> Term:
        """The query computing row fragments outside the applicability
        period: left of the cut for `start`, right of it for `end`."""
        s, e = ts.period
        cond = _conj(
            pred_f,
            _cmp("<", Project(Var(binder), s), Var(cut)),
            _cmp(">", Project(Var(binder), e), Var(cut)),
        )
        if side == "start":
            stamp = ((s, Project(Var(binder), s)), (e, Var(cut)))
        else:
            stamp = ((s, Var(cut)), (e, Project(Var(binder), e)))
        head = RecordLit(eta_expand(binder, labels).fields + stamp)
        return Query(
            For(binder, Get(Var(tbl)), If(cond, SingletonBag(head), EmptyBag()))
        )

    def seq_update(self, t, binder, m, ps, pe, pred, sets) -> Term:
        ts = self.table_schema(m, "sequenced update")
        s, e = ts.period
        labels = self.labels_of(t, "sequenced update")
        tbl = self.names.fresh("tbl")
        a_start = self.names.fresh("aStart")
        a_end = self.names.fresh("aEnd")
        l_rows = self.names.fresh("lRows")
        r_rows = self.names.fresh("rRows")
        pred_f = _restrict(binder, labels, self.go(pred))
        overlap = _conj(
            pred_f,
            _cmp("<", Project(Var(binder), s), Var(a_end)),
            _cmp(">", Project(Var(binder), e), Var(a_start)),
        )
        sets_f = tuple(
            (l, _restrict(binder, labels, self.go(n))) for l, n in sets
        ) + (
            (s, PrimOp("greatest", (Project(Var(binder), s), Var(a_start)))),
            (e, PrimOp("least", (Project(Var(binder), e), Var(a_end)))),
        )
        update = Update(binder, Var(tbl), overlap, sets_f)
        body = seq_(
            seq_(update, Insert(Var(tbl), Var(l_rows))),
            Insert(Var(tbl), Var(r_rows)),
        )
        return let_(
            tbl,
            self.go(m),
            let_(
                a_start,
                self.go(ps),
                let_(
                    a_end,
                    self.go(pe),
                    let_(
                        l_rows,
                        self.remainder_rows(binder, tbl, pred_f, a_start, labels, ts, "start"),
                        let_(
                            r_rows,
                            self.remainder_rows(binder, tbl, pred_f, a_end, labels, ts, "end"),
                            body,
                        ),
                    ),
                ),
            ),
        )

    def seq_delete(self, t, binder, m, ps, pe, pred) -> Term:
        ts = self.table_schema(m, "sequenced delete")
        s, e = ts.period
        labels = self.labels_of(t, "sequenced delete")
        tbl = self.names.fresh("tbl")
        a_start = self.names.fresh("aStart")
        a_end = self.names.fresh("aEnd")
        l_rows = self.names.fresh("lRows")
        r_rows = self.names.fresh("rRows")
        pred_f = _restrict(binder, labels, self.go(pred))
        overlap = _conj(
            pred_f,
            _cmp("<", Project(Var(binder), s), Var(a_end)),
            _cmp(">", Project(Var(binder), e), Var(a_start)),
        )
        body = seq_(
            seq_(Delete(binder, Var(tbl), overlap), Insert(Var(tbl), Var(l_rows))),
            Insert(Var(tbl), Var(r_rows)),
        )
        return let_(
            tbl,
            self.go(m),
            let_(
                a_start,
                self.go(ps),
                let_(
                    a_end,
                    self.go(pe),
                    let_(
                        l_rows,
                        self.remainder_rows(binder, tbl, pred_f, a_start, labels, ts, "start"),
                        let_(
                            r_rows,
                            self.remainder_rows(binder, tbl, pred_f, a_end, labels, ts, "end"),
                            body,
                        ),
                    ),
                ),
            ),
        )

    # -- valid-time nonsequenced writes

    def nonseq_update(self, t, binder, m, pred, sets, vf, vt) -> Term:
        ts = self.table_schema(m, "nonsequenced update")
        s, e = ts.period
        labels = self.labels_of(t, "nonsequenced update")
        period = ts.period

        def lifted(body):
            return _lift(binder, labels, period, body)

        sets_f = tuple((l, lifted(self.go(n))) for l, n in sets) + (
            (s, lifted(self.go(vf))),
            (e, lifted(self.go(vt))),
        )
        return Update(binder, self.go(m), lifted(self.go(pred)), sets_f)

    def nonseq_delete(self, t, binder, m, pred) -> Term:
        ts = self.table_schema(m, "nonsequenced delete")
        labels = self.labels_of(t, "nonsequenced delete")
        return Delete(
            binder, self.go(m), _lift(binder, labels, ts.period, self.go(pred))
        )

    # -- valid-time current writes, compiled directly

    def v_current_delete(self, t, binder, m, pred) -> Term:
        ts = self.table_schema(m, "delete")
        s, e = ts.period
        labels = self.labels_of(t, "delete")
        tbl = self.names.fresh("tbl")
        time = self.names.fresh("time")
        pred_f = _restrict(binder, labels, self.go(pred))
        # Close off rows already running at the current time, then drop the
        # ones that start at or after it.  A row starting exactly now is
        # first closed into an empty period and then removed by the delete;
        # the degenerate row never survives the statement.
        close = Update(
            binder,
            Var(tbl),
            _conj(
                pred_f,
                _cmp("<=", Project(Var(binder), s), Var(time)),
                _cmp(">", Project(Var(binder), e), Var(time)),
            ),
            ((e, Var(time)),),
        )
        drop = Delete(
            binder,
            Var(tbl),
            _conj(pred_f, _cmp(">=", Project(Var(binder), s), Var(time))),
        )
        return let_(tbl, self.go(m), let_(time, Now(), seq_(close, drop)))

    def v_current_update(self, t, binder, m, pred, sets) -> Term:
        ts = self.table_schema(m, "update")
        s, e = ts.period
        labels = self.labels_of(t, "update")
        tbl = self.names.fresh("tbl")
        time = self.names.fresh("time")
        aff = self.names.fresh("affected")
        pred_f = _restrict(binder, labels, self.go(pred))
        sets_f = tuple((l, _restrict(binder, labels, self.go(n))) for l, n in sets)
        set_labels = {l for l, _ in sets}
        # Rows straddling the current time split: the affected query builds
        # their updated tails before the close-off rewrites them.  Rows that
        # start at or after the current time are rewritten in place, so the
        # affected query must not pick them up too.
        straddle = _conj(
            pred_f,
            _cmp("<", Project(Var(binder), s), Var(time)),
            _cmp(">", Project(Var(binder), e), Var(time)),
        )
        head = RecordLit(
            tuple((l, Project(Var(binder), l)) for l in labels if l not in set_labels)
            + sets_f
            + ((s, Var(time)), (e, Project(Var(binder), e)))
        )
        affected = Query(
            For(binder, Get(Var(tbl)), If(straddle, SingletonBag(head), EmptyBag()))
        )
        close = Update(binder, Var(tbl), straddle, ((e, Var(time)),))
        future = Update(
            binder,
            Var(tbl),
            _conj(pred_f, _cmp(">=", Project(Var(binder), s), Var(time))),
            sets_f,
        )
        return let_(
            tbl,
            self.go(m),
            let_(
                time,
                Now(),
                let_(
                    aff,
                    affected,
                    seq_(seq_(close, future), Insert(Var(tbl), Var(aff))),
                ),
            ),
        )


def flat_wf_violations(db, schema: Schema):
    """Rows of the flat database whose period columns hold an empty or
    inverted interval, judged against the original schema: only tables that
    were temporal there carry a period.  This is the flat-side counterpart
    of wf_violations, used to decide whether a translated statement must be
    rolled back where the direct semantics aborted."""
    bad = []
    for name, ts in sorted(schema.tables.items()):
        if ts.dialect == "plain":
            continue
        s, e = ts.period
        for row, _ in db.table(name).items:
            if not isinstance(row, RecordVal):
                raise InternalError(f"flat table {name!r} holds a non-record value")
            start = row.get(s)
            end = row.get(e)
            if not start.value < end.value:
                bad.append((name, row))
    return bad


def _max_columns(schema: Schema) -> int:
    return max((len(ts.columns) for ts in schema.tables.values()), default=0)


def _translate(schema: Schema, term: Term, dialect: str, current: str) -> Term:
    names = FreshNames(all_names(term))
    renamed = alpha_rename(term, names)
    out = _Translator(schema, names, dialect, current).go(renamed)
    # Every clause emits a constant number of nodes per source node and per
    # schema column, and copies pure subterms at most three times.
    bound = 40 * (_max_columns(schema) + 4) * (term_size(term) + 1)
    assert term_size(out) <= bound, "translation output exceeded its size bound"
    return out


def translate_t(schema: Schema, term: Term) -> Term:
    """Rewrite a typechecked transaction-time program into a core program
    over the flattened schema.  The term must carry its row annotations
    (typecheck.annotate)."""
    return _translate(schema, term, "t", "desugar")


def translate_v(schema: Schema, term: Term, current: str = "desugar") -> Term:
    """Rewrite a typechecked valid-time program into a core program over the
    flattened schema.  `current` selects how current-time operations travel:
    through the sequenced forms ("desugar") or straight to core statements
    ("direct")."""
    if current not in CURRENT_MODES:
        raise TranslateError(f"unknown current-operation mode {current!r}")
    if current == "desugar":
        term = desugar_current(term)
    return _translate(schema, term, "v", current)
