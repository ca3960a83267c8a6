"""Evaluator tests.

Expected tables for the worked scenarios (the to-do history, the HR
employees story, the overlap cases of sequenced modifications) are frozen
from working the modifications by hand against the evaluation rules; row
counts for the overlap cases were cross-checked against the case analysis
in the correctness proof before freezing.
"""

import pytest

from tempoql.interp import (
    Aborted,
    apply_prim,
    eval_linq,
    eval_tlinq,
    eval_vlinq,
    eval_vlinq_current_direct,
)
from tempoql.model import (
    BEGINNING_OF_TIME,
    FOREVER,
    Apply,
    BagVal,
    Const,
    ConstVal,
    Database,
    EmptyBag,
    Get,
    Insert,
    InternalError,
    Lambda,
    PrimOp,
    Query,
    RecordVal,
    RowVal,
    Schema,
    TableRef,
    TableSchema,
    Update,
    BOOL,
    INT,
    STRING,
)
from tempoql.surface import parse_term
from tempoql.typecheck import annotate


def iv(n):
    return ConstVal("int", n)


def sv(s):
    return ConstVal("string", s)


def bv(b):
    return ConstVal("bool", b)


def tv(t):
    return ConstVal("time", t)


def run(schema, db, src, clock, dialect="linq", current="desugar", coverage=None):
    term = annotate(schema, parse_term(src, tables=tuple(schema.tables)), dialect)
    if dialect == "linq":
        return eval_linq(schema, db, term, clock, coverage=coverage)
    if dialect == "t":
        return eval_tlinq(schema, db, term, clock, coverage=coverage)
    return eval_vlinq(schema, db, term, clock, current=current, coverage=coverage)


# -- plain evaluation


P_SCHEMA = Schema({"p": TableSchema("p", (("n", INT),))})
EMPTY_P = Database({"p": BagVal()})


class TestCoreEval:
    def check(self, src, expected, db=None, schema=None):
        v, _ = run(schema or P_SCHEMA, db or EMPTY_P, src, clock=0)
        assert v == expected

    def test_arithmetic_and_comparison(self):
        self.check("1 + 2 * 3", iv(7))
        self.check("(1 + 2) * 3", iv(9))
        self.check("3 - 5", iv(-2))
        self.check('"a" < "b"', bv(True))
        self.check("true && !false", bv(True))
        self.check("false || false", bv(False))
        self.check("1 != 2", bv(True))

    def test_if_let_closures(self):
        self.check("if 1 < 2 then 10 else 20", iv(10))
        self.check("let x = 4 in x * x", iv(16))
        self.check("let f = fun (n: int) -> n + 1 in f(f(2))", iv(4))
        # a closure captures its definition environment
        self.check("let a = 1 in let f = fun (n: int) -> n + a in let a = 100 in f(0)", iv(1))

    def test_bags(self):
        self.check("[| 1, 2 |] ++ [| 2 |]", BagVal(((iv(1), 1), (iv(2), 2))))
        self.check("[|: int |]", BagVal())
        self.check(
            "for (x <- [| 1, 2, 3 |]) where x != 2 [| x * 10 |]",
            BagVal.of(iv(10), iv(30)),
        )
        # body runs once per element occurrence
        self.check("for (x <- [| 7, 7 |]) [| x + 1 |]", BagVal(((iv(8), 2),)))

    def test_records(self):
        self.check("(a = 1, b = true).a", iv(1))
        self.check("let r = (a = 1, b = true) in r.b", bv(True))

    def test_time_arithmetic_saturates(self):
        self.check("@5 + 3", tv(8))
        self.check("@5 - 10", tv(-5))
        self.check("forever + 1", tv(FOREVER))
        self.check("forever - 1", tv(FOREVER))
        self.check("beginning - 5", tv(BEGINNING_OF_TIME))
        self.check("greatest(@3, @9, beginning)", tv(9))
        self.check("least(@3, forever)", tv(3))

    def test_time_shift_clamps_at_sentinels(self):
        near = ConstVal("time", FOREVER - 5)
        out = apply_prim("+", [near, iv(10)])
        assert out == tv(FOREVER)
        out = apply_prim("-", [ConstVal("time", BEGINNING_OF_TIME + 2), iv(10)])
        assert out == tv(BEGINNING_OF_TIME)

    def test_query_and_get(self):
        db = Database({"p": BagVal.of(RecordVal((("n", iv(1)),)), RecordVal((("n", iv(5)),)))})
        v, db2 = run(P_SCHEMA, db, "query (for (x <- get p) where x.n > 2 [| x.n |])", 0)
        assert v == BagVal.of(iv(5))
        assert db2 == db

    def test_plain_modifications(self):
        v, db1 = run(P_SCHEMA, EMPTY_P, "insert p values [| (n = 1), (n = 2) |]", 0)
        assert v == RecordVal(())
        assert db1.tables["p"].total() == 2
        _, db2 = run(P_SCHEMA, db1, "update (x <- p) where x.n == 1 set (n = 9)", 0)
        assert db2.tables["p"] == BagVal.of(
            RecordVal((("n", iv(9)),)), RecordVal((("n", iv(2)),))
        )
        _, db3 = run(P_SCHEMA, db2, "delete (x <- p) where x.n == 9", 0)
        assert db3.tables["p"] == BagVal.of(RecordVal((("n", iv(2)),)))

    def test_for_body_writes_thread_through(self):
        src = "for (x <- [| 1, 2 |]) ((insert p values [| (n = x) |]); [| x |])"
        v, db = run(P_SCHEMA, EMPTY_P, src, 0)
        assert v == BagVal.of(iv(1), iv(2))
        assert db.tables["p"] == BagVal.of(
            RecordVal((("n", iv(1)),)), RecordVal((("n", iv(2)),))
        )

    def test_statement_sequencing(self):
        src = "(insert p values [| (n = 1) |]); query (for (x <- get p) [| x.n |])"
        v, db = run(P_SCHEMA, EMPTY_P, src, 0)
        assert v == BagVal.of(iv(1))
        assert db.tables["p"].total() == 1


# -- transaction time: the to-do history


def task(name, done):
    return RecordVal((("task", sv(name)), ("done", bv(done))))


T1100, T1730, T1800, T1900, T1930 = 660, 1050, 1080, 1140, 1170

TODO_SCHEMA = Schema(
    {"todo": TableSchema("todo", (("task", STRING), ("done", BOOL)), "transaction")}
)

TODO_FINAL = BagVal.of(
    RowVal(task("Go shopping", True), T1100, FOREVER),
    RowVal(task("Cook dinner", False), T1100, T1730),
    RowVal(task("Walk the dog", False), T1100, FOREVER),
    RowVal(task("Cook dinner", True), T1730, FOREVER),
    RowVal(task("Watch TV", False), T1100, T1900),
)


def replay_todo(coverage=None):
    db = Database({"todo": BagVal()})
    steps = [
        (
            T1100,
            'insert todo values [| (task = "Go shopping", done = true), '
            '(task = "Cook dinner", done = false), '
            '(task = "Walk the dog", done = false), '
            '(task = "Watch TV", done = false) |]',
        ),
        (T1730, 'update (x <- todo) where x.task == "Cook dinner" set (done = true)'),
        (T1900, 'delete (x <- todo) where x.task == "Watch TV"'),
    ]
    for clock, src in steps:
        _, db = run(TODO_SCHEMA, db, src, clock, dialect="t", coverage=coverage)
    return db


class TestTransactionTime:
    def test_todo_replay(self):
        db = replay_todo()
        assert db.tables["todo"] == TODO_FINAL

    def snapshot(self, db, at):
        src = (
            "query (for (x <t- todo) "
            f"where start(x) <= @{at} && end(x) > @{at} [| data(x) |])"
        )
        v, _ = run(TODO_SCHEMA, db, src, clock=T1930, dialect="t")
        return v

    def test_snapshots(self):
        db = replay_todo()
        at_1800 = self.snapshot(db, T1800)
        assert at_1800 == BagVal.of(
            task("Go shopping", True),
            task("Cook dinner", True),
            task("Walk the dog", False),
            task("Watch TV", False),
        )
        current = self.snapshot(db, T1930)
        assert current == BagVal.of(
            task("Go shopping", True),
            task("Cook dinner", True),
            task("Walk the dog", False),
        )

    def test_update_skips_closed_rows(self):
        db = replay_todo()
        _, db2 = run(
            TODO_SCHEMA,
            db,
            'update (x <- todo) where x.task == "Watch TV" set (done = true)',
            T1930,
            dialect="t",
        )
        # the only Watch TV row is closed, so nothing changes
        assert db2.tables["todo"] == TODO_FINAL

    def test_clock_must_cover_history(self):
        db = replay_todo()
        with pytest.raises(InternalError):
            run(TODO_SCHEMA, db, "query (for (x <t- todo) [| data(x) |])", T1730, dialect="t")

    def test_same_instant_close_leaves_degenerate_row(self):
        # insert and delete at one clock: the closed-off row has an empty
        # period, which every snapshot ignores
        db = Database({"todo": BagVal()})
        _, db1 = run(
            TODO_SCHEMA, db, 'insert todo values [| (task = "a", done = false) |]', 100, dialect="t"
        )
        _, db2 = run(
            TODO_SCHEMA, db1, 'delete (x <- todo) where x.task == "a"', 100, dialect="t"
        )
        assert db2.tables["todo"] == BagVal.of(RowVal(task("a", False), 100, 100))


# -- valid time: sequenced overlap cases


OV_SCHEMA = Schema(
    {"emp": TableSchema("emp", (("name", STRING), ("salary", INT)), "valid")}
)


def ov_rec(name, salary):
    return RecordVal((("name", sv(name)), ("salary", iv(salary))))


def ov_db(*rows):
    return Database({"emp": BagVal.of(*rows)})


BASE_ROW = RowVal(ov_rec("x", 10), 3, 9)

UPDATE_CASES = [
    # period of applicability, fired case, expected rows
    ((2, 10), 1, [RowVal(ov_rec("x", 99), 3, 9)]),
    ((2, 6), 2, [RowVal(ov_rec("x", 99), 3, 6), RowVal(ov_rec("x", 10), 6, 9)]),
    (
        (5, 7),
        3,
        [
            RowVal(ov_rec("x", 10), 3, 5),
            RowVal(ov_rec("x", 99), 5, 7),
            RowVal(ov_rec("x", 10), 7, 9),
        ],
    ),
    ((5, 10), 4, [RowVal(ov_rec("x", 10), 3, 5), RowVal(ov_rec("x", 99), 5, 9)]),
    ((10, 12), 5, [BASE_ROW]),
    # touching periods do not overlap
    ((1, 3), 5, [BASE_ROW]),
    ((9, 11), 5, [BASE_ROW]),
]

DELETE_CASES = [
    ((2, 10), 1, []),
    ((2, 6), 2, [RowVal(ov_rec("x", 10), 6, 9)]),
    ((5, 7), 3, [RowVal(ov_rec("x", 10), 3, 5), RowVal(ov_rec("x", 10), 7, 9)]),
    ((5, 10), 4, [RowVal(ov_rec("x", 10), 3, 5)]),
    ((10, 12), 5, [BASE_ROW]),
    ((1, 3), 5, [BASE_ROW]),
    ((9, 11), 5, [BASE_ROW]),
]


class TestSequencedOverlap:
    @pytest.mark.parametrize("pa,case,expected", UPDATE_CASES)
    def test_update_cases(self, pa, case, expected):
        cov = {}
        src = (
            f"update sequenced (x <- emp) between @{pa[0]} and @{pa[1]} "
            'where x.name == "x" set (salary = 99)'
        )
        _, db = run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v", coverage=cov)
        assert db.tables["emp"] == BagVal.of(*expected)
        assert cov[f"EV-SeqUpdate-case{case}"] == 1

    @pytest.mark.parametrize("pa,case,expected", DELETE_CASES)
    def test_delete_cases(self, pa, case, expected):
        cov = {}
        src = (
            f"delete sequenced (x <- emp) between @{pa[0]} and @{pa[1]} "
            'where x.name == "x"'
        )
        _, db = run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v", coverage=cov)
        assert db.tables["emp"] == BagVal.of(*expected)
        assert cov[f"EV-SeqDelete-case{case}"] == 1

    def test_false_predicate_is_case_5(self):
        cov = {}
        src = 'update sequenced (x <- emp) between @2 and @10 where x.name == "nobody" set (salary = 0)'
        _, db = run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v", coverage=cov)
        assert db.tables["emp"] == BagVal.of(BASE_ROW)
        assert cov["EV-SeqUpdate-case5"] == 1

    def test_multiplicity_preserved(self):
        db = Database({"emp": BagVal(((BASE_ROW, 2),))})
        src = 'update sequenced (x <- emp) between @5 and @7 where true set (salary = 99)'
        _, out = run(OV_SCHEMA, db, src, 0, dialect="v")
        assert out.tables["emp"] == BagVal(
            (
                (RowVal(ov_rec("x", 10), 3, 5), 2),
                (RowVal(ov_rec("x", 99), 5, 7), 2),
                (RowVal(ov_rec("x", 10), 7, 9), 2),
            )
        )

    def test_empty_pa_aborts(self):
        for src in [
            'update sequenced (x <- emp) between @7 and @7 where true set (salary = 0)',
            'delete sequenced (x <- emp) between @9 and @2 where true',
        ]:
            with pytest.raises(Aborted):
                run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v")

    def test_sequenced_insert(self):
        src = 'insert sequenced emp values [| row((name = "n", salary = 1), @2, @4) |]'
        _, db = run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v")
        assert db.tables["emp"] == BagVal.of(BASE_ROW, RowVal(ov_rec("n", 1), 2, 4))

    def test_sequenced_insert_empty_period_aborts(self):
        for s, e in [(4, 4), (9, 2)]:
            src = f'insert sequenced emp values [| row((name = "n", salary = 1), @{s}, @{e}) |]'
            with pytest.raises(Aborted):
                run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v")

    def test_nonsequenced_update_and_abort(self):
        src = (
            'update nonsequenced (x <- emp) where data(x).name == "x" '
            "set (salary = 11) valid from start(x) to end(x) + 1"
        )
        _, db = run(OV_SCHEMA, ov_db(BASE_ROW), src, 0, dialect="v")
        assert db.tables["emp"] == BagVal.of(RowVal(ov_rec("x", 11), 3, 10))
        bad = (
            "update nonsequenced (x <- emp) where true "
            "set () valid from @9 to start(x)"
        )
        with pytest.raises(Aborted):
            run(OV_SCHEMA, ov_db(BASE_ROW), bad, 0, dialect="v")

    def test_nonsequenced_delete(self):
        db = ov_db(BASE_ROW, RowVal(ov_rec("y", 5), 0, 2))
        src = "delete nonsequenced (x <- emp) where end(x) <= @2"
        _, out = run(OV_SCHEMA, db, src, 0, dialect="v")
        assert out.tables["emp"] == BagVal.of(BASE_ROW)

    def test_abort_leaves_input_untouched(self):
        db = ov_db(BASE_ROW)
        before = db.tables["emp"]
        with pytest.raises(Aborted):
            run(
                OV_SCHEMA,
                db,
                'update sequenced (x <- emp) between @7 and @7 where true set (salary = 0)',
                0,
                dialect="v",
            )
        assert db.tables["emp"] is before


# -- valid time: the HR story


EMP_SCHEMA = Schema(
    {
        "employees": TableSchema(
            "employees",
            (("name", STRING), ("position", STRING), ("salary", INT)),
            "valid",
        )
    }
)


def emp(name, position, salary):
    return RecordVal(
        (("name", sv(name)), ("position", sv(position)), ("salary", iv(salary)))
    )


EMP_S0 = BagVal.of(
    RowVal(emp("Alice", "Lecturer", 40000), 2010, 2018),
    RowVal(emp("Alice", "Senior Lecturer", 50000), 2018, FOREVER),
    RowVal(emp("Bob", "PhD Student", 15000), 2019, 2023),
    RowVal(emp("Charles", "PhD Student", 15000), 2018, 2022),
)

EMP_S4 = BagVal.of(
    RowVal(emp("Alice", "Lecturer", 40000), 2010, 2018),
    RowVal(emp("Alice", "Senior Lecturer", 50000), 2018, 2022),
    RowVal(emp("Bob", "PhD Student", 15000), 2019, 2024),
    RowVal(emp("Charles", "PhD Student", 15000), 2018, 2023),
    RowVal(emp("Dolores", "Professor", 70000), 2022, 2023),
    RowVal(emp("Dolores", "Head of School", 70000), 2023, 2028),
    RowVal(emp("Dolores", "Professor", 70000), 2028, FOREVER),
)

EMP_STEPS = [
    'insert employees values [| (name = "Dolores", position = "Professor", salary = 70000) |]',
    'delete (x <- employees) where x.name == "Alice"',
    'update sequenced (x <- employees) between @2023 and @2028 '
    'where x.name == "Dolores" set (position = "Head of School")',
    'update nonsequenced (x <- employees) where data(x).position == "PhD Student" '
    "set () valid from start(x) to end(x) + 1",
]


def replay_employees(current):
    db = Database({"employees": EMP_S0})
    states = [db.tables["employees"]]
    for src in EMP_STEPS:
        _, db = run(EMP_SCHEMA, db, src, clock=2022, dialect="v", current=current)
        states.append(db.tables["employees"])
    return states


class TestEmployeesStory:
    @pytest.mark.parametrize("current", ["desugar", "direct"])
    def test_full_replay(self, current):
        s0, s1, s2, s3, s4 = replay_employees(current)
        assert s1 == BagVal.of(
            *EMP_S0.expand(), RowVal(emp("Dolores", "Professor", 70000), 2022, FOREVER)
        )
        # current deletion closes only the open row; past rows stay
        assert s2 == BagVal.of(
            RowVal(emp("Alice", "Lecturer", 40000), 2010, 2018),
            RowVal(emp("Alice", "Senior Lecturer", 50000), 2018, 2022),
            RowVal(emp("Bob", "PhD Student", 15000), 2019, 2023),
            RowVal(emp("Charles", "PhD Student", 15000), 2018, 2022),
            RowVal(emp("Dolores", "Professor", 70000), 2022, FOREVER),
        )
        # the applicability period sits strictly inside the open row
        assert s3 == BagVal.of(
            RowVal(emp("Alice", "Lecturer", 40000), 2010, 2018),
            RowVal(emp("Alice", "Senior Lecturer", 50000), 2018, 2022),
            RowVal(emp("Bob", "PhD Student", 15000), 2019, 2023),
            RowVal(emp("Charles", "PhD Student", 15000), 2018, 2022),
            RowVal(emp("Dolores", "Professor", 70000), 2022, 2023),
            RowVal(emp("Dolores", "Head of School", 70000), 2023, 2028),
            RowVal(emp("Dolores", "Professor", 70000), 2028, FOREVER),
        )
        assert s4 == EMP_S4

    def test_both_current_modes_agree(self):
        assert replay_employees("desugar") == replay_employees("direct")


class TestCurrentDirectVsDesugar:
    def row(self, s, e, salary=10):
        return RowVal(ov_rec("x", salary), s, e)

    def both(self, db, src, clock):
        term = annotate(OV_SCHEMA, parse_term(src, tables=("emp",)), "v")
        _, a = eval_vlinq(OV_SCHEMA, db, term, clock, current="desugar")
        _, b = eval_vlinq_current_direct(OV_SCHEMA, db, term, clock)
        assert a == b
        return a

    def test_delete_future_row_vanishes(self):
        db = ov_db(self.row(30, 40))
        out = self.both(db, 'delete (x <- emp) where true', clock=20)
        assert out.tables["emp"] == BagVal()

    def test_delete_straddling_row_splits(self):
        db = ov_db(self.row(10, 40))
        out = self.both(db, 'delete (x <- emp) where true', clock=20)
        assert out.tables["emp"] == BagVal.of(self.row(10, 20))

    def test_delete_past_row_unchanged(self):
        db = ov_db(self.row(1, 5))
        out = self.both(db, 'delete (x <- emp) where true', clock=20)
        assert out.tables["emp"] == BagVal.of(self.row(1, 5))

    def test_delete_row_starting_at_clock_vanishes(self):
        db = ov_db(self.row(20, 40))
        out = self.both(db, 'delete (x <- emp) where true', clock=20)
        assert out.tables["emp"] == BagVal()

    def test_update_future_row_rewritten_in_place(self):
        db = ov_db(self.row(30, 40))
        out = self.both(db, 'update (x <- emp) where true set (salary = 99)', clock=20)
        assert out.tables["emp"] == BagVal.of(self.row(30, 40, salary=99))

    def test_update_straddling_row_splits(self):
        db = ov_db(self.row(10, 40))
        out = self.both(db, 'update (x <- emp) where true set (salary = 99)', clock=20)
        assert out.tables["emp"] == BagVal.of(self.row(10, 20), self.row(20, 40, salary=99))

    def test_update_row_ending_at_clock_unchanged(self):
        db = ov_db(self.row(10, 20))
        out = self.both(db, 'update (x <- emp) where true set (salary = 99)', clock=20)
        assert out.tables["emp"] == BagVal.of(self.row(10, 20))

    def test_current_insert_stamps_now_to_forever(self):
        db = ov_db()
        out = self.both(db, 'insert emp values [| (name = "n", salary = 1) |]', clock=7)
        assert out.tables["emp"] == BagVal.of(RowVal(ov_rec("n", 1), 7, FOREVER))


class TestModeEnforcement:
    def test_write_inside_query_rejected(self):
        term = Query(Insert(TableRef("p"), EmptyBag()))
        with pytest.raises(InternalError):
            eval_linq(P_SCHEMA, EMPTY_P, term, 0)

    def test_get_in_pure_position_rejected(self):
        # a predicate that reads the database violates the pure judgement
        pred = Apply(Lambda("y", None, Const("bool", True)), Get(TableRef("p")))
        term = Update("x", TableRef("p"), pred, ())
        db = Database({"p": BagVal.of(RecordVal((("n", iv(1)),)))})
        with pytest.raises(InternalError):
            eval_linq(P_SCHEMA, db, term, 0)

    def test_apply_non_closure(self):
        with pytest.raises(InternalError):
            eval_linq(P_SCHEMA, EMPTY_P, Apply(Const("int", 1), Const("int", 2)), 0)

    def test_unbound_variable(self):
        from tempoql.model import Var

        with pytest.raises(InternalError):
            eval_linq(P_SCHEMA, EMPTY_P, Var("nope"), 0)

    def test_ill_formed_db_rejected_by_temporal_entry_points(self):
        bad = Database({"emp": BagVal.of(RowVal(ov_rec("x", 1), 9, 3))})
        with pytest.raises(InternalError):
            eval_vlinq(OV_SCHEMA, bad, Const("int", 1), 0)


class TestCoverage:
    def test_rule_counters(self):
        cov = {}
        replay_todo(coverage=cov)
        assert cov["ET-Insert"] == 1
        assert cov["ET-Update"] == 1
        assert cov["ET-Delete"] == 1
        cov2 = {}
        run(
            P_SCHEMA,
            EMPTY_P,
            "query (for (x <- [| 1 |]) [| x |])",
            0,
            coverage=cov2,
        )
        assert cov2["E-Query"] == 1
        assert cov2["E-For"] == 1
        assert cov2["E-Bag"] >= 1
