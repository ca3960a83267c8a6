"""Built-in worked scenarios: a to-do history on the transaction-time axis,
an HR table on the valid-time axis, and three join configurations.

Each scenario carries its frozen expected tables, so a replay both
demonstrates the pipeline and checks the evaluator against recorded
results.  The tests and the `replay` CLI subcommand share these fixtures.
"""

from __future__ import annotations

import dataclasses as dc
from typing import Optional, Tuple

from .engine import Outcome, apply_atomic, snapshot_at
from .model import (
    BOOL,
    FOREVER,
    INT,
    STRING,
    BagVal,
    ConstVal,
    Database,
    RecordVal,
    RowVal,
    Schema,
    TableSchema,
    Value,
)
from .surface import parse_term
from .typecheck import annotate


def _iv(n):
    return ConstVal("int", n)


def _sv(s):
    return ConstVal("string", s)


def _bv(b):
    return ConstVal("bool", b)


def rec(**fields) -> RecordVal:
    out = []
    for k, v in fields.items():
        if isinstance(v, bool):
            out.append((k, _bv(v)))
        elif isinstance(v, int):
            out.append((k, _iv(v)))
        else:
            out.append((k, _sv(v)))
    return RecordVal(tuple(out))


@dc.dataclass(frozen=True)
class Step:
    clock: int
    source: str


@dc.dataclass(frozen=True)
class Scenario:
    """A sequence of modifications applied as one transaction each."""

    name: str
    dialect: str
    schema: Schema
    initial: Database
    steps: Tuple[Step, ...]
    expected: Tuple[Database, ...]  # state after each step
    # (table, instant, expected data records) checks against the final state
    snapshots: Tuple[Tuple[str, int, BagVal], ...] = ()


@dc.dataclass(frozen=True)
class QueryScenario:
    name: str
    dialect: str
    schema: Schema
    db: Database
    source: str
    expected: Value


def replay(sc: Scenario, current: str = "desugar") -> Tuple[Outcome, ...]:
    db = sc.initial
    outs = []
    for step in sc.steps:
        term = annotate(
            sc.schema, parse_term(step.source, tables=tuple(sc.schema.tables)), sc.dialect
        )
        out = apply_atomic(sc.schema, db, term, step.clock, sc.dialect, current)
        outs.append(out)
        db = out.db
    return tuple(outs)


def run_query(qs: QueryScenario, clock: int = 0) -> Value:
    term = annotate(qs.schema, parse_term(qs.source, tables=tuple(qs.schema.tables)), qs.dialect)
    from .model import Join, subterms

    def contains_join(t) -> bool:
        return isinstance(t, Join) or any(contains_join(s) for s in subterms(t))

    if contains_join(term):
        from .querycomp import eval_join_term

        return eval_join_term(qs.schema, qs.db, term, clock)
    out = apply_atomic(qs.schema, qs.db, term, clock, qs.dialect)
    assert not out.aborted, out.reason
    return out.value


# -- the to-do history (transaction time, minutes since midnight)


T1100, T1730, T1800, T1900 = 660, 1050, 1080, 1140

TODO_SCHEMA = Schema(
    {"todo": TableSchema("todo", (("task", STRING), ("done", BOOL)), "transaction")}
)


def _todo_db(*rows):
    return Database({"todo": BagVal.of(*rows)})


_TODO_OPEN = [
    RowVal(rec(task="Go shopping", done=True), T1100, FOREVER),
    RowVal(rec(task="Cook dinner", done=False), T1100, FOREVER),
    RowVal(rec(task="Walk the dog", done=False), T1100, FOREVER),
    RowVal(rec(task="Watch TV", done=False), T1100, FOREVER),
]

TODO_FINAL_ROWS = [
    RowVal(rec(task="Go shopping", done=True), T1100, FOREVER),
    RowVal(rec(task="Cook dinner", done=False), T1100, T1730),
    RowVal(rec(task="Walk the dog", done=False), T1100, FOREVER),
    RowVal(rec(task="Cook dinner", done=True), T1730, FOREVER),
    RowVal(rec(task="Watch TV", done=False), T1100, T1900),
]

TODO = Scenario(
    name="todo",
    dialect="t",
    schema=TODO_SCHEMA,
    initial=_todo_db(),
    steps=(
        Step(
            T1100,
            'insert todo values [| (task = "Go shopping", done = true), '
            '(task = "Cook dinner", done = false), '
            '(task = "Walk the dog", done = false), '
            '(task = "Watch TV", done = false) |]',
        ),
        Step(T1730, 'update (x <- todo) where x.task == "Cook dinner" set (done = true)'),
        Step(T1900, 'delete (x <- todo) where x.task == "Watch TV"'),
    ),
    expected=(
        _todo_db(*_TODO_OPEN),
        _todo_db(
            RowVal(rec(task="Go shopping", done=True), T1100, FOREVER),
            RowVal(rec(task="Cook dinner", done=False), T1100, T1730),
            RowVal(rec(task="Cook dinner", done=True), T1730, FOREVER),
            RowVal(rec(task="Walk the dog", done=False), T1100, FOREVER),
            RowVal(rec(task="Watch TV", done=False), T1100, FOREVER),
        ),
        _todo_db(*TODO_FINAL_ROWS),
    ),
    snapshots=(
        (
            "todo",
            T1800,
            BagVal.of(
                rec(task="Go shopping", done=True),
                rec(task="Cook dinner", done=True),
                rec(task="Walk the dog", done=False),
                rec(task="Watch TV", done=False),
            ),
        ),
        (
            "todo",
            FOREVER,
            BagVal.of(
                rec(task="Go shopping", done=True),
                rec(task="Cook dinner", done=True),
                rec(task="Walk the dog", done=False),
            ),
        ),
    ),
)


# -- the HR story (valid time, years)


EMP_SCHEMA = Schema(
    {
        "employees": TableSchema(
            "employees",
            (("name", STRING), ("position", STRING), ("salary", INT)),
            "valid",
        )
    }
)


def _emp_db(*rows):
    return Database({"employees": BagVal.of(*rows)})


EMP_INITIAL = _emp_db(
    RowVal(rec(name="Alice", position="Lecturer", salary=40000), 2010, 2018),
    RowVal(rec(name="Alice", position="Senior Lecturer", salary=50000), 2018, FOREVER),
    RowVal(rec(name="Bob", position="PhD Student", salary=15000), 2019, 2023),
    RowVal(rec(name="Charles", position="PhD Student", salary=15000), 2018, 2022),
)

EMPLOYEES = Scenario(
    name="employees",
    dialect="v",
    schema=EMP_SCHEMA,
    initial=EMP_INITIAL,
    steps=(
        Step(
            2022,
            'insert employees values [| (name = "Dolores", position = "Professor", '
            "salary = 70000) |]",
        ),
        Step(2022, 'delete (x <- employees) where x.name == "Alice"'),
        Step(
            2022,
            "update sequenced (x <- employees) between @2023 and @2028 "
            'where x.name == "Dolores" set (position = "Head of School")',
        ),
        Step(
            2022,
            "update nonsequenced (x <- employees) "
            'where data(x).position == "PhD Student" '
            "set () valid from start(x) to end(x) + 1",
        ),
    ),
    expected=(
        _emp_db(
            RowVal(rec(name="Alice", position="Lecturer", salary=40000), 2010, 2018),
            RowVal(rec(name="Alice", position="Senior Lecturer", salary=50000), 2018, FOREVER),
            RowVal(rec(name="Bob", position="PhD Student", salary=15000), 2019, 2023),
            RowVal(rec(name="Charles", position="PhD Student", salary=15000), 2018, 2022),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2022, FOREVER),
        ),
        _emp_db(
            RowVal(rec(name="Alice", position="Lecturer", salary=40000), 2010, 2018),
            RowVal(rec(name="Alice", position="Senior Lecturer", salary=50000), 2018, 2022),
            RowVal(rec(name="Bob", position="PhD Student", salary=15000), 2019, 2023),
            RowVal(rec(name="Charles", position="PhD Student", salary=15000), 2018, 2022),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2022, FOREVER),
        ),
        _emp_db(
            RowVal(rec(name="Alice", position="Lecturer", salary=40000), 2010, 2018),
            RowVal(rec(name="Alice", position="Senior Lecturer", salary=50000), 2018, 2022),
            RowVal(rec(name="Bob", position="PhD Student", salary=15000), 2019, 2023),
            RowVal(rec(name="Charles", position="PhD Student", salary=15000), 2018, 2022),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2022, 2023),
            RowVal(rec(name="Dolores", position="Head of School", salary=70000), 2023, 2028),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2028, FOREVER),
        ),
        _emp_db(
            RowVal(rec(name="Alice", position="Lecturer", salary=40000), 2010, 2018),
            RowVal(rec(name="Alice", position="Senior Lecturer", salary=50000), 2018, 2022),
            RowVal(rec(name="Bob", position="PhD Student", salary=15000), 2019, 2024),
            RowVal(rec(name="Charles", position="PhD Student", salary=15000), 2018, 2023),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2022, 2023),
            RowVal(rec(name="Dolores", position="Head of School", salary=70000), 2023, 2028),
            RowVal(rec(name="Dolores", position="Professor", salary=70000), 2028, FOREVER),
        ),
    ),
)


# -- joins


JOIN_FLAT_SCHEMA = Schema(
    {
        "employees": TableSchema(
            "employees", (("name", STRING), ("position", STRING), ("band", STRING))
        ),
        "salaries": TableSchema("salaries", (("band", STRING), ("salary", INT))),
    }
)

SALARIES_PLAIN = BagVal.of(
    rec(band="A08", salary=40000),
    rec(band="A09", salary=50000),
    rec(band="A10", salary=70000),
    rec(band="B01", salary=15000),
)

JOIN_FLAT = QueryScenario(
    name="join-flat",
    dialect="linq",
    schema=JOIN_FLAT_SCHEMA,
    db=Database(
        {
            "employees": BagVal.of(
                rec(name="Alice", position="Senior Lecturer", band="A08"),
                rec(name="Bob", position="PhD Student", band="B01"),
                rec(name="Charles", position="PhD Student", band="B01"),
                rec(name="Dolores", position="Professor", band="A10"),
            ),
            "salaries": SALARIES_PLAIN,
        }
    ),
    source=(
        "query (for (e <- get employees, s <- get salaries) "
        "where e.band == s.band "
        "[| (name = e.name, salary = s.salary) |])"
    ),
    expected=BagVal.of(
        rec(name="Alice", salary=40000),
        rec(name="Bob", salary=15000),
        rec(name="Charles", salary=15000),
        rec(name="Dolores", salary=70000),
    ),
)

EMP_BAND_ROWS = BagVal.of(
    RowVal(rec(name="Alice", position="Lecturer", band="A08"), 2010, 2018),
    RowVal(rec(name="Alice", position="Senior Lecturer", band="A09"), 2018, FOREVER),
    RowVal(rec(name="Bob", position="PhD Student", band="B01"), 2019, 2023),
    RowVal(rec(name="Charles", position="PhD Student", band="B01"), 2018, 2022),
    RowVal(rec(name="Dolores", position="Professor", band="A10"), 2022, FOREVER),
)

JOIN_MIXED_SCHEMA = Schema(
    {
        "employees": TableSchema(
            "employees",
            (("name", STRING), ("position", STRING), ("band", STRING)),
            "valid",
        ),
        "salaries": TableSchema("salaries", (("band", STRING), ("salary", INT))),
    }
)

JOIN_MIXED = QueryScenario(
    name="join-mixed",
    dialect="v",
    schema=JOIN_MIXED_SCHEMA,
    db=Database({"employees": EMP_BAND_ROWS, "salaries": SALARIES_PLAIN}),
    source=(
        "query (for (e <v- employees, s <- get salaries) "
        "where data(e).band == s.band "
        "[| row((name = data(e).name, salary = s.salary), start(e), end(e)) |])"
    ),
    expected=BagVal.of(
        RowVal(rec(name="Alice", salary=40000), 2010, 2018),
        RowVal(rec(name="Alice", salary=50000), 2018, FOREVER),
        RowVal(rec(name="Bob", salary=15000), 2019, 2023),
        RowVal(rec(name="Charles", salary=15000), 2018, 2022),
        RowVal(rec(name="Dolores", salary=70000), 2022, FOREVER),
    ),
)

JOIN_SEQ_SCHEMA = Schema(
    {
        "employees": TableSchema(
            "employees",
            (("name", STRING), ("position", STRING), ("band", STRING)),
            "valid",
        ),
        "salaries": TableSchema(
            "salaries", (("band", STRING), ("salary", INT)), "valid"
        ),
    }
)

JOIN_SEQUENCED = QueryScenario(
    name="join-sequenced",
    dialect="v",
    schema=JOIN_SEQ_SCHEMA,
    db=Database(
        {
            "employees": EMP_BAND_ROWS,
            "salaries": BagVal.of(
                RowVal(rec(band="A08", salary=38000), 2000, 2015),
                RowVal(rec(band="A09", salary=48000), 2000, 2015),
                RowVal(rec(band="A08", salary=40000), 2015, FOREVER),
                RowVal(rec(band="A09", salary=50000), 2015, FOREVER),
            ),
        }
    ),
    source=(
        "join (for (e <v- employees, s <v- salaries) "
        "where data(e).band == data(s).band "
        "[| (name = data(e).name, salary = data(s).salary) |])"
    ),
    expected=BagVal.of(
        RowVal(rec(name="Alice", salary=38000), 2010, 2015),
        RowVal(rec(name="Alice", salary=40000), 2015, 2018),
        RowVal(rec(name="Alice", salary=50000), 2018, FOREVER),
    ),
)


SCENARIOS = {"todo": TODO, "employees": EMPLOYEES}
QUERY_SCENARIOS = {q.name: q for q in (JOIN_FLAT, JOIN_MIXED, JOIN_SEQUENCED)}


def check_replay(sc: Scenario, current: str = "desugar") -> Tuple[Outcome, ...]:
    """Replay and compare every intermediate state with the frozen tables."""
    outs = replay(sc, current)
    for i, (out, want) in enumerate(zip(outs, sc.expected)):
        if out.aborted:
            raise AssertionError(f"{sc.name} step {i + 1} aborted: {out.reason}")
        if out.db != want:
            raise AssertionError(f"{sc.name} step {i + 1} diverged from the recorded table")
    final = outs[-1].db
    for table, t, want in sc.snapshots:
        got = snapshot_at(final, sc.schema, table, t)
        if got != want:
            raise AssertionError(f"{sc.name}: snapshot of {table} at {t} diverged")
    return outs
