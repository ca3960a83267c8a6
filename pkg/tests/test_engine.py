"""Snapshot store and scenario replay tests.

The worked-scenario tables are frozen in the scenarios module; these tests
replay the histories through apply_atomic and compare state by state.  The
monotonicity property (later transaction-time modifications never disturb
earlier snapshots) is checked with randomized histories.
"""

import json
import random

import pytest

from tempoql.engine import (
    EngineError,
    Outcome,
    apply_atomic,
    db_fingerprint,
    dumps_snapshot,
    load_snapshot,
    loads_snapshot,
    period_contains,
    render_table,
    save_snapshot,
    snapshot_at,
    snapshot_current,
)
from tempoql.model import (
    FOREVER,
    BagVal,
    ConstVal,
    Database,
    RecordVal,
    RowVal,
    Schema,
    TableSchema,
    INT,
    STRING,
)
from tempoql.scenarios import (
    EMPLOYEES,
    JOIN_FLAT,
    JOIN_MIXED,
    QUERY_SCENARIOS,
    SCENARIOS,
    TODO,
    check_replay,
    rec,
    replay,
    run_query,
)
from tempoql.surface import parse_term
from tempoql.typecheck import annotate


class TestSnapshotFiles:
    def snapshot_text(self):
        return dumps_snapshot(TODO.schema, TODO.expected[-1], clock=1140)

    def test_round_trip(self, tmp_path):
        p = tmp_path / "todo.db.json"
        save_snapshot(p, TODO.schema, TODO.expected[-1], clock=1140)
        schema, db, clock = load_snapshot(p)
        assert clock == 1140
        assert schema == TODO.schema
        assert db == TODO.expected[-1]
        assert db.tables["todo"].total() == 5

    def test_save_after_load_is_identity(self, tmp_path):
        # a scrambled but valid file becomes canonical after one cycle
        doc = json.loads(self.snapshot_text())
        doc["tables"]["todo"].reverse()
        messy = json.dumps(doc, indent=4)
        schema, db, clock = loads_snapshot(messy)
        once = dumps_snapshot(schema, db, clock)
        again = dumps_snapshot(*loads_snapshot(once)[:2], loads_snapshot(once)[2])
        assert once == again
        assert once == self.snapshot_text()

    def test_empty_snapshot(self):
        schema, db, clock = loads_snapshot(
            '{"schema": {"p": {"columns": [["n", "int"]]}}, "tables": {}}'
        )
        assert db.tables["p"] == BagVal()
        assert clock is None

    def test_bad_rows_are_named(self):
        base = json.loads(self.snapshot_text())
        base["tables"]["todo"][0][1] = 2000
        base["tables"]["todo"][0][2] = 100
        with pytest.raises(EngineError) as err:
            loads_snapshot(json.dumps(base))
        assert "todo, row 0" in str(err.value)
        assert "period" in str(err.value)

    def test_schema_mismatches(self):
        with pytest.raises(EngineError):
            loads_snapshot('{"schema": {}, "tables": {"ghost": []}}')
        with pytest.raises(EngineError):
            loads_snapshot(
                '{"schema": {"p": {"columns": [["n", "int"]]}}, '
                '"tables": {"p": [[{"m": 1}, 1]]}}'
            )
        with pytest.raises(EngineError):
            loads_snapshot(
                '{"schema": {"p": {"columns": [["n", "int"]]}}, '
                '"tables": {"p": [[{"n": "one"}, 1]]}}'
            )
        with pytest.raises(EngineError):
            loads_snapshot(
                '{"schema": {"p": {"columns": [["n", "int"]]}}, '
                '"tables": {"p": [[{"n": 1}, 0]]}}'
            )
        with pytest.raises(EngineError):
            loads_snapshot("{nope")

    def test_multiplicity_survives(self):
        schema = Schema({"p": TableSchema("p", (("n", INT),))})
        db = Database({"p": BagVal(((rec(n=1), 3),))})
        text = dumps_snapshot(schema, db)
        _, back, _ = loads_snapshot(text)
        assert back.tables["p"].count(rec(n=1)) == 3


class TestTimeTravel:
    def test_period_contains(self):
        assert period_contains(3, 9, 3)
        assert not period_contains(3, 9, 9)
        assert period_contains(3, 9, 8)
        assert not period_contains(3, 9, 2)
        # the right edge of time sees exactly the open rows
        assert period_contains(3, FOREVER, FOREVER)
        assert not period_contains(3, 9, FOREVER)

    def test_todo_snapshots(self):
        final = TODO.expected[-1]
        at_1800 = snapshot_at(final, TODO.schema, "todo", 1080)
        assert at_1800.total() == 4
        current = snapshot_current(final, TODO.schema, "todo")
        assert current == BagVal.of(
            rec(task="Go shopping", done=True),
            rec(task="Cook dinner", done=True),
            rec(task="Walk the dog", done=False),
        )

    def test_snapshot_errors(self):
        with pytest.raises(EngineError):
            snapshot_at(TODO.expected[-1], TODO.schema, "ghost", 0)
        plain = Schema({"p": TableSchema("p", (("n", INT),))})
        with pytest.raises(EngineError):
            snapshot_at(Database({"p": BagVal()}), plain, "p", 0)


class TestApplyAtomic:
    def test_abort_returns_original(self):
        sc = EMPLOYEES
        term = annotate(
            sc.schema,
            parse_term(
                "update sequenced (x <- employees) between @5 and @5 where true set ()",
                tables=("employees",),
            ),
            "v",
        )
        before = db_fingerprint(sc.schema, sc.initial)
        out = apply_atomic(sc.schema, sc.initial, term, 2022, "v")
        assert out.aborted and "applicability" in out.reason
        assert out.db is sc.initial
        assert db_fingerprint(sc.schema, out.db) == before

    def test_random_abort_injection_leaves_db_intact(self):
        rng = random.Random(7)
        sc = EMPLOYEES
        before = db_fingerprint(sc.schema, sc.initial)
        for _ in range(100):
            a = rng.randint(1, 12)
            b = rng.randint(0, a)  # empty or inverted applicability period
            src = (
                f"update sequenced (x <- employees) between @{a} and @{b} "
                "where true set (salary = 0)"
            )
            term = annotate(sc.schema, parse_term(src, tables=("employees",)), "v")
            out = apply_atomic(sc.schema, sc.initial, term, 2022, "v")
            assert out.aborted
            assert db_fingerprint(sc.schema, out.db) == before

    def test_exit_value_on_success(self):
        schema = Schema({"p": TableSchema("p", (("n", INT),))})
        db = Database({"p": BagVal()})
        term = annotate(
            schema, parse_term("insert p values [| (n = 1) |]", tables=("p",)), "linq"
        )
        out = apply_atomic(schema, db, term, 0, "linq")
        assert not out.aborted
        assert out.value == RecordVal(())
        assert out.db.tables["p"].total() == 1


class TestScenarioReplay:
    @pytest.mark.parametrize("current", ["desugar", "direct"])
    def test_todo_and_employees(self, current):
        for sc in SCENARIOS.values():
            check_replay(sc, current)

    def test_replay_states_match_frozen(self):
        outs = replay(TODO)
        assert [o.db for o in outs] == list(TODO.expected)
        outs = replay(EMPLOYEES)
        assert [o.db for o in outs] == list(EMPLOYEES.expected)

    def test_flat_join_query(self):
        assert run_query(JOIN_FLAT) == JOIN_FLAT.expected

    def test_mixed_join_query(self):
        assert run_query(JOIN_MIXED, clock=2022) == JOIN_MIXED.expected

    def test_monotone_history(self):
        # appending transaction-time modifications at later clocks never
        # changes what earlier snapshots report
        rng = random.Random(11)
        tasks = ["a", "b", "c"]
        sc = TODO
        db = Database({"todo": BagVal()})
        clock = 10
        checkpoints = []
        for _ in range(40):
            kind = rng.choice(["insert", "update", "delete"])
            t = rng.choice(tasks)
            if kind == "insert":
                src = f'insert todo values [| (task = "{t}", done = false) |]'
            elif kind == "update":
                src = f'update (x <- todo) where x.task == "{t}" set (done = true)'
            else:
                src = f'delete (x <- todo) where x.task == "{t}"'
            term = annotate(sc.schema, parse_term(src, tables=("todo",)), "t")
            out = apply_atomic(sc.schema, db, term, clock, "t")
            assert not out.aborted
            db = out.db
            for at, snap in checkpoints:
                assert snapshot_at(db, sc.schema, "todo", at) == snap
            checkpoints.append((clock, snapshot_at(db, sc.schema, "todo", clock)))
            clock += rng.randint(1, 4)


class TestRendering:
    def test_temporal_table(self):
        text = render_table(TODO.schema.tables["todo"], TODO.expected[-1].tables["todo"])
        lines = text.splitlines()
        assert lines[0].split(" | ")[0].strip() == "task"
        assert "∞" in text
        assert "Go shopping" in text
        assert len(lines) == 2 + 5

    def test_plain_table_and_counts(self):
        ts = TableSchema("p", (("n", INT), ("s", STRING)))
        bag = BagVal(((rec(n=1, s="x"), 2),))
        text = render_table(ts, bag)
        assert text.splitlines()[2:] == text.splitlines()[2:]
        assert len(text.splitlines()) == 2 + 2

    def test_empty_table(self):
        ts = TableSchema("p", (("n", INT),))
        text = render_table(ts, BagVal())
        assert text.splitlines()[0].strip() == "n"
