"""Core structure tests: multisets, records, rows, flattening, schemas.

Expected values for the worked to-do history are frozen from working the
example by hand; everything else is either a direct identity or a property.
"""

import json

import pytest
from hypothesis import given, strategies as st

from tempoql.model import (
    BEGINNING_OF_TIME,
    FOREVER,
    BagVal,
    ConstVal,
    Database,
    ModelError,
    Project,
    Record,
    RecordLit,
    RecordVal,
    RowVal,
    Schema,
    TableSchema,
    Var,
    TIME,
    BOOL,
    STRING,
    bag_union,
    canonical_key,
    dec_time,
    enc_time,
    eta_expand,
    flatten_db,
    flatten_row,
    flatten_schema,
    max_timestamp,
    record_with,
    unflatten_row,
    value_to_jsonable,
    well_formed,
    wf_violations,
)


def iv(n):
    return ConstVal("int", n)


def sv(s):
    return ConstVal("string", s)


def bv(b):
    return ConstVal("bool", b)


def task(name, done):
    return RecordVal((("task", sv(name)), ("done", bv(done))))


# Minutes since midnight, the axis used throughout the to-do example.
T1100 = 11 * 60
T1730 = 17 * 60 + 30
T1900 = 19 * 60

TODO_SCHEMA = Schema(
    {
        "todo": TableSchema(
            "todo", (("task", STRING), ("done", BOOL)), "transaction"
        )
    }
)

# The five-row to-do history after the three modifications.
TODO_ROWS = [
    RowVal(task("Go shopping", True), T1100, FOREVER),
    RowVal(task("Cook dinner", False), T1100, T1730),
    RowVal(task("Walk the dog", False), T1100, FOREVER),
    RowVal(task("Cook dinner", True), T1730, FOREVER),
    RowVal(task("Watch TV", False), T1100, T1900),
]
TODO_DB = Database({"todo": BagVal.of(*TODO_ROWS)})


class TestBags:
    def test_union_counts(self):
        a = BagVal.of(iv(1), iv(2))
        b = BagVal.of(iv(2))
        u = bag_union(a, b)
        assert u == BagVal(((iv(1), 1), (iv(2), 2)))
        assert u.count(iv(2)) == 2
        assert u.total() == 3

    def test_order_is_irrelevant(self):
        assert BagVal.of(iv(1), iv(2)) == BagVal.of(iv(2), iv(1))
        assert BagVal(((iv(3), 2),)) == BagVal.of(iv(3), iv(3))

    def test_int_and_bool_do_not_collapse(self):
        # 1 and true are distinct elements even though Python thinks 1 == True
        bag = BagVal.of(iv(1), bv(True))
        assert bag.count(iv(1)) == 1
        assert bag.count(bv(True)) == 1

    def test_zero_counts_vanish(self):
        assert BagVal(((iv(1), 0),)) == BagVal()
        with pytest.raises(ModelError):
            BagVal(((iv(1), -1),))

    @given(st.lists(st.integers(0, 5), max_size=6), st.lists(st.integers(0, 5), max_size=6))
    def test_union_commutes(self, xs, ys):
        a = BagVal.of(*[iv(x) for x in xs])
        b = BagVal.of(*[iv(y) for y in ys])
        assert bag_union(a, b) == bag_union(b, a)
        assert bag_union(a, b).total() == len(xs) + len(ys)


class TestRecords:
    def test_fields_sort(self):
        r = RecordVal((("b", iv(2)), ("a", iv(1))))
        assert r.labels() == ("a", "b")
        assert r == RecordVal((("a", iv(1)), ("b", iv(2))))

    def test_duplicate_label_rejected(self):
        with pytest.raises(ModelError):
            RecordVal((("a", iv(1)), ("a", iv(2))))

    def test_with_replaces(self):
        r = task("Cook dinner", False)
        assert record_with(r, [("done", bv(True))]) == task("Cook dinner", True)

    def test_with_unknown_label(self):
        with pytest.raises(ModelError):
            record_with(task("Cook dinner", False), [("urgent", bv(True))])


class TestRows:
    def test_flatten(self):
        row = RowVal(task("Cook dinner", False), T1100, T1730)
        flat = flatten_row(row)
        assert flat == RecordVal(
            (
                ("task", sv("Cook dinner")),
                ("done", bv(False)),
                ("start", ConstVal("time", T1100)),
                ("end", ConstVal("time", T1730)),
            )
        )

    def test_flatten_empty_payload(self):
        flat = flatten_row(RowVal(RecordVal(()), 1, 2))
        assert flat.labels() == ("end", "start")

    def test_flatten_label_clash(self):
        row = RowVal(RecordVal((("start", iv(0)),)), 1, 2)
        with pytest.raises(ModelError):
            flatten_row(row)

    def test_flatten_custom_period_names(self):
        row = RowVal(task("x", True), 3, 9)
        flat = flatten_row(row, ("valid_from", "valid_to"))
        assert flat.get("valid_from") == ConstVal("time", 3)
        assert unflatten_row(flat, ("valid_from", "valid_to")) == row

    @given(
        st.integers(-50, 50),
        st.integers(-50, 50),
        st.booleans(),
        st.text("ab", max_size=3),
    )
    def test_flatten_round_trips(self, s, e, done, name):
        row = RowVal(task(name, done), s, e)
        assert unflatten_row(flatten_row(row)) == row


class TestSchemaAndDb:
    def test_max_timestamp_todo(self):
        assert max_timestamp(TODO_DB, TODO_SCHEMA) == T1900

    def test_max_timestamp_counts_open_row_starts(self):
        # A clock below 5 could close this row into an inverted period, so
        # the start must count toward the bound.
        db = Database({"todo": BagVal.of(RowVal(task("a", True), 5, FOREVER))})
        assert max_timestamp(db, TODO_SCHEMA) == 5

    def test_max_timestamp_empty_history(self):
        db = Database({"todo": BagVal()})
        assert max_timestamp(db, TODO_SCHEMA) == BEGINNING_OF_TIME

    def test_well_formed_strict(self):
        assert well_formed(TODO_DB, TODO_SCHEMA)
        bad = Database({"todo": BagVal.of(RowVal(task("a", True), 7, 7))})
        assert not well_formed(bad, TODO_SCHEMA)
        [(name, row)] = wf_violations(bad, TODO_SCHEMA)
        assert name == "todo" and row.start == 7

    def test_flatten_db_preserves_plain(self):
        schema = Schema(
            {
                "todo": TODO_SCHEMA.tables["todo"],
                "notes": TableSchema("notes", (("text", STRING),)),
            }
        )
        notes = BagVal.of(RecordVal((("text", sv("hi")),)))
        db = Database({"todo": TODO_DB.tables["todo"], "notes": notes})
        flat = flatten_db(db, schema)
        assert flat.tables["notes"] == notes
        assert flat.tables["todo"].total() == 5
        for rec, _ in flat.tables["todo"].items:
            assert "start" in rec.labels() and "end" in rec.labels()

    def test_flatten_schema_appends_period(self):
        flat = flatten_schema(TODO_SCHEMA)
        ts = flat.tables["todo"]
        assert ts.dialect == "plain"
        assert ts.columns[-2:] == (("start", TIME), ("end", TIME))

    def test_period_clash_rejected_in_schema(self):
        with pytest.raises(ModelError):
            TableSchema("t", (("start", TIME),), "valid")

    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(1, 10)), max_size=5))
    def test_flatten_db_injective_and_invertible(self, periods):
        rows = [RowVal(task("t", True), s, s + d) for s, d in periods]
        db = Database({"todo": BagVal.of(*rows)})
        flat = flatten_db(db, TODO_SCHEMA)
        back = BagVal(
            tuple((unflatten_row(r), n) for r, n in flat.tables["todo"].items)
        )
        assert back == db.tables["todo"]


class TestJsonEncoding:
    def test_time_sentinels(self):
        assert enc_time(FOREVER) == "inf"
        assert enc_time(BEGINNING_OF_TIME) == "-inf"
        assert enc_time(42) == 42
        assert dec_time("inf") == FOREVER
        assert dec_time("-inf") == BEGINNING_OF_TIME
        assert dec_time(42) == 42
        with pytest.raises(ModelError):
            dec_time("soon")

    def test_value_encoding_shapes(self):
        enc = value_to_jsonable(BagVal.of(RowVal(task("a", True), 1, FOREVER)))
        assert enc["unordered"] is True
        [(item, n)] = [(i, n) for i, n in enc["bag"]]
        assert n == 1
        assert item["row"][1] == 1 and item["row"][2] == "inf"
        # canonical keys are stable strings usable as a sort key
        k = canonical_key(task("a", True))
        assert json.loads(k) == {"record": {"done": True, "task": "a"}}


class TestEta:
    def test_eta_expand(self):
        t = eta_expand("x", ["task", "done"])
        assert t == RecordLit(
            (("task", Project(Var("x"), "task")), ("done", Project(Var("x"), "done")))
        )


class TestTypes:
    def test_record_type_sorts(self):
        r = Record((("b", TIME), ("a", BOOL)))
        assert r.labels() == ("a", "b")
        assert str(r) == "(a: bool, b: time)"
