"""Lexer, parser and printer tests.

The generated-program round-trip lives in test_difftest (it needs the
program generator); here we pin down the grammar corner cases and the
sugar by hand.
"""

import pytest

from tempoql.model import (
    FOREVER,
    Apply,
    BagUnion,
    Const,
    Delete,
    EmptyBag,
    For,
    Get,
    If,
    Insert,
    Lambda,
    PrimOp,
    Project,
    Query,
    RecordLit,
    SeqUpdate,
    SingletonBag,
    TableRef,
    Var,
)
from tempoql.surface import (
    ParseError,
    parse_program,
    parse_term,
    print_program,
    print_term,
)


def rt(src, tables=("t",)):
    """Parse, print, reparse; the reparse must reproduce the term and the
    print must be a fixed point."""
    t = parse_term(src, tables=tables)
    printed = print_term(t)
    t2 = parse_term(printed, tables=tables)
    assert t2 == t, f"reparse changed {src!r}"
    assert print_term(t2) == printed, f"print not idempotent on {src!r}"
    return t


class TestDesugar:
    def test_where_becomes_if(self):
        t = parse_term("for (x <- get t) where x.a [| x |]", tables=("t",))
        assert t == For(
            "x",
            Get(TableRef("t")),
            If(Project(Var("x"), "a"), SingletonBag(Var("x")), EmptyBag()),
        )

    def test_tagged_arrows_wrap_get(self):
        assert parse_term("for (x <t- t) [| x |]") == parse_term(
            "for (x <- get t) [| x |]"
        )
        assert parse_term("for (x <v- t) [| x |]") == parse_term(
            "for (x <- get t) [| x |]"
        )

    def test_multi_generator_nests(self):
        t = parse_term("for (x <- get t, y <- get t) [| x |]")
        assert isinstance(t, For) and isinstance(t.body, For)

    def test_let_is_application(self):
        t = parse_term("let x = 1 in x")
        assert t == Apply(Lambda("x", None, Var("x")), Const("int", 1))

    def test_seq_is_let_with_reserved_name(self):
        t = parse_term("1; 2")
        assert isinstance(t, Apply) and t.fn.param == "_seq1"

    def test_bag_literal_shape(self):
        t = parse_term("[| 1, 2, 3 |]")
        assert t == BagUnion(
            SingletonBag(Const("int", 1)),
            BagUnion(SingletonBag(Const("int", 2)), SingletonBag(Const("int", 3))),
        )

    def test_time_literals(self):
        assert parse_term("@11:00") == Const("time", 660)
        assert parse_term("@17:30") == Const("time", 1050)
        assert parse_term("@5") == Const("time", 5)
        assert parse_term("forever") == Const("time", FOREVER)

    def test_table_vs_var_scoping(self):
        t = parse_term("t", tables=("t",))
        assert t == TableRef("t")
        t = parse_term("let t = 1 in t", tables=("t",))
        assert t.fn.body == Var("t")


class TestRoundTrips:
    CASES = [
        "let x = 1 in x + 2 * 3",
        "x - -3",
        "(insert t values [| (a = 1) |]); query(get t)",
        "if a == b then [| 1 |] else [||]",
        "fun (f: (int -[read]> bag(int))) -> f(1)(2)",
        "update (x <- t) where x.a != 0 set (a = x.a + 1, b = false)",
        "delete sequenced (x <- t) between @3 and @9 where x.a == 1",
        "update nonsequenced (x <- t) where true set () valid from start(x) to end(x) + 1",
        "insert sequenced t values [| row((a = 1), @2, forever) |]",
        "join(for (e <- get t) [| (n = data(e).n) |])",
        "[| a || b && !c |]",
        "query(for (x <- get t) if x.a <= @4 then [| (s = x.a) |] else [||])",
        "greatest(least(@1, @2), beginning)",
        '(n = "line\\nbreak", q = "quote\\"")',
        "x.start <= now && x.end > now",
        "a; (b; c); d",
    ]

    @pytest.mark.parametrize("src", CASES)
    def test_roundtrip(self, src):
        rt(src)

    def test_program_roundtrip(self):
        src = (
            "table todo (task: string, done: bool) transaction\n"
            "table log (msg: string)\n"
            "let setup = insert log values [| (msg = \"hi\") |]\n"
            "query(for (x <t- todo) [| data(x) |])\n"
        )
        prog = parse_program(src)
        printed = print_program(prog)
        assert parse_program(printed) == prog
        assert print_program(parse_program(printed)) == printed

    def test_custom_period_names(self):
        src = "table e (name: string) valid using (vf, vt)\nquery(get e)\n"
        prog = parse_program(src)
        assert prog.schema.tables["e"].period == ("vf", "vt")
        assert "using (vf, vt)" in print_program(prog)


class TestErrors:
    def test_position_and_expectation(self):
        with pytest.raises(ParseError) as exc:
            parse_term("let x 1 in x")
        assert exc.value.span.line == 1
        assert exc.value.span.col == 7
        assert "=" in exc.value.expected

    def test_unterminated_string(self):
        with pytest.raises(ParseError):
            parse_term('"abc')

    def test_bad_minutes(self):
        with pytest.raises(ParseError):
            parse_term("@12:75")

    def test_duplicate_record_label(self):
        with pytest.raises(ParseError):
            parse_term("(a = 1, a = 2)")

    def test_duplicate_table(self):
        with pytest.raises(ParseError):
            parse_program("table t (a: int)\ntable t (a: int)\n1")

    def test_period_clash(self):
        with pytest.raises(ParseError):
            parse_program("table t (start: time) valid\n1")

    def test_missing_main(self):
        with pytest.raises(ParseError):
            parse_program("table t (a: int)\n")

    def test_comment_handling(self):
        t = parse_term("1 -- trailing\n+ 2")
        assert t == PrimOp("+", (Const("int", 1), Const("int", 2)))


class TestStatements:
    def test_insert_parses(self):
        t = parse_term('insert t values [| (a = 1) |]', tables=("t",))
        assert isinstance(t, Insert) and t.table == TableRef("t")

    def test_sequenced_update_fields(self):
        t = parse_term(
            "update sequenced (x <- t) between @3 and @9 where x.a == 1 set (a = 2)"
        )
        assert isinstance(t, SeqUpdate)
        assert t.pa_start == Const("time", 3)
        assert t.pa_end == Const("time", 9)
        assert t.sets == (("a", Const("int", 2)),)

    def test_delete_binder_scopes_pred_only(self):
        t = parse_term("delete (t <- t) where t.a == 1", tables=("t",))
        assert isinstance(t, Delete)
        assert t.table == TableRef("t")
        assert t.pred == PrimOp("==", (Project(Var("t"), "a"), Const("int", 1)))

    def test_empty_set_clause(self):
        t = parse_term("update (x <- t) where true set ()")
        assert t.sets == ()

    def test_query_wrapping(self):
        t = parse_term("query(get t)", tables=("t",))
        assert t == Query(Get(TableRef("t")))
