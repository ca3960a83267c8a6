"""Surface syntax: lexer, recursive-descent parser, deterministic printer.

The concrete syntax is plain ASCII.  Bags are written [| e1, e2 |], stamped
rows row(d, s, e), time literals @N or @HH:MM, and the comprehension arrows
<-, <t- and <v- are accepted (the tagged forms simply wrap the source in
get).  See docs/grammar.md for the grammar.

A program is a sequence of table declarations, optional top-level bindings
(let without in) and one main term.  Parsing is scope-aware: an identifier
names a table when it is declared as one and no binder shadows it.
"""

from __future__ import annotations

import dataclasses as dc
from typing import List, Optional

from .model import (
    BEGINNING_OF_TIME,
    FOREVER,
    Apply,
    BagUnion,
    Base,
    Bag,
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
    ModelError,
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
    TableSchema,
    Term,
    TqError,
    TransactionRow,
    Type,
    Update,
    ValidRow,
    Var,
)

KEYWORDS = {
    "table", "transaction", "valid", "using", "let", "in", "fun", "if",
    "then", "else", "for", "where", "query", "join", "get", "insert",
    "sequenced", "nonsequenced", "values", "update", "delete", "set",
    "between", "and", "from", "to", "row", "data", "start", "end", "now",
    "forever", "beginning", "true", "false", "greatest", "least", "bag",
    "int", "bool", "string", "time", "trow", "vrow",
}

# Longest match first.
SYMBOLS = [
    "[||]", "[|", "|]", "<t-", "<v-", "<-", "<=", ">=", "==", "!=", "&&",
    "||", "++", "->", "-[", "]>", "(", ")", ",", ";", ":", ".", "=", "<",
    ">", "!", "+", "-", "*",
]


class ParseError(TqError):
    def __init__(self, message: str, span: Span, expected=()):
        self.message = message
        self.span = span
        self.expected = tuple(expected)
        detail = message
        if expected:
            detail += " (expected " + ", ".join(expected) + ")"
        super().__init__(f"{span}: {detail}")


@dc.dataclass(frozen=True)
class Token:
    kind: str  # ident | int | time | string | symbol | keyword | eof
    text: str
    value: object
    span: Span


def tokenize(src: str) -> List[Token]:
    toks: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def here() -> Span:
        return Span(line, col)

    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("--", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        span = here()
        if c == '"':
            j = i + 1
            out = []
            while j < n and src[j] != '"':
                if src[j] == "\\":
                    if j + 1 >= n:
                        raise ParseError("unterminated string", span)
                    esc = src[j + 1]
                    out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc))
                    if out[-1] is None:
                        raise ParseError(f"bad escape \\{esc}", span)
                    j += 2
                else:
                    out.append(src[j])
                    j += 1
            if j >= n:
                raise ParseError("unterminated string", span)
            text = src[i : j + 1]
            toks.append(Token("string", text, "".join(out), span))
            col += j + 1 - i
            i = j + 1
            continue
        if c == "@":
            j = i + 1
            while j < n and src[j].isdigit():
                j += 1
            if j == i + 1:
                raise ParseError("expected digits after @", span)
            hours = int(src[i + 1 : j])
            value = hours
            if j < n and src[j] == ":":
                k = j + 1
                while k < n and src[k].isdigit():
                    k += 1
                if k == j + 1:
                    raise ParseError("expected minutes after :", span)
                minutes = int(src[j + 1 : k])
                if minutes >= 60:
                    raise ParseError(f"minutes out of range: {minutes}", span)
                value = hours * 60 + minutes
                j = k
            toks.append(Token("time", src[i:j], value, span))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], int(src[i:j]), span))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            kind = "keyword" if word in KEYWORDS else "ident"
            toks.append(Token(kind, word, word, span))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token("symbol", sym, sym, span))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", span)
    toks.append(Token("eof", "", None, Span(line, col)))
    return toks


@dc.dataclass
class SourceProgram:
    schema: Schema
    bindings: tuple  # of (name, Term) in source order
    main: Term


def program_term(prog: SourceProgram) -> Term:
    """Fold the top-level bindings into the main term as a let chain."""
    t = prog.main
    for name, bound in reversed(prog.bindings):
        t = Apply(Lambda(name, None, t), bound)
    return t


class Parser:
    def __init__(self, toks: List[Token]):
        self.toks = toks
        self.pos = 0
        self.tables: set = set()
        self.bound: list = []  # stack of locally bound names
        self.seq_counter = 0

    # -- token plumbing

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None, ahead: int = 0) -> bool:
        t = self.peek(ahead)
        return t.kind == kind and (text is None or t.text == text)

    def eat(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            got = self.peek()
            want = text if text is not None else kind
            raise ParseError(
                f"found {got.text or got.kind!r}", got.span, expected=[str(want)]
            )
        return self.next()

    def eat_label(self) -> str:
        t = self.peek()
        if t.kind in ("ident", "keyword"):
            self.next()
            return t.text
        raise ParseError(f"found {t.text or t.kind!r}", t.span, expected=["label"])

    # -- program structure

    def parse_program(self) -> SourceProgram:
        tables = {}
        while self.at("keyword", "table"):
            ts = self.parse_table_decl()
            if ts.name in tables:
                raise ParseError(f"table {ts.name!r} declared twice", self.peek().span)
            tables[ts.name] = ts
            self.tables.add(ts.name)
        bindings = []
        main = None
        while True:
            if self.at("keyword", "let") and self.is_top_level_binding():
                self.eat("keyword", "let")
                name = self.eat("ident").text
                self.eat("symbol", "=")
                bound = self.parse_term()
                bindings.append((name, bound))
                self.bound.append(name)
                continue
            main = self.parse_term()
            break
        for _ in bindings:
            self.bound.pop()
        self.eat("eof")
        return SourceProgram(Schema(tables), tuple(bindings), main)

    def is_top_level_binding(self) -> bool:
        """A let at the top level is a binding exactly when its body has no
        matching in.  Scan forward counting nested lets."""
        depth = 0
        ahead = 1  # past the let
        while True:
            t = self.peek(ahead)
            if t.kind == "eof":
                return True
            if t.kind == "keyword" and t.text == "let":
                depth += 1
            elif t.kind == "keyword" and t.text == "in":
                if depth == 0:
                    return False
                depth -= 1
            ahead += 1

    def parse_table_decl(self) -> TableSchema:
        self.eat("keyword", "table")
        name = self.eat("ident").text
        self.eat("symbol", "(")
        cols = []
        while not self.at("symbol", ")"):
            if cols:
                self.eat("symbol", ",")
            label = self.eat_label()
            self.eat("symbol", ":")
            ty = self.parse_type()
            if not isinstance(ty, Base):
                raise ParseError("column types must be base types", self.peek().span)
            cols.append((label, ty))
        self.eat("symbol", ")")
        dialect = "plain"
        period = ("start", "end")
        if self.at("keyword", "transaction") or self.at("keyword", "valid"):
            dialect = self.next().text
            if self.at("keyword", "using"):
                self.next()
                self.eat("symbol", "(")
                s = self.eat_label()
                self.eat("symbol", ",")
                e = self.eat_label()
                self.eat("symbol", ")")
                period = (s, e)
        try:
            return TableSchema(name, tuple(cols), dialect, period)
        except ModelError as exc:
            raise ParseError(str(exc), self.peek().span) from exc

    # -- types

    def parse_type(self) -> Type:
        t = self.parse_type_atom()
        if self.at("symbol", "->"):
            self.next()
            return Fun(t, self.parse_type(), frozenset())
        if self.at("symbol", "-["):
            self.next()
            effs = []
            while not self.at("symbol", "]>"):
                if effs:
                    self.eat("symbol", ",")
                eff = self.eat("ident").text
                if eff not in ("read", "write"):
                    raise ParseError(f"unknown effect {eff!r}", self.peek().span)
                effs.append(eff)
            self.eat("symbol", "]>")
            return Fun(t, self.parse_type(), frozenset(effs))
        return t

    def parse_type_atom(self) -> Type:
        t = self.peek()
        if t.kind == "keyword" and t.text in ("int", "bool", "string", "time"):
            self.next()
            return Base(t.text)
        if t.kind == "keyword" and t.text == "bag":
            self.next()
            self.eat("symbol", "(")
            inner = self.parse_type()
            self.eat("symbol", ")")
            return Bag(inner)
        if t.kind == "keyword" and t.text in ("table", "trow", "vrow"):
            self.next()
            inner = self.parse_record_type()
            if t.text == "table":
                return Table(inner)
            return TransactionRow(inner) if t.text == "trow" else ValidRow(inner)
        if t.kind == "symbol" and t.text == "(":
            # record type or parenthesized type
            if self.at("symbol", ")", 1) or (
                self.peek(1).kind in ("ident", "keyword")
                and self.at("symbol", ":", 2)
            ):
                return self.parse_record_type()
            self.next()
            inner = self.parse_type()
            self.eat("symbol", ")")
            return inner
        raise ParseError(f"found {t.text or t.kind!r}", t.span, expected=["type"])

    def parse_record_type(self) -> Record:
        self.eat("symbol", "(")
        fields = []
        while not self.at("symbol", ")"):
            if fields:
                self.eat("symbol", ",")
            label = self.eat_label()
            self.eat("symbol", ":")
            fields.append((label, self.parse_type()))
        self.eat("symbol", ")")
        try:
            return Record(tuple(fields))
        except ModelError as exc:
            raise ParseError(str(exc), self.peek().span) from exc

    # -- terms, loosest level first

    def parse_term(self) -> Term:
        left = self.parse_prefix()
        if self.at("symbol", ";"):
            self.next()
            self.seq_counter += 1
            name = f"_seq{self.seq_counter}"
            rest = self.parse_term()
            return Apply(Lambda(name, None, rest), left)
        return left

    def parse_prefix(self) -> Term:
        t = self.peek()
        if t.kind == "keyword":
            match t.text:
                case "let":
                    return self.parse_let()
                case "fun":
                    return self.parse_fun()
                case "if":
                    return self.parse_if()
                case "for":
                    return self.parse_for()
                case "insert":
                    return self.parse_insert()
                case "update":
                    return self.parse_update()
                case "delete":
                    return self.parse_delete()
        return self.parse_or()

    def parse_let(self) -> Term:
        span = self.eat("keyword", "let").span
        name = self.eat("ident").text
        self.eat("symbol", "=")
        bound = self.parse_term()
        self.eat("keyword", "in")
        self.bound.append(name)
        body = self.parse_prefix_or_seq()
        self.bound.pop()
        return Apply(Lambda(name, None, body, span=span), bound, span=span)

    def parse_prefix_or_seq(self) -> Term:
        # let/fun/if/for bodies extend across ; to the right
        return self.parse_term()

    def parse_fun(self) -> Term:
        span = self.eat("keyword", "fun").span
        self.eat("symbol", "(")
        name = self.eat("ident").text
        self.eat("symbol", ":")
        ty = self.parse_type()
        self.eat("symbol", ")")
        self.eat("symbol", "->")
        self.bound.append(name)
        body = self.parse_prefix_or_seq()
        self.bound.pop()
        return Lambda(name, ty, body, span=span)

    def parse_if(self) -> Term:
        span = self.eat("keyword", "if").span
        cond = self.parse_term()
        self.eat("keyword", "then")
        then = self.parse_term()
        self.eat("keyword", "else")
        other = self.parse_prefix_or_seq()
        return If(cond, then, other, span=span)

    def parse_for(self) -> Term:
        span = self.eat("keyword", "for").span
        self.eat("symbol", "(")
        gens = [self.parse_generator()]
        while self.at("symbol", ","):
            self.next()
            gens.append(self.parse_generator())
        self.eat("symbol", ")")
        for name, _ in gens:
            self.bound.append(name)
        pred = None
        if self.at("keyword", "where"):
            self.next()
            pred = self.parse_or()
        body = self.parse_prefix_or_seq()
        for _ in gens:
            self.bound.pop()
        if pred is not None:
            body = If(pred, body, EmptyBag(), span=span)
        for name, src in reversed(gens):
            body = For(name, src, body, span=span)
        return body

    def parse_generator(self):
        name = self.eat("ident").text
        t = self.peek()
        if t.kind == "symbol" and t.text in ("<t-", "<v-"):
            self.next()
            src = self.parse_or()
            return (name, Get(src, span=t.span))
        self.eat("symbol", "<-")
        src = self.parse_or()
        return (name, src)

    def parse_binder_head(self):
        """The (x <- table) head of a modification."""
        self.eat("symbol", "(")
        name = self.eat("ident").text
        self.eat("symbol", "<-")
        table = self.parse_term()
        self.eat("symbol", ")")
        return name, table

    def parse_set_clause(self) -> tuple:
        self.eat("keyword", "set")
        self.eat("symbol", "(")
        sets = []
        while not self.at("symbol", ")"):
            if sets:
                self.eat("symbol", ",")
            label = self.eat_label()
            self.eat("symbol", "=")
            sets.append((label, self.parse_term()))
        self.eat("symbol", ")")
        labels = [l for l, _ in sets]
        if len(set(labels)) != len(labels):
            raise ParseError("duplicate label in set clause", self.peek().span)
        return tuple(sets)

    def parse_insert(self) -> Term:
        span = self.eat("keyword", "insert").span
        sequenced = False
        if self.at("keyword", "sequenced"):
            self.next()
            sequenced = True
        table = self.parse_or()
        self.eat("keyword", "values")
        rows = self.parse_prefix_or_seq()
        if sequenced:
            return SeqInsert(table, rows, span=span)
        return Insert(table, rows, span=span)

    def parse_update(self) -> Term:
        span = self.eat("keyword", "update").span
        mode = "plain"
        if self.at("keyword", "sequenced") or self.at("keyword", "nonsequenced"):
            mode = self.next().text
        name, table = self.parse_binder_head()
        pa = None
        if mode == "sequenced":
            self.eat("keyword", "between")
            lo = self.parse_or()
            self.eat("keyword", "and")
            hi = self.parse_or()
            pa = (lo, hi)
        self.eat("keyword", "where")
        self.bound.append(name)
        pred = self.parse_or()
        sets = self.parse_set_clause()
        if mode == "nonsequenced":
            self.eat("keyword", "valid")
            self.eat("keyword", "from")
            vfrom = self.parse_or()
            self.eat("keyword", "to")
            vto = self.parse_prefix_or_seq()
            self.bound.pop()
            return NonseqUpdate(name, table, pred, sets, vfrom, vto, span=span)
        self.bound.pop()
        if mode == "sequenced":
            return SeqUpdate(name, table, pa[0], pa[1], pred, sets, span=span)
        return Update(name, table, pred, sets, span=span)

    def parse_delete(self) -> Term:
        span = self.eat("keyword", "delete").span
        mode = "plain"
        if self.at("keyword", "sequenced") or self.at("keyword", "nonsequenced"):
            mode = self.next().text
        name, table = self.parse_binder_head()
        pa = None
        if mode == "sequenced":
            self.eat("keyword", "between")
            lo = self.parse_or()
            self.eat("keyword", "and")
            hi = self.parse_or()
            pa = (lo, hi)
        self.eat("keyword", "where")
        self.bound.append(name)
        pred = self.parse_prefix_or_seq()
        self.bound.pop()
        if mode == "sequenced":
            return SeqDelete(name, table, pa[0], pa[1], pred, span=span)
        if mode == "nonsequenced":
            return NonseqDelete(name, table, pred, span=span)
        return Delete(name, table, pred, span=span)

    def parse_or(self) -> Term:
        left = self.parse_and()
        while self.at("symbol", "||"):
            span = self.next().span
            left = PrimOp("||", (left, self.parse_and()), span=span)
        return left

    def parse_and(self) -> Term:
        left = self.parse_not()
        while self.at("symbol", "&&"):
            span = self.next().span
            left = PrimOp("&&", (left, self.parse_not()), span=span)
        return left

    def parse_not(self) -> Term:
        if self.at("symbol", "!"):
            span = self.next().span
            return PrimOp("!", (self.parse_not(),), span=span)
        return self.parse_cmp()

    CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")

    def parse_cmp(self) -> Term:
        left = self.parse_union()
        t = self.peek()
        if t.kind == "symbol" and t.text in self.CMP_OPS:
            self.next()
            right = self.parse_union()
            return PrimOp(t.text, (left, right), span=t.span)
        return left

    def parse_union(self) -> Term:
        left = self.parse_add()
        while self.at("symbol", "++"):
            span = self.next().span
            left = BagUnion(left, self.parse_add(), span=span)
        return left

    def parse_add(self) -> Term:
        left = self.parse_mul()
        while self.at("symbol", "+") or self.at("symbol", "-"):
            t = self.next()
            left = PrimOp(t.text, (left, self.parse_mul()), span=t.span)
        return left

    def parse_mul(self) -> Term:
        left = self.parse_unary()
        while self.at("symbol", "*"):
            span = self.next().span
            left = PrimOp("*", (left, self.parse_unary()), span=span)
        return left

    def parse_unary(self) -> Term:
        if self.at("symbol", "-"):
            span = self.next().span
            lit = self.peek()
            if lit.kind == "int":
                self.next()
                return Const("int", -lit.value, span=span)
            raise ParseError(
                "negation applies to integer literals only", span, expected=["integer"]
            )
        if self.at("keyword", "get"):
            span = self.next().span
            return Get(self.parse_unary(), span=span)
        return self.parse_postfix()

    def parse_postfix(self) -> Term:
        t = self.parse_atom()
        while True:
            if self.at("symbol", "."):
                span = self.next().span
                label = self.eat_label()
                t = Project(t, label, span=span)
            elif self.at("symbol", "("):
                span = self.next().span
                arg = self.parse_term()
                self.eat("symbol", ")")
                t = Apply(t, arg, span=span)
            else:
                return t

    def parse_atom(self) -> Term:
        t = self.peek()
        span = t.span
        if t.kind == "int":
            self.next()
            return Const("int", t.value, span=span)
        if t.kind == "time":
            self.next()
            return Const("time", t.value, span=span)
        if t.kind == "string":
            self.next()
            return Const("string", t.value, span=span)
        if t.kind == "ident":
            self.next()
            if t.text in self.tables and t.text not in self.bound:
                return TableRef(t.text, span=span)
            return Var(t.text, span=span)
        if t.kind == "keyword":
            match t.text:
                case "true" | "false":
                    self.next()
                    return Const("bool", t.text == "true", span=span)
                case "now":
                    self.next()
                    return Now(span=span)
                case "forever":
                    self.next()
                    return Const("time", FOREVER, span=span)
                case "beginning":
                    self.next()
                    return Const("time", BEGINNING_OF_TIME, span=span)
                case "query" | "join":
                    self.next()
                    self.eat("symbol", "(")
                    body = self.parse_term()
                    self.eat("symbol", ")")
                    return Query(body, span=span) if t.text == "query" else Join(body, span=span)
                case "row":
                    self.next()
                    self.eat("symbol", "(")
                    d = self.parse_term()
                    self.eat("symbol", ",")
                    s = self.parse_term()
                    self.eat("symbol", ",")
                    e = self.parse_term()
                    self.eat("symbol", ")")
                    return RowLit(d, s, e, span=span)
                case "data" | "start" | "end":
                    self.next()
                    self.eat("symbol", "(")
                    arg = self.parse_term()
                    self.eat("symbol", ")")
                    cls = {"data": DataOf, "start": StartOf, "end": EndOf}[t.text]
                    return cls(arg, span=span)
                case "greatest" | "least":
                    self.next()
                    self.eat("symbol", "(")
                    args = [self.parse_term()]
                    while self.at("symbol", ","):
                        self.next()
                        args.append(self.parse_term())
                    self.eat("symbol", ")")
                    return PrimOp(t.text, tuple(args), span=span)
        if t.kind == "symbol" and t.text == "[||]":
            self.next()
            return EmptyBag(span=span)
        if t.kind == "symbol" and t.text == "[|":
            self.next()
            if self.at("symbol", ":"):
                self.next()
                ty = self.parse_type()
                self.eat("symbol", "|]")
                return EmptyBag(ty, span=span)
            elems = [self.parse_term()]
            while self.at("symbol", ","):
                self.next()
                elems.append(self.parse_term())
            self.eat("symbol", "|]")
            out: Term = SingletonBag(elems[-1], span=span)
            for e in reversed(elems[:-1]):
                out = BagUnion(SingletonBag(e, span=span), out, span=span)
            return out
        if t.kind == "symbol" and t.text == "(":
            # unit record, record literal, or grouping
            if self.at("symbol", ")", 1):
                self.next()
                self.next()
                return RecordLit((), span=span)
            if self.peek(1).kind in ("ident", "keyword") and self.at("symbol", "=", 2):
                return self.parse_record_lit()
            self.next()
            inner = self.parse_term()
            self.eat("symbol", ")")
            return inner
        raise ParseError(f"found {t.text or t.kind!r}", span, expected=["a term"])

    def parse_record_lit(self) -> Term:
        span = self.eat("symbol", "(").span
        fields = []
        while not self.at("symbol", ")"):
            if fields:
                self.eat("symbol", ",")
            label = self.eat_label()
            self.eat("symbol", "=")
            fields.append((label, self.parse_term()))
        self.eat("symbol", ")")
        try:
            return RecordLit(tuple(fields), span=span)
        except ModelError as exc:
            raise ParseError(str(exc), span) from exc


def parse_program(src: str) -> SourceProgram:
    return Parser(tokenize(src)).parse_program()


def parse_term(src: str, tables=()) -> Term:
    """Parse a single term; tables lists names to treat as table references."""
    p = Parser(tokenize(src))
    p.tables = set(tables)
    t = p.parse_term()
    p.eat("eof")
    return t


# ---------------------------------------------------------------------------
# Printing
#
# One canonical rendering per term: minimal parentheses, records in sorted
# label order, times as @N with the sentinels as keywords.  Printing then
# reparsing yields a structurally identical term, and printing is idempotent
# on the bytes it produces.

_SEQ, _PREFIX, _OR, _AND, _NOT, _CMP, _UNION, _ADD, _MUL, _UNARY, _POST, _ATOM = range(12)


def _escape(s: str) -> str:
    out = s.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def print_type(t: Type) -> str:
    match t:
        case Base(name):
            return name
        case Bag(elem):
            return f"bag({print_type(elem)})"
        case Record(fields):
            inner = ", ".join(f"{l}: {print_type(ty)}" for l, ty in fields)
            return f"({inner})"
        case Fun(arg, res, effects):
            if effects:
                eff = ",".join(sorted(effects))
                return f"({print_type(arg)} -[{eff}]> {print_type(res)})"
            return f"({print_type(arg)} -> {print_type(res)})"
        case Table(row, dialect):
            if dialect != "plain":
                return f"table[{dialect}]{print_type(row)}"
            return f"table{print_type(row)}"
        case TransactionRow(data):
            return f"trow{print_type(data)}"
        case ValidRow(data):
            return f"vrow{print_type(data)}"
    raise ModelError(f"cannot print type {t!r}")


def _print(t: Term, level: int) -> str:
    s, own = _render(t)
    if own < level:
        return f"({s})"
    return s


def _sets_str(sets) -> str:
    return ", ".join(f"{l} = {_print(e, _SEQ)}" for l, e in sets)


def _render(t: Term):
    """Return (text, level) where level is the loosest context the text can
    stand in without parentheses."""
    match t:
        case Var(name):
            return name, _ATOM
        case TableRef(name):
            return name, _ATOM
        case Const("int", v):
            return str(v), _ATOM if v >= 0 else _UNARY
        case Const("bool", v):
            return ("true" if v else "false"), _ATOM
        case Const("string", v):
            return _escape(v), _ATOM
        case Const("time", v):
            if v == FOREVER:
                return "forever", _ATOM
            if v == BEGINNING_OF_TIME:
                return "beginning", _ATOM
            return f"@{v}", _ATOM
        case Now():
            return "now", _ATOM
        case Apply(Lambda(param, None, body), arg):
            if param.startswith("_seq"):
                # prefix forms on the left would swallow the semicolon
                return f"{_print(arg, _OR)}; {_print(body, _SEQ)}", _SEQ
            return (
                f"let {param} = {_print(arg, _SEQ)} in {_print(body, _PREFIX)}",
                _PREFIX,
            )
        case Lambda(param, ty, body):
            ann = print_type(ty) if ty is not None else "_"
            return f"fun ({param}: {ann}) -> {_print(body, _PREFIX)}", _PREFIX
        case Apply(fn, arg):
            return f"{_print(fn, _POST)}({_print(arg, _SEQ)})", _POST
        case If(c, a, b):
            return (
                f"if {_print(c, _OR)} then {_print(a, _OR)} else {_print(b, _PREFIX)}",
                _PREFIX,
            )
        case For(binder, src, body):
            return (
                f"for ({binder} <- {_print(src, _OR)}) {_print(body, _PREFIX)}",
                _PREFIX,
            )
        case PrimOp("||", (a, b)):
            return f"{_print(a, _OR)} || {_print(b, _AND)}", _OR
        case PrimOp("&&", (a, b)):
            return f"{_print(a, _AND)} && {_print(b, _NOT)}", _AND
        case PrimOp("!", (a,)):
            return f"!{_print(a, _NOT)}", _NOT
        case PrimOp(op, (a, b)) if op in Parser.CMP_OPS:
            return f"{_print(a, _UNION)} {op} {_print(b, _UNION)}", _CMP
        case PrimOp(op, (a, b)) if op in ("+", "-"):
            return f"{_print(a, _ADD)} {op} {_print(b, _MUL)}", _ADD
        case PrimOp("*", (a, b)):
            return f"{_print(a, _MUL)} * {_print(b, _UNARY)}", _MUL
        case PrimOp(op, args) if op in ("greatest", "least"):
            inner = ", ".join(_print(a, _SEQ) for a in args)
            return f"{op}({inner})", _ATOM
        case BagUnion():
            elems = _singleton_chain(t)
            if elems is not None:
                inner = ", ".join(_print(e, _SEQ) for e in elems)
                return f"[| {inner} |]", _ATOM
            return (
                f"{_print(t.left, _UNION)} ++ {_print(t.right, _ADD)}",
                _UNION,
            )
        case SingletonBag(e):
            return f"[| {_print(e, _SEQ)} |]", _ATOM
        case EmptyBag(None):
            return "[||]", _ATOM
        case EmptyBag(ty):
            return f"[|: {print_type(ty)} |]", _ATOM
        case RecordLit(()):
            return "()", _ATOM
        case RecordLit(fields):
            inner = ", ".join(f"{l} = {_print(e, _SEQ)}" for l, e in fields)
            return f"({inner})", _ATOM
        case Project(r, label):
            return f"{_print(r, _POST)}.{label}", _POST
        case Query(b):
            return f"query({_print(b, _SEQ)})", _ATOM
        case Join(b):
            return f"join({_print(b, _SEQ)})", _ATOM
        case Get(m):
            return f"get {_print(m, _POST)}", _UNARY
        case RowLit(d, s, e):
            return (
                f"row({_print(d, _SEQ)}, {_print(s, _SEQ)}, {_print(e, _SEQ)})",
                _ATOM,
            )
        case DataOf(r):
            return f"data({_print(r, _SEQ)})", _ATOM
        case StartOf(r):
            return f"start({_print(r, _SEQ)})", _ATOM
        case EndOf(r):
            return f"end({_print(r, _SEQ)})", _ATOM
        case Insert(m, rows):
            return (
                f"insert {_print(m, _POST)} values {_print(rows, _PREFIX)}",
                _PREFIX,
            )
        case SeqInsert(m, rows):
            return (
                f"insert sequenced {_print(m, _POST)} values {_print(rows, _PREFIX)}",
                _PREFIX,
            )
        case Update(binder, m, pred, sets):
            return (
                f"update ({binder} <- {_print(m, _SEQ)}) where {_print(pred, _OR)}"
                f" set ({_sets_str(sets)})",
                _PREFIX,
            )
        case Delete(binder, m, pred):
            return (
                f"delete ({binder} <- {_print(m, _SEQ)}) where {_print(pred, _PREFIX)}",
                _PREFIX,
            )
        case SeqUpdate(binder, m, ps, pe, pred, sets):
            return (
                f"update sequenced ({binder} <- {_print(m, _SEQ)})"
                f" between {_print(ps, _OR)} and {_print(pe, _OR)}"
                f" where {_print(pred, _OR)} set ({_sets_str(sets)})",
                _PREFIX,
            )
        case SeqDelete(binder, m, ps, pe, pred):
            return (
                f"delete sequenced ({binder} <- {_print(m, _SEQ)})"
                f" between {_print(ps, _OR)} and {_print(pe, _OR)}"
                f" where {_print(pred, _PREFIX)}",
                _PREFIX,
            )
        case NonseqUpdate(binder, m, pred, sets, vf, vt):
            return (
                f"update nonsequenced ({binder} <- {_print(m, _SEQ)})"
                f" where {_print(pred, _OR)} set ({_sets_str(sets)})"
                f" valid from {_print(vf, _OR)} to {_print(vt, _PREFIX)}",
                _PREFIX,
            )
        case NonseqDelete(binder, m, pred):
            return (
                f"delete nonsequenced ({binder} <- {_print(m, _SEQ)})"
                f" where {_print(pred, _PREFIX)}",
                _PREFIX,
            )
    raise ModelError(f"cannot print {t!r}")


def _singleton_chain(t: Term):
    """Match the right-nested union-of-singletons shape bag literals parse
    into; return the element list or None."""
    elems = []
    while isinstance(t, BagUnion):
        if not isinstance(t.left, SingletonBag):
            return None
        elems.append(t.left.elem)
        t = t.right
    if not isinstance(t, SingletonBag):
        return None
    elems.append(t.elem)
    return elems


def print_term(t: Term) -> str:
    return _print(t, _SEQ)


def print_table_decl(ts: TableSchema) -> str:
    cols = ", ".join(f"{l}: {print_type(ty)}" for l, ty in ts.columns)
    out = f"table {ts.name} ({cols})"
    if ts.dialect != "plain":
        out += f" {ts.dialect}"
        if ts.period != ("start", "end"):
            out += f" using ({ts.period[0]}, {ts.period[1]})"
    return out


def print_program(prog: SourceProgram) -> str:
    lines = []
    for name in sorted(prog.schema.tables):
        lines.append(print_table_decl(prog.schema.tables[name]))
    for name, bound in prog.bindings:
        lines.append(f"let {name} = {print_term(bound)}")
    lines.append(print_term(prog.main))
    return "\n".join(lines) + "\n"
