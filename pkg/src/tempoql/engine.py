"""Database store.

Snapshots live in `.db.json` files:

    {
      "format": "tempoql-db",
      "version": 1,
      "schema": {
        "todo": {
          "dialect": "transaction",
          "columns": [["task", "string"], ["done", "bool"]],
          "period": ["start", "end"]
        }
      },
      "tables": {
        "todo": [[{"done": true, "task": "Go shopping"}, 660, "inf", 1]]
      },
      "meta": {"clock": 1140}
    }

A plain table row is `[data, count]`; a temporal row is
`[data, start, end, count]`.  Times are integers, with the sentinels spelled
"inf" and "-inf".  Files are written with sorted keys and sorted rows, so
save after load is byte-identical and snapshots diff cleanly.

apply_atomic evaluates one term as a transaction: on a dynamic check failure
it returns an aborted Outcome carrying the original database.
"""

from __future__ import annotations

import dataclasses as dc
import hashlib
import json
from typing import Optional, Tuple

from .interp import Aborted, eval_linq, eval_tlinq, eval_vlinq
from .model import (
    BOOL,
    FOREVER,
    INT,
    STRING,
    TIME,
    BagVal,
    Base,
    ConstVal,
    Database,
    RecordVal,
    RowVal,
    Schema,
    TableSchema,
    Term,
    TqError,
    Value,
    enc_time,
    dec_time,
)

FORMAT_NAME = "tempoql-db"
FORMAT_VERSION = 1

BASES = {"int": INT, "bool": BOOL, "string": STRING, "time": TIME}


class EngineError(TqError):
    pass


# -- scalar and row encoding


def _enc_scalar(v: Value, base: Base, where: str):
    if not (isinstance(v, ConstVal) and v.tag == base.name):
        raise EngineError(f"{where}: expected a {base.name} value, got {v!r}")
    return enc_time(v.value) if base.name == "time" else v.value


def _dec_scalar(x, base: Base, where: str):
    if base.name == "time":
        try:
            return ConstVal("time", dec_time(x))
        except TqError:
            raise EngineError(f"{where}: bad time value {x!r}") from None
    ok = {
        "int": lambda: isinstance(x, int) and not isinstance(x, bool),
        "bool": lambda: isinstance(x, bool),
        "string": lambda: isinstance(x, str),
    }[base.name]()
    if not ok:
        raise EngineError(f"{where}: expected a {base.name}, got {x!r}")
    return ConstVal(base.name, x)


def _enc_data(rec: Value, ts: TableSchema, where: str) -> dict:
    if not isinstance(rec, RecordVal):
        raise EngineError(f"{where}: expected a record, got {rec!r}")
    names = tuple(n for n, _ in ts.columns)
    if rec.labels() != tuple(sorted(names)):
        raise EngineError(
            f"{where}: fields {rec.labels()} do not match columns {sorted(names)}"
        )
    return {n: _enc_scalar(rec.get(n), b, f"{where}.{n}") for n, b in ts.columns}


def _dec_data(obj, ts: TableSchema, where: str) -> RecordVal:
    if not isinstance(obj, dict):
        raise EngineError(f"{where}: expected a data object, got {obj!r}")
    names = [n for n, _ in ts.columns]
    if sorted(obj) != sorted(names):
        raise EngineError(
            f"{where}: fields {sorted(obj)} do not match columns {sorted(names)}"
        )
    return RecordVal(tuple((n, _dec_scalar(obj[n], b, f"{where}.{n}")) for n, b in ts.columns))


def _count_of(x, where: str) -> int:
    if not (isinstance(x, int) and not isinstance(x, bool)) or x < 1:
        raise EngineError(f"{where}: row count must be a positive integer, got {x!r}")
    return x


# -- schema encoding


def schema_to_jsonable(schema: Schema) -> dict:
    out = {}
    for name, ts in schema.tables.items():
        entry = {
            "dialect": ts.dialect,
            "columns": [[n, b.name] for n, b in ts.columns],
        }
        if ts.dialect != "plain":
            entry["period"] = list(ts.period)
        out[name] = entry
    return out


def schema_from_jsonable(obj) -> Schema:
    if not isinstance(obj, dict):
        raise EngineError("schema section must be an object")
    tables = {}
    for name, entry in obj.items():
        if not isinstance(entry, dict):
            raise EngineError(f"schema for {name} must be an object")
        dialect = entry.get("dialect", "plain")
        cols = entry.get("columns")
        if not isinstance(cols, list):
            raise EngineError(f"schema for {name}: columns must be a list")
        columns = []
        for c in cols:
            if not (isinstance(c, list) and len(c) == 2 and isinstance(c[0], str)):
                raise EngineError(f"schema for {name}: bad column entry {c!r}")
            cname, base = c
            if base not in BASES:
                raise EngineError(f"schema for {name}: unknown column type {base!r}")
            columns.append((cname, BASES[base]))
        period = entry.get("period", ["start", "end"])
        if not (
            isinstance(period, list)
            and len(period) == 2
            and all(isinstance(p, str) for p in period)
        ):
            raise EngineError(f"schema for {name}: bad period {period!r}")
        try:
            tables[name] = TableSchema(name, tuple(columns), dialect, tuple(period))
        except TqError as err:
            raise EngineError(f"schema for {name}: {err}") from None
    return Schema(tables)


# -- database encoding


def db_to_jsonable(schema: Schema, db: Database) -> dict:
    out = {}
    for name, ts in schema.tables.items():
        bag = db.tables.get(name, BagVal())
        rows = []
        for item, n in bag.items:
            where = f"table {name}"
            if ts.dialect == "plain":
                rows.append([_enc_data(item, ts, where), n])
            else:
                if not isinstance(item, RowVal):
                    raise EngineError(f"{where}: expected a period-stamped row")
                rows.append(
                    [
                        _enc_data(item.data, ts, where),
                        enc_time(item.start),
                        enc_time(item.end),
                        n,
                    ]
                )
        rows.sort(key=lambda r: json.dumps(r, sort_keys=True))
        out[name] = rows
    extra = set(db.tables) - set(schema.tables)
    if extra:
        raise EngineError(f"database has tables missing from the schema: {sorted(extra)}")
    return out


def db_from_jsonable(obj, schema: Schema) -> Database:
    if not isinstance(obj, dict):
        raise EngineError("tables section must be an object")
    extra = set(obj) - set(schema.tables)
    if extra:
        raise EngineError(f"tables missing from the schema: {sorted(extra)}")
    tables = {}
    for name, ts in schema.tables.items():
        rows = obj.get(name, [])
        if not isinstance(rows, list):
            raise EngineError(f"table {name} must be a list of rows")
        items = []
        for i, row in enumerate(rows):
            where = f"table {name}, row {i}"
            if ts.dialect == "plain":
                if not (isinstance(row, list) and len(row) == 2):
                    raise EngineError(f"{where}: expected [data, count]")
                data, n = row
                items.append((_dec_data(data, ts, where), _count_of(n, where)))
            else:
                if not (isinstance(row, list) and len(row) == 4):
                    raise EngineError(f"{where}: expected [data, start, end, count]")
                data, s, e, n = row
                rec = _dec_data(data, ts, where)
                try:
                    start, end = dec_time(s), dec_time(e)
                except TqError:
                    raise EngineError(f"{where}: bad period [{s!r}, {e!r})") from None
                if not start < end:
                    raise EngineError(
                        f"{where} ({json.dumps(data, sort_keys=True)}): "
                        f"period [{enc_time(start)}, {enc_time(end)}) is empty"
                    )
                items.append((RowVal(rec, start, end), _count_of(n, where)))
        tables[name] = BagVal(tuple(items))
    return Database(tables)


def dumps_snapshot(schema: Schema, db: Database, clock: Optional[int] = None) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "schema": schema_to_jsonable(schema),
        "tables": db_to_jsonable(schema, db),
        "meta": {} if clock is None else {"clock": clock},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def loads_snapshot(text: str) -> Tuple[Schema, Database, Optional[int]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise EngineError(f"snapshot is not valid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise EngineError("snapshot must be an object")
    if doc.get("format", FORMAT_NAME) != FORMAT_NAME:
        raise EngineError(f"not a {FORMAT_NAME} file")
    schema = schema_from_jsonable(doc.get("schema", {}))
    db = db_from_jsonable(doc.get("tables", {}), schema)
    meta = doc.get("meta", {})
    clock = meta.get("clock") if isinstance(meta, dict) else None
    if clock is not None and not (isinstance(clock, int) and not isinstance(clock, bool)):
        raise EngineError(f"meta.clock must be an integer, got {clock!r}")
    return schema, db, clock


def save_snapshot(path, schema: Schema, db: Database, clock: Optional[int] = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_snapshot(schema, db, clock))


def load_snapshot(path) -> Tuple[Schema, Database, Optional[int]]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise EngineError(f"cannot read {path}: {err}") from None
    return loads_snapshot(text)


def db_fingerprint(schema: Schema, db: Database) -> str:
    return hashlib.sha256(dumps_snapshot(schema, db).encode()).hexdigest()


# -- time travel


def period_contains(start: int, end: int, t: int) -> bool:
    """Closed-open membership; at the right edge of time, the open rows."""
    if t == FOREVER:
        return end == FOREVER
    return start <= t < end


def snapshot_at(db: Database, schema: Schema, table: str, t: int) -> BagVal:
    if table not in schema.tables:
        raise EngineError(f"unknown table {table}")
    ts = schema.tables[table]
    if ts.dialect == "plain":
        raise EngineError(f"table {table} has no time axis")
    bag = db.tables.get(table, BagVal())
    return BagVal(
        tuple(
            (row.data, n)
            for row, n in bag.items
            if period_contains(row.start, row.end, t)
        )
    )


def snapshot_current(db: Database, schema: Schema, table: str) -> BagVal:
    return snapshot_at(db, schema, table, FOREVER)


# -- atomic application


@dc.dataclass
class Outcome:
    value: Optional[Value]
    db: Database
    aborted: bool = False
    reason: str = ""


def apply_atomic(
    schema: Schema,
    db: Database,
    term: Term,
    clock: int,
    dialect: str = "linq",
    current: str = "desugar",
    coverage: Optional[dict] = None,
) -> Outcome:
    try:
        if dialect == "linq":
            v, db2 = eval_linq(schema, db, term, clock, coverage=coverage)
        elif dialect == "t":
            v, db2 = eval_tlinq(schema, db, term, clock, coverage=coverage)
        elif dialect == "v":
            v, db2 = eval_vlinq(schema, db, term, clock, current=current, coverage=coverage)
        else:
            raise ValueError(f"bad dialect {dialect!r}")
    except Aborted as ab:
        return Outcome(None, db, aborted=True, reason=ab.reason)
    return Outcome(v, db2)


# -- rendering


def _cell(v: Value) -> str:
    if isinstance(v, ConstVal):
        if v.tag == "bool":
            return "true" if v.value else "false"
        if v.tag == "time":
            enc = enc_time(v.value)
            return {"inf": "∞", "-inf": "-∞"}.get(enc, str(enc))
        return str(v.value)
    return repr(v)


def render_table(ts: TableSchema, bag: BagVal) -> str:
    names = [n for n, _ in ts.columns]
    headers = names + (list(ts.period) if ts.dialect != "plain" else [])
    rows = []
    for item, n in sorted(
        bag.items, key=lambda it: json.dumps(_row_key(it[0]), sort_keys=True)
    ):
        if ts.dialect == "plain":
            cells = [_cell(item.get(c)) for c in names]
        else:
            cells = [_cell(item.data.get(c)) for c in names]
            cells += [_cell(ConstVal("time", item.start)), _cell(ConstVal("time", item.end))]
        rows.extend([cells] * n)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([line(headers), rule] + [line(r) for r in rows])


def _row_key(item: Value):
    from .model import value_to_jsonable

    return value_to_jsonable(item)
