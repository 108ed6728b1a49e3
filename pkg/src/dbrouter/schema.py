"""Schema data model, DDL text rendering, and corpus ingestion.

The routing engine works over a repository of relational database schemas.
Each schema is held as plain data (tables, typed columns, key markers,
optional domain statements) and is rendered to a canonical DDL-style text
that every downstream consumer (embedding, prompting, pair synthesis)
treats as the single source of truth for "what the database looks like".

Rendering is deliberately rigid: one column per line, no indentation,
multi-word identifiers single-quoted, every column line comma-terminated.
`parse_ddl` accepts exactly the text `render_ddl` produces, so round-trips
are loss-free up to type normalization.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

CANONICAL_TYPES = ("TEXT", "INTEGER", "REAL", "DATE")

# Source-spelling synonyms for each canonical type, matched case-insensitively.
_TYPE_SYNONYMS = {
    "TEXT": {"text", "varchar", "char", "character", "string", "clob", "nvarchar"},
    "INTEGER": {"int", "integer", "number", "bigint", "smallint", "tinyint", "mediumint", "serial"},
    "REAL": {"real", "float", "double", "decimal", "numeric", "money"},
    "DATE": {"date", "datetime", "time", "timestamp", "year"},
}

_TYPE_LOOKUP = {
    spelling: canon for canon, spellings in _TYPE_SYNONYMS.items() for spelling in spellings
}

# Identifiers that render without quotes. Anything else gets single-quoted.
_BARE_NAME = re.compile(r"[A-Za-z0-9_]+")


class SchemaError(ValueError):
    """Raised for malformed schema data or manifest contents."""


class DdlParseError(SchemaError):
    """Raised when DDL text does not follow the canonical layout.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def normalize_type(raw: str) -> str:
    """Map a source column type onto the canonical enumeration.

    Known spellings collapse case-insensitively onto TEXT / INTEGER /
    REAL / DATE. Unknown spellings are preserved verbatim so that the
    rendered DDL never invents information.
    """
    token = raw.strip()
    base = token.split("(")[0].strip().lower()
    return _TYPE_LOOKUP.get(base, token if token else "TEXT")


@dataclass(frozen=True, slots=True)
class ColumnDef:
    name: str
    data_type: str
    is_primary: bool = False
    is_foreign: bool = False


@dataclass(frozen=True, slots=True)
class TableSchema:
    name: str
    columns: tuple[ColumnDef, ...]

    def __post_init__(self):
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise SchemaError(f"table {self.name!r}: duplicate column {col.name!r}")
            seen.add(key)


@dataclass(frozen=True, slots=True)
class DomainStatement:
    """A free-text fact about the database domain (e.g. curated evidence)."""

    statement_id: str
    text: str


@dataclass(frozen=True, slots=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[TableSchema, ...]
    metadata: tuple[DomainStatement, ...] = ()
    cluster_id: str | None = None

    def __post_init__(self):
        names = set()
        for t in self.tables:
            key = t.name.lower()
            if key in names:
                raise SchemaError(f"db {self.db_id!r}: duplicate table {t.name!r}")
            names.add(key)
        ids = set()
        for s in self.metadata:
            if s.statement_id in ids:
                raise SchemaError(f"db {self.db_id!r}: duplicate statement id {s.statement_id!r}")
            ids.add(s.statement_id)

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(f"db {self.db_id!r} has no table {name!r}")

    def statement(self, statement_id: str) -> DomainStatement:
        for s in self.metadata:
            if s.statement_id == statement_id:
                return s
        raise KeyError(f"db {self.db_id!r} has no statement {statement_id!r}")


@dataclass(frozen=True, slots=True)
class RoutingSample:
    """One natural-language question with its answerable database."""

    question_id: str
    text: str
    gold_db_id: str
    sql: str | None = None
    evidence_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class Corpus:
    """An immutable repository of databases plus the question samples over them.

    `holdout_db_ids` marks databases whose questions belong to the designated
    held-out partition (disjoint database set for out-of-repository tests).
    """

    databases: tuple[DatabaseSchema, ...]
    samples: tuple[RoutingSample, ...]
    holdout_db_ids: frozenset[str] = frozenset()
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for db in self.databases:
            if db.db_id in by_id:
                raise SchemaError(f"duplicate db_id {db.db_id!r}")
            by_id[db.db_id] = db
        object.__setattr__(self, "_by_id", by_id)
        qids = set()
        for s in self.samples:
            if s.question_id in qids:
                raise SchemaError(f"duplicate question_id {s.question_id!r}")
            qids.add(s.question_id)
            if s.gold_db_id not in by_id:
                raise SchemaError(
                    f"sample {s.question_id!r} references unknown db {s.gold_db_id!r}"
                )
            db = by_id[s.gold_db_id]
            known = {st.statement_id for st in db.metadata}
            for eid in s.evidence_ids:
                if eid not in known:
                    raise SchemaError(
                        f"sample {s.question_id!r} references unknown statement {eid!r}"
                    )
        for db_id in self.holdout_db_ids:
            if db_id not in by_id:
                raise SchemaError(f"holdout partition names unknown db {db_id!r}")

    def db(self, db_id: str) -> DatabaseSchema:
        try:
            return self._by_id[db_id]
        except KeyError:
            raise KeyError(f"unknown db_id {db_id!r}") from None

    @property
    def db_ids(self) -> tuple[str, ...]:
        return tuple(db.db_id for db in self.databases)

    def samples_for(self, db_id: str) -> tuple[RoutingSample, ...]:
        return tuple(s for s in self.samples if s.gold_db_id == db_id)

    def evidence_texts(self, sample: RoutingSample) -> tuple[str, ...]:
        db = self.db(sample.gold_db_id)
        return tuple(db.statement(eid).text for eid in sample.evidence_ids)


# ---------------------------------------------------------------------------
# DDL text rendering
# ---------------------------------------------------------------------------


def _render_name(name: str) -> str:
    if _BARE_NAME.fullmatch(name):
        return name
    return "'" + name.replace("'", "''") + "'"


def render_ddl(db: DatabaseSchema) -> str:
    """Render every table of `db` as canonical CREATE TABLE text.

    One statement per table, one column per line, lines comma-terminated,
    statements joined by a single newline, no trailing newline.
    """
    blocks = []
    for table in db.tables:
        lines = [f"CREATE TABLE {_render_name(table.name)} ("]
        for col in table.columns:
            part = f"{_render_name(col.name)} {col.data_type}"
            if col.is_primary:
                part += " PRIMARY KEY"
            if col.is_foreign:
                part += " FOREIGN KEY"
            lines.append(part + ",")
        lines.append(");")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def render_table_ddl(table: TableSchema) -> str:
    """Render a single table as its CREATE TABLE block."""
    return render_ddl(DatabaseSchema(db_id="_", tables=(table,)))


def db_text(db: DatabaseSchema) -> str:
    """Whole-schema text used for embedding: the db name then its DDL."""
    return db.db_id + "\n" + render_ddl(db)


def table_text(table: TableSchema, statements: list[DomainStatement] | tuple = ()) -> str:
    """Per-table text: any contextual statements first, then the table DDL."""
    parts = [s.text + "\n" for s in statements]
    parts.append(render_table_ddl(table))
    return "".join(parts)


_CREATE_RE = re.compile(r"CREATE TABLE (.+) \($")
_QUOTED_RE = re.compile(r"'((?:[^']|'')*)'")


def _parse_name(chunk: str, line_no: int) -> tuple[str, str]:
    """Split a quoted or bare identifier off the front of `chunk`."""
    if chunk.startswith("'"):
        m = _QUOTED_RE.match(chunk)
        if not m:
            raise DdlParseError("unterminated quoted identifier", line_no)
        return m.group(1).replace("''", "'"), chunk[m.end():]
    token = chunk.split(" ", 1)[0]
    if not token:
        raise DdlParseError("missing identifier", line_no)
    return token, chunk[len(token):]


def parse_ddl(text: str, db_id: str = "parsed") -> DatabaseSchema:
    """Parse canonical DDL text back into a DatabaseSchema.

    Only the exact layout produced by `render_ddl` is accepted; anything
    else raises DdlParseError naming the offending line.
    """
    tables: list[TableSchema] = []
    current_name: str | None = None
    current_cols: list[ColumnDef] = []
    open_line = 0
    for line_no, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        if current_name is None:
            m = _CREATE_RE.fullmatch(line)
            if not m:
                raise DdlParseError("expected CREATE TABLE <name> (", line_no)
            raw = m.group(1)
            if raw.startswith("'"):
                qm = _QUOTED_RE.fullmatch(raw)
                if not qm:
                    raise DdlParseError("bad table name quoting", line_no)
                current_name = qm.group(1).replace("''", "'")
            else:
                current_name = raw
            current_cols = []
            open_line = line_no
            continue
        if line == ");":
            try:
                tables.append(TableSchema(name=current_name, columns=tuple(current_cols)))
            except SchemaError as exc:
                raise DdlParseError(str(exc), open_line) from exc
            current_name = None
            continue
        if not line.endswith(","):
            raise DdlParseError("column line must end with a comma", line_no)
        name, rest = _parse_name(line[:-1], line_no)
        tokens = rest.split()
        primary = foreign = False
        while tokens[-2:] in (["PRIMARY", "KEY"], ["FOREIGN", "KEY"]):
            if tokens[-2] == "PRIMARY":
                primary = True
            else:
                foreign = True
            tokens = tokens[:-2]
        if not tokens:
            raise DdlParseError(f"column {name!r} has no type", line_no)
        current_cols.append(
            ColumnDef(
                name=name,
                data_type=normalize_type(" ".join(tokens)),
                is_primary=primary,
                is_foreign=foreign,
            )
        )
    if current_name is not None:
        raise DdlParseError("unterminated CREATE TABLE block", open_line)
    if not tables:
        raise DdlParseError("no CREATE TABLE statements found", 1)
    seen = set()
    for t in tables:
        if t.name.lower() in seen:
            raise DdlParseError(f"duplicate table {t.name!r}", 1)
        seen.add(t.name.lower())
    return DatabaseSchema(db_id=db_id, tables=tuple(tables))


# ---------------------------------------------------------------------------
# Manifest ingestion
# ---------------------------------------------------------------------------

DATABASES_FILE = "databases.json"
SAMPLES_FILE = "samples.json"


def _require(cond: bool, msg: str):
    if not cond:
        raise SchemaError(msg)


def _load_database(entry: dict) -> tuple[DatabaseSchema, str | None]:
    _require(isinstance(entry.get("db_id"), str) and entry["db_id"], "db entry needs a db_id")
    db_id = entry["db_id"]
    tables = []
    for t in entry.get("tables", []):
        _require(isinstance(t.get("name"), str) and t["name"], f"db {db_id!r}: table needs a name")
        cols = tuple(
            ColumnDef(
                name=c["name"],
                data_type=normalize_type(str(c.get("type", "text"))),
                is_primary=bool(c.get("primary", False)),
                is_foreign=bool(c.get("foreign", False)),
            )
            for c in t.get("columns", [])
        )
        _require(len(cols) > 0, f"db {db_id!r}: table {t['name']!r} has no columns")
        tables.append(TableSchema(name=t["name"], columns=cols))
    _require(len(tables) > 0, f"db {db_id!r} has no tables")
    metadata = tuple(
        DomainStatement(statement_id=s["id"], text=s["text"])
        for s in entry.get("metadata", [])
    )
    partition = entry.get("partition")
    if partition is not None:
        _require(partition in ("train", "holdout"), f"db {db_id!r}: bad partition {partition!r}")
    return (
        DatabaseSchema(
            db_id=db_id,
            tables=tuple(tables),
            metadata=metadata,
            cluster_id=entry.get("cluster"),
        ),
        partition,
    )


def _load_sample(entry: dict) -> RoutingSample:
    for key in ("question_id", "text", "gold_db_id"):
        _require(isinstance(entry.get(key), str) and entry[key].strip() != "", f"sample needs {key}")
    return RoutingSample(
        question_id=entry["question_id"],
        text=entry["text"],
        gold_db_id=entry["gold_db_id"],
        sql=entry.get("sql"),
        evidence_ids=tuple(entry.get("evidence_ids", [])),
    )


def ingest_corpus(manifest_dir: str | Path) -> Corpus:
    """Load and validate a corpus manifest directory.

    The directory holds `databases.json` and `samples.json`. Referential
    integrity (gold db ids, evidence ids) is checked here so that every
    later stage can assume a well-formed corpus.
    """
    root = Path(manifest_dir)
    for fname in (DATABASES_FILE, SAMPLES_FILE):
        if not (root / fname).is_file():
            raise SchemaError(f"manifest is missing {fname} under {root}")
    with open(root / DATABASES_FILE, encoding="utf-8") as fh:
        db_entries = json.load(fh)
    with open(root / SAMPLES_FILE, encoding="utf-8") as fh:
        sample_entries = json.load(fh)
    _require(isinstance(db_entries, list), f"{DATABASES_FILE} must hold a list")
    _require(isinstance(sample_entries, list), f"{SAMPLES_FILE} must hold a list")
    databases = []
    holdout = set()
    for entry in db_entries:
        db, partition = _load_database(entry)
        databases.append(db)
        if partition == "holdout":
            holdout.add(db.db_id)
    samples = tuple(_load_sample(e) for e in sample_entries)
    return Corpus(
        databases=tuple(databases),
        samples=samples,
        holdout_db_ids=frozenset(holdout),
    )


def write_manifest(manifest_dir: str | Path, databases: list[dict], samples: list[dict]):
    """Write manifest JSON files (UTF-8, stable key order)."""
    root = Path(manifest_dir)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / DATABASES_FILE, "w", encoding="utf-8") as fh:
        json.dump(databases, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")
    with open(root / SAMPLES_FILE, "w", encoding="utf-8") as fh:
        json.dump(samples, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Converters for the two public text-to-SQL releases
# ---------------------------------------------------------------------------


def _tables_json_to_entries(tables_json: list[dict], partition: str,
                            clusters: dict | None = None) -> list[dict]:
    entries = []
    for spec in tables_json:
        db_id = spec["db_id"]
        names = spec["table_names_original"]
        col_specs = spec["column_names_original"]
        col_types = spec["column_types"]
        primaries = set(spec.get("primary_keys", []))
        flat_primaries = set()
        for p in primaries:
            if isinstance(p, list):
                flat_primaries.update(p)
            else:
                flat_primaries.add(p)
        foreigns = {fk[0] for fk in spec.get("foreign_keys", [])}
        tables: list[dict] = [{"name": n, "columns": []} for n in names]
        for idx, (tbl_idx, col_name) in enumerate(col_specs):
            if tbl_idx < 0:
                continue
            tables[tbl_idx]["columns"].append(
                {
                    "name": col_name,
                    "type": col_types[idx],
                    "primary": idx in flat_primaries,
                    "foreign": idx in foreigns,
                }
            )
        entry = {"db_id": db_id, "partition": partition, "tables": tables}
        if clusters and db_id in clusters:
            entry["cluster"] = clusters[db_id]
        entries.append(entry)
    return entries


def convert_spider(release_dir: str | Path, clusters: dict | None = None) -> tuple[list[dict], list[dict]]:
    """Convert a Spider release directory into manifest payloads.

    Training questions map onto the train partition; the dev questions and
    their databases form the held-out partition.

    Returns:
        (databases, samples) lists ready for `write_manifest`.
    """
    root = Path(release_dir)
    with open(root / "tables.json", encoding="utf-8") as fh:
        all_tables = json.load(fh)
    with open(root / "train_spider.json", encoding="utf-8") as fh:
        train_qs = json.load(fh)
    with open(root / "dev.json", encoding="utf-8") as fh:
        dev_qs = json.load(fh)
    dev_dbs = {q["db_id"] for q in dev_qs}
    train_dbs = {q["db_id"] for q in train_qs}
    overlap = dev_dbs & train_dbs
    if overlap:
        raise SchemaError(f"partitions share databases: {sorted(overlap)[:5]}")
    databases = []
    for spec in all_tables:
        if spec["db_id"] in dev_dbs:
            databases.extend(_tables_json_to_entries([spec], "holdout", clusters))
        elif spec["db_id"] in train_dbs:
            databases.extend(_tables_json_to_entries([spec], "train", clusters))
    samples = []
    for prefix, questions in (("spider-train", train_qs), ("spider-dev", dev_qs)):
        for i, q in enumerate(questions):
            samples.append(
                {
                    "question_id": f"{prefix}-{i:04d}",
                    "text": q["question"],
                    "gold_db_id": q["db_id"],
                    "sql": q["query"],
                }
            )
    return databases, samples


def _first_existing(root: Path, candidates: list[str]) -> Path:
    for rel in candidates:
        p = root / rel
        if p.is_file():
            return p
    raise SchemaError(f"none of {candidates} found under {root}")


def convert_bird(release_dir: str | Path, clusters: dict | None = None) -> tuple[list[dict], list[dict]]:
    """Convert a BIRD release directory into manifest payloads.

    Question-specific evidence strings are deduplicated into per-database
    domain statements; each sample keeps pointers to its statements.
    """
    root = Path(release_dir)
    train_tables = _first_existing(root, ["train/train_tables.json", "train_tables.json"])
    train_json = _first_existing(root, ["train/train.json", "train.json"])
    dev_tables = _first_existing(root, ["dev/dev_tables.json", "dev_tables.json"])
    dev_json = _first_existing(root, ["dev/dev.json", "dev.json"])
    with open(train_tables, encoding="utf-8") as fh:
        train_specs = json.load(fh)
    with open(dev_tables, encoding="utf-8") as fh:
        dev_specs = json.load(fh)
    with open(train_json, encoding="utf-8") as fh:
        train_qs = json.load(fh)
    with open(dev_json, encoding="utf-8") as fh:
        dev_qs = json.load(fh)
    databases = _tables_json_to_entries(train_specs, "train", clusters)
    databases += _tables_json_to_entries(dev_specs, "holdout", clusters)
    by_id = {d["db_id"]: d for d in databases}

    statement_ids: dict[str, dict[str, str]] = {}

    def _statement_id(db_id: str, evidence: str) -> str:
        per_db = statement_ids.setdefault(db_id, {})
        if evidence not in per_db:
            sid = f"{db_id}-s{len(per_db):04d}"
            per_db[evidence] = sid
            by_id[db_id].setdefault("metadata", []).append({"id": sid, "text": evidence})
        return per_db[evidence]

    samples = []
    for prefix, questions in (("bird-train", train_qs), ("bird-dev", dev_qs)):
        for i, q in enumerate(questions):
            db_id = q["db_id"]
            entry = {
                "question_id": f"{prefix}-{i:04d}",
                "text": q["question"],
                "gold_db_id": db_id,
                "sql": q.get("SQL") or q.get("sql"),
            }
            evidence = (q.get("evidence") or "").strip()
            if evidence and db_id in by_id:
                entry["evidence_ids"] = [_statement_id(db_id, evidence)]
            samples.append(entry)
    return databases, samples
