"""Routing splits, contrastive pair synthesis, and database subset sampling.

Builds the three question sets the engine trains and evaluates on:
train questions over the train repository, an in-repository test slice
sampled per database, and the designated held-out partition kept intact.
Also emits the line-delimited pair files used for adapter training, at
whole-schema, per-table, and domain-statement granularity.

Everything here is a pure function of (corpus, configuration, seed) and
produces bit-identical output for identical inputs.
"""

import hashlib
import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .schema import Corpus, RoutingSample, db_text, table_text

log = logging.getLogger(__name__)

PAIR_KINDS = ("schema", "table", "statement")


class DatasetError(ValueError):
    """Raised for unusable split or sampling configuration."""


class SqlExtractionError(ValueError):
    """Raised when table names cannot be extracted from a SQL string."""

    def __init__(self, message: str, question_id: str | None = None):
        self.question_id = question_id
        prefix = f"question {question_id!r}: " if question_id else ""
        super().__init__(prefix + message)


class InfeasibleSamplingError(DatasetError):
    """Raised when no subset assignment can satisfy the requested histogram."""


@dataclass(frozen=True, slots=True)
class PairExample:
    id: str
    side_a: str
    side_b: str
    label: int
    kind: str
    negative_class: str | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DatasetError(f"pair {self.id!r}: label must be 0 or 1")
        if not self.side_a or not self.side_b:
            raise DatasetError(f"pair {self.id!r}: sides must be non-empty")
        if self.kind not in PAIR_KINDS:
            raise DatasetError(f"pair {self.id!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True, slots=True)
class DbSets:
    train: frozenset[str]
    test_in: frozenset[str]
    test_out: frozenset[str]


@dataclass(frozen=True)
class RoutingDataset:
    """The three question sets plus the database sets they range over."""

    train: tuple[RoutingSample, ...]
    test_in: tuple[RoutingSample, ...]
    test_out: tuple[RoutingSample, ...]
    db_sets: DbSets
    coverage_gaps: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def check_invariants(self):
        """Verify the set algebra between the splits; raise on violation."""
        train_texts = {_norm_text(s.text) for s in self.train}
        train_ids = {s.question_id for s in self.train}
        for s in self.test_in:
            if s.question_id in train_ids or _norm_text(s.text) in train_texts:
                raise DatasetError(
                    f"in-repository test question {s.question_id!r} collides with train"
                )
        for s in self.test_out:
            if s.question_id in train_ids:
                raise DatasetError(
                    f"held-out question {s.question_id!r} appears in train"
                )
        if self.db_sets.test_in != self.db_sets.train:
            raise DatasetError("in-repository test must range over the train databases")
        if self.db_sets.test_out & self.db_sets.train:
            raise DatasetError("held-out databases overlap the train repository")
        for s in self.train + self.test_in:
            if s.gold_db_id not in self.db_sets.train:
                raise DatasetError(f"sample {s.question_id!r} outside train repository")
        for s in self.test_out:
            if s.gold_db_id not in self.db_sets.test_out:
                raise DatasetError(f"sample {s.question_id!r} outside held-out repository")


def _norm_text(text: str) -> str:
    return text.strip().casefold()


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def make_splits(corpus: Corpus, in_fraction: float, seed: int) -> RoutingDataset:
    """Split corpus questions into train / in-repository test / held-out test.

    Per train-side database, a stratified `in_fraction` share of its questions
    (round-half-up, minimum 1) moves to the in-repository test set. Questions
    whose normalized text is duplicated (under several databases or within
    one) always stay in train so that split membership is decidable from the
    text alone. The held-out partition passes through unchanged.
    """
    if not 0 < in_fraction < 1:
        raise DatasetError(f"in_fraction must be in (0, 1), got {in_fraction}")
    holdout = corpus.holdout_db_ids
    train_side = [s for s in corpus.samples if s.gold_db_id not in holdout]
    test_out = tuple(s for s in corpus.samples if s.gold_db_id in holdout)
    train_db_ids = frozenset(db.db_id for db in corpus.databases if db.db_id not in holdout)

    by_db: dict[str, list[RoutingSample]] = {}
    for s in train_side:
        by_db.setdefault(s.gold_db_id, []).append(s)
    if not any(len(v) >= 2 for v in by_db.values()):
        raise DatasetError("no train-side database has two or more questions")

    text_counts = Counter(_norm_text(s.text) for s in train_side)
    rng = random.Random(seed)
    test_in_ids: set[str] = set()
    gaps: list[str] = []
    for db_id in sorted(by_db):
        questions = sorted(by_db[db_id], key=lambda s: s.question_id)
        if len(questions) < 2:
            gaps.append(db_id)
            continue
        eligible = [s for s in questions if text_counts[_norm_text(s.text)] == 1]
        want = max(1, _round_half_up(len(questions) * in_fraction))
        take = min(want, len(eligible))
        if take == 0:
            gaps.append(db_id)
            continue
        test_in_ids.update(s.question_id for s in rng.sample(eligible, take))
    gaps.extend(sorted(train_db_ids - set(by_db)))

    train = tuple(s for s in train_side if s.question_id not in test_in_ids)
    test_in = tuple(s for s in train_side if s.question_id in test_in_ids)
    warnings = []
    train_texts = {_norm_text(s.text) for s in train}
    out_overlap = sum(1 for s in test_out if _norm_text(s.text) in train_texts)
    if out_overlap:
        warnings.append(
            f"{out_overlap} held-out question texts also occur in train (partitions kept as-is)"
        )
    dataset = RoutingDataset(
        train=train,
        test_in=test_in,
        test_out=test_out,
        db_sets=DbSets(
            train=train_db_ids,
            test_in=train_db_ids,
            test_out=frozenset(holdout),
        ),
        coverage_gaps=tuple(sorted(gaps)),
        warnings=tuple(warnings),
    )
    dataset.check_invariants()
    return dataset


# ---------------------------------------------------------------------------
# Negative sampling policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class NegativePolicy:
    """How many negatives to draw and what the sampling unit is.

    unit `question`: count negatives per question (`all` pairs each question
    with every other database). unit `db-pair`: count question draws per
    ordered (gold db, other db) pair, which makes the negative total scale
    with the square of the repository size instead of the question count.
    """

    unit: str  # "question" | "db-pair"
    count: int | None  # None means all

    @classmethod
    def parse(cls, text: str) -> "NegativePolicy":
        token = text.strip().lower()
        if token == "all":
            return cls(unit="question", count=None)
        m = re.fullmatch(r"per-question:(\d+)", token)
        if m:
            return cls(unit="question", count=int(m.group(1)))
        m = re.fullmatch(r"per-db-pair:(\d+)", token)
        if m:
            return cls(unit="db-pair", count=int(m.group(1)))
        raise DatasetError(
            f"unknown negative policy {text!r}; expected all, per-question:K, or per-db-pair:M"
        )


def _pair_id(kind: str, question_id: str, label: int, side_b: str) -> str:
    digest = hashlib.sha256(side_b.encode("utf-8")).hexdigest()[:10]
    return f"{kind}-{question_id}-{label}-{digest}"


def _finalize(pairs: list[PairExample]) -> list[PairExample]:
    pairs.sort(key=lambda p: (p.id,))
    return pairs


def gen_schema_pairs(
    dataset: RoutingDataset,
    corpus: Corpus,
    policy: str | NegativePolicy = "all",
    seed: int = 0,
) -> list[PairExample]:
    """Build <question, whole-schema text> pairs from the train split.

    One positive per question against its gold database. Negatives follow
    the policy: every other database, a per-question sample, or a fixed
    number of question draws per ordered database pair.
    """
    if not dataset.train:
        raise DatasetError("train split is empty")
    if isinstance(policy, str):
        policy = NegativePolicy.parse(policy)
    rng = random.Random(seed)
    texts = {db_id: db_text(corpus.db(db_id)) for db_id in sorted(dataset.db_sets.train)}
    pairs: list[PairExample] = []
    train = sorted(dataset.train, key=lambda s: s.question_id)
    for s in train:
        pairs.append(
            PairExample(
                id=_pair_id("schema", s.question_id, 1, texts[s.gold_db_id]),
                side_a=s.text,
                side_b=texts[s.gold_db_id],
                label=1,
                kind="schema",
            )
        )
    if policy.unit == "question":
        for s in train:
            others = [d for d in sorted(texts) if d != s.gold_db_id]
            if policy.count is not None:
                others = rng.sample(others, min(policy.count, len(others)))
            for db_id in others:
                pairs.append(
                    PairExample(
                        id=_pair_id("schema", s.question_id, 0, texts[db_id]),
                        side_a=s.text,
                        side_b=texts[db_id],
                        label=0,
                        kind="schema",
                    )
                )
    else:
        by_db: dict[str, list[RoutingSample]] = {}
        for s in train:
            by_db.setdefault(s.gold_db_id, []).append(s)
        for gold_id in sorted(by_db):
            questions = by_db[gold_id]
            for other_id in sorted(texts):
                if other_id == gold_id:
                    continue
                take = min(policy.count or 1, len(questions))
                for s in rng.sample(questions, take):
                    pairs.append(
                        PairExample(
                            id=_pair_id("schema", s.question_id, 0, texts[other_id]),
                            side_a=s.text,
                            side_b=texts[other_id],
                            label=0,
                            kind="schema",
                        )
                    )
    return _finalize(pairs)


def gen_statement_pairs(
    dataset: RoutingDataset,
    corpus: Corpus,
    hard_per_q: int = 1,
    soft_per_q: int = 2,
    seed: int = 0,
) -> list[PairExample]:
    """Build <question, domain statement> pairs from the train split.

    Positives come from each question's own evidence statements. Hard
    negatives are other statements of the gold database; soft negatives are
    statements of other databases in the train repository. Questions without
    evidence are skipped (counted in a warning).
    """
    rng = random.Random(seed)
    pairs: list[PairExample] = []
    other_pool: dict[str, list[str]] = {}
    for db_id in sorted(dataset.db_sets.train):
        other_pool[db_id] = [s.text for s in corpus.db(db_id).metadata]
    skipped = 0
    for s in sorted(dataset.train, key=lambda x: x.question_id):
        if not s.evidence_ids:
            skipped += 1
            continue
        db = corpus.db(s.gold_db_id)
        evidence_texts = [db.statement(eid).text for eid in s.evidence_ids]
        positive_set = set(evidence_texts)
        for text in evidence_texts:
            pairs.append(
                PairExample(
                    id=_pair_id("statement", s.question_id, 1, text),
                    side_a=s.text,
                    side_b=text,
                    label=1,
                    kind="statement",
                )
            )
        hard_candidates = [t.text for t in db.metadata if t.text not in positive_set]
        for text in rng.sample(hard_candidates, min(hard_per_q, len(hard_candidates))):
            pairs.append(
                PairExample(
                    id=_pair_id("statement", s.question_id, 0, text),
                    side_a=s.text,
                    side_b=text,
                    label=0,
                    kind="statement",
                    negative_class="hard",
                )
            )
        soft_candidates = []
        for db_id in sorted(other_pool):
            if db_id != s.gold_db_id:
                soft_candidates.extend(
                    t for t in other_pool[db_id] if t not in positive_set
                )
        for text in rng.sample(soft_candidates, min(soft_per_q, len(soft_candidates))):
            pairs.append(
                PairExample(
                    id=_pair_id("statement", s.question_id, 0, text),
                    side_a=s.text,
                    side_b=text,
                    label=0,
                    kind="statement",
                    negative_class="soft",
                )
            )
    if skipped:
        log.warning("statement pairs: skipped %d questions without evidence", skipped)
    return _finalize(pairs)


# ---------------------------------------------------------------------------
# SQL table extraction
# ---------------------------------------------------------------------------

_SQL_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER",
    "CROSS", "NATURAL", "ON", "USING", "AS", "AND", "OR", "NOT", "IN", "EXISTS",
    "BETWEEN", "LIKE", "GLOB", "IS", "NULL", "GROUP", "BY", "ORDER", "HAVING",
    "LIMIT", "OFFSET", "UNION", "INTERSECT", "EXCEPT", "ALL", "DISTINCT", "CASE",
    "WHEN", "THEN", "ELSE", "END", "ASC", "DESC", "CAST", "WITH",
}

# Keywords that terminate a FROM clause at its own nesting depth.
_FROM_TERMINATORS = {
    "WHERE", "GROUP", "ORDER", "HAVING", "LIMIT", "OFFSET",
    "UNION", "INTERSECT", "EXCEPT", "ON", "USING", "SELECT",
}

_TOKEN_RE = re.compile(
    r"""
    \s+
  | --[^\n]*
  | /\*.*?\*/
  | '(?:[^']|'')*'
  | "(?:[^"]|"")*"
  | `(?:[^`]|``)*`
  | \[[^\]]*\]
  | [A-Za-z_][A-Za-z0-9_$]*
  | \d+(?:\.\d+)?
  | <> | <= | >= | != | \|\|
  | .
    """,
    re.VERBOSE | re.DOTALL,
)


def _sql_tokens(sql: str):
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise SqlExtractionError(f"cannot tokenize at offset {pos}")
        pos = m.end()
        tok = m.group(0)
        if tok.isspace() or tok.startswith("--") or tok.startswith("/*"):
            continue
        if tok.startswith("'"):
            yield ("literal", tok)
        elif tok[0] in "\"`[":
            inner = tok[1:-1]
            if tok[0] == '"':
                inner = inner.replace('""', '"')
            elif tok[0] == "`":
                inner = inner.replace("``", "`")
            yield ("ident", inner)
        elif re.match(r"[A-Za-z_]", tok):
            yield ("word", tok)
        elif tok[0].isdigit():
            yield ("literal", tok)
        else:
            yield ("punct", tok)


def extract_tables_from_sql(sql: str) -> frozenset[str]:
    """Collect the table names referenced by FROM and JOIN clauses.

    Aliases are stripped, names are lowercased, and subquery FROM clauses
    contribute their tables too. Works on the SQLite dialect used by the
    public text-to-SQL releases.
    """
    if not sql or not sql.strip():
        raise SqlExtractionError("empty SQL")
    tables: set[str] = set()
    depth = 0
    from_depths: list[int] = []
    expecting_table = False
    last_was_table = False
    pending_alias = False
    tokens = list(_sql_tokens(sql))
    i = 0
    while i < len(tokens):
        kind, value = tokens[i]
        if kind == "punct":
            if value == "(":
                depth += 1
                last_was_table = False
            elif value == ")":
                depth -= 1
                if depth < 0:
                    raise SqlExtractionError("unbalanced parentheses")
                while from_depths and from_depths[-1] > depth:
                    from_depths.pop()
                expecting_table = False
                last_was_table = True  # a closed subquery may take an alias
            elif value == ",":
                if from_depths and from_depths[-1] == depth:
                    expecting_table = True
                last_was_table = False
            elif value == ".":
                last_was_table = False
            else:
                last_was_table = False
            pending_alias = False
            i += 1
            continue
        if kind == "literal":
            last_was_table = False
            pending_alias = False
            i += 1
            continue
        upper = value.upper() if kind == "word" else None
        if upper in _SQL_KEYWORDS:
            if upper == "FROM":
                from_depths.append(depth)
                expecting_table = True
            elif upper == "JOIN":
                expecting_table = True
            elif upper in _FROM_TERMINATORS:
                if from_depths and from_depths[-1] == depth and upper != "SELECT":
                    from_depths.pop()
                expecting_table = False
            elif upper == "AS":
                pending_alias = last_was_table
                i += 1
                continue
            last_was_table = False
            pending_alias = False
            i += 1
            continue
        # A plain identifier.
        if expecting_table:
            name = value
            while i + 2 < len(tokens) and tokens[i + 1] == ("punct", ".") and tokens[i + 2][0] in ("word", "ident"):
                name = tokens[i + 2][1]
                i += 2
            tables.add(name.lower())
            expecting_table = False
            last_was_table = True
        elif pending_alias or last_was_table:
            last_was_table = False
        pending_alias = False
        i += 1
    if depth != 0:
        raise SqlExtractionError("unbalanced parentheses")
    if not tables:
        raise SqlExtractionError("no table references found")
    return frozenset(tables)


def gen_table_pairs(
    dataset: RoutingDataset,
    corpus: Corpus,
    seed: int = 0,
    negatives_per_positive: int = 3,
) -> list[PairExample]:
    """Build <question, per-table text> pairs from the train split.

    Positives pair the question (with its evidences appended, newline-joined)
    against each table named by the gold SQL. Negatives pair the bare
    question with table text composed from the same database where the table
    or the attached statement is not relevant to the question.
    """
    rng = random.Random(seed)
    pairs: list[PairExample] = []
    skipped = 0
    for s in sorted(dataset.train, key=lambda x: x.question_id):
        if not s.sql:
            skipped += 1
            continue
        db = corpus.db(s.gold_db_id)
        try:
            extracted = extract_tables_from_sql(s.sql)
        except SqlExtractionError as exc:
            raise SqlExtractionError(str(exc), question_id=s.question_id) from exc
        by_lower = {t.name.lower(): t for t in db.tables}
        relevant = [by_lower[n] for n in sorted(extracted) if n in by_lower]
        unknown = extracted - set(by_lower)
        if unknown:
            log.warning(
                "question %s: SQL names unknown tables %s", s.question_id, sorted(unknown)
            )
        if not relevant:
            skipped += 1
            continue
        evidence_texts = list(corpus.evidence_texts(s))
        side_a_pos = "\n".join([s.text, *evidence_texts]) if evidence_texts else s.text
        relevant_names = {t.name for t in relevant}
        evidence_set = set(s.evidence_ids)
        for table in relevant:
            pairs.append(
                PairExample(
                    id=_pair_id("table", s.question_id, 1, table_text(table)),
                    side_a=side_a_pos,
                    side_b=table_text(table),
                    label=1,
                    kind="table",
                )
            )
        candidates = []
        for table in db.tables:
            table_ok = table.name in relevant_names
            for stmt in (None, *db.metadata):
                stmt_ok = stmt is None or stmt.statement_id in evidence_set
                if table_ok and stmt_ok:
                    continue  # fully relevant composition, not a negative
                candidates.append((table, stmt))
        take = min(negatives_per_positive * len(relevant), len(candidates))
        for table, stmt in rng.sample(candidates, take):
            side_b = table_text(table, [stmt] if stmt else [])
            pairs.append(
                PairExample(
                    id=_pair_id("table", s.question_id, 0, side_b),
                    side_a=s.text,
                    side_b=side_b,
                    label=0,
                    kind="table",
                )
            )
    if skipped:
        log.warning("table pairs: skipped %d questions without usable SQL", skipped)
    return _finalize(pairs)


# ---------------------------------------------------------------------------
# Database subset sampling for scaling and matched-vertical runs
# ---------------------------------------------------------------------------


def sample_db_subsets(
    dataset: RoutingDataset, sizes: list[int], seed: int
) -> list[frozenset[str]]:
    """Nested random database subsets over the combined test repositories.

    All requested sizes are prefixes of one seeded shuffle, so smaller sets
    are always contained in larger ones.
    """
    pool = sorted(dataset.db_sets.test_in | dataset.db_sets.test_out)
    for size in sizes:
        if size < 1 or size > len(pool):
            raise DatasetError(f"subset size {size} out of range 1..{len(pool)}")
    rng = random.Random(seed)
    rng.shuffle(pool)
    return [frozenset(pool[:size]) for size in sizes]


def sample_cluster_matched(
    dataset: RoutingDataset,
    clusters: dict[str, str],
    n_sets: int,
    seed: int,
    strict: bool = True,
    max_attempts: int = 200,
) -> list[frozenset[str]]:
    """Disjoint in-repository subsets matching the held-out cluster histogram.

    `clusters` maps database ids (both repositories) to vertical labels. The
    held-out side defines the target histogram (number of clusters and DBs
    per cluster); each returned set realizes that histogram with distinct
    in-repository clusters, and sets never share a database.

    With `strict=False`, a slot that no remaining cluster can fill is split
    across additional clusters (set sizes are preserved, the per-set cluster
    count may grow). Full-pool partitions with skewed cluster sizes are
    usually only reachable this way.
    """
    out_ids = sorted(dataset.db_sets.test_out)
    in_ids = sorted(dataset.db_sets.test_in)
    missing = [d for d in out_ids + in_ids if d not in clusters]
    if missing:
        raise DatasetError(f"clusters missing for databases: {missing[:5]}")
    reference_sizes = sorted(
        Counter(clusters[d] for d in out_ids).values(), reverse=True
    )
    if not reference_sizes:
        raise DatasetError("held-out repository is empty; no histogram to match")
    if n_sets * sum(reference_sizes) > len(in_ids):
        raise InfeasibleSamplingError(
            f"{n_sets} sets of {sum(reference_sizes)} exceed the {len(in_ids)} "
            "databases available"
        )
    pool: dict[str, list[str]] = {}
    for d in in_ids:
        pool.setdefault(clusters[d], []).append(d)

    last_blocking = reference_sizes[0]
    rng = random.Random(seed)

    def _pick(remaining, allowed, need, mode):
        if mode == "tight":
            # Tightest cluster that still fits, so large clusters stay
            # available for large slots.
            target = min(len(remaining[c]) for c in allowed)
        elif mode == "big":
            target = max(len(remaining[c]) for c in allowed)
        else:
            target = len(remaining[rng.choice(sorted(allowed))])
        top = sorted(c for c in allowed if len(remaining[c]) == target)
        cluster = rng.choice(top)
        take = min(need, target)
        picked = rng.sample(remaining[cluster], take)
        for d in picked:
            remaining[cluster].remove(d)
        return cluster, picked

    for attempt in range(max_attempts):
        mode = "tight" if attempt % 2 == 0 else "random"
        remaining = {c: sorted(members) for c, members in pool.items()}
        sets: list[frozenset[str]] = []
        failed = False
        for _ in range(n_sets):
            used_clusters: set[str] = set()
            chosen: list[str] = []
            slots = list(reference_sizes)
            idx = 0
            while idx < len(slots):
                size = slots[idx]
                candidates = [
                    c for c, members in remaining.items()
                    if c not in used_clusters and len(members) >= size
                ]
                if candidates:
                    cluster, picked = _pick(remaining, candidates, size, mode)
                elif strict:
                    last_blocking = size
                    failed = True
                    break
                else:
                    fallback = [
                        c for c, members in remaining.items()
                        if c not in used_clusters and members
                    ] or [c for c, members in remaining.items() if members]
                    if not fallback:
                        last_blocking = size
                        failed = True
                        break
                    cluster, picked = _pick(remaining, fallback, size, "big")
                    if len(picked) < size:
                        slots.append(size - len(picked))
                used_clusters.add(cluster)
                chosen.extend(picked)
                idx += 1
            if failed:
                break
            sets.append(frozenset(chosen))
        if not failed:
            return sets
    raise InfeasibleSamplingError(
        f"no assignment found for {n_sets} sets after {max_attempts} attempts; "
        f"a cluster slot of size {last_blocking} cannot be filled"
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def save_pairs(path: str | Path, pairs: list[PairExample]):
    """Write pairs as line-delimited JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            record = {
                "id": p.id,
                "side_a": p.side_a,
                "side_b": p.side_b,
                "label": p.label,
                "kind": p.kind,
            }
            if p.negative_class:
                record["negative_class"] = p.negative_class
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_pairs(path: str | Path) -> list[PairExample]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                pairs.append(
                    PairExample(
                        id=record["id"],
                        side_a=record["side_a"],
                        side_b=record["side_b"],
                        label=int(record["label"]),
                        kind=record["kind"],
                        negative_class=record.get("negative_class"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise DatasetError(f"{path}:{line_no}: bad pair record: {exc}") from exc
    return pairs


def save_splits(path: str | Path, dataset: RoutingDataset):
    payload = {
        "train": [s.question_id for s in dataset.train],
        "test_in": [s.question_id for s in dataset.test_in],
        "test_out": [s.question_id for s in dataset.test_out],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_splits(path: str | Path, corpus: Corpus) -> RoutingDataset:
    """Rebuild a RoutingDataset from a saved split file and its corpus."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    by_id = {s.question_id: s for s in corpus.samples}
    resolved: dict[str, tuple[RoutingSample, ...]] = {}
    for key in ("train", "test_in", "test_out"):
        ids = payload.get(key, [])
        missing = [q for q in ids if q not in by_id]
        if missing:
            raise DatasetError(f"split file names unknown questions: {missing[:5]}")
        resolved[key] = tuple(by_id[q] for q in ids)
    train_dbs = frozenset(
        db.db_id for db in corpus.databases if db.db_id not in corpus.holdout_db_ids
    )
    dataset = RoutingDataset(
        train=resolved["train"],
        test_in=resolved["test_in"],
        test_out=resolved["test_out"],
        db_sets=DbSets(
            train=train_dbs, test_in=train_dbs, test_out=frozenset(corpus.holdout_db_ids)
        ),
    )
    dataset.check_invariants()
    return dataset
