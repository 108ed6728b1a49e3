"""Shared corpus builders for the test suite."""

import random

import pytest

from dbrouter.schema import (
    ColumnDef,
    Corpus,
    DatabaseSchema,
    DomainStatement,
    RoutingSample,
    TableSchema,
)

_TOPICS = ["orders", "flights", "albums", "patients", "matches", "loans",
           "courses", "shipments", "reviews", "permits"]


def simple_db(db_id: str, n_tables: int = 2, n_statements: int = 0,
              cluster: str | None = None) -> DatabaseSchema:
    tables = tuple(
        TableSchema(
            name=f"{db_id}_t{i}",
            columns=(
                ColumnDef(f"{db_id}_t{i} id", "INTEGER", is_primary=True),
                ColumnDef("name", "TEXT"),
                ColumnDef("amount", "REAL"),
            ),
        )
        for i in range(n_tables)
    )
    metadata = tuple(
        DomainStatement(f"{db_id}-s{i}", f"statement {i} about {db_id}")
        for i in range(n_statements)
    )
    return DatabaseSchema(db_id=db_id, tables=tables, metadata=metadata, cluster_id=cluster)


def build_corpus(
    n_train_dbs: int = 3,
    questions_per_db: int = 4,
    n_holdout_dbs: int = 1,
    holdout_questions_per_db: int = 2,
    n_statements: int = 0,
    with_sql: bool = False,
) -> Corpus:
    databases = []
    samples = []
    holdout = set()
    for i in range(n_train_dbs + n_holdout_dbs):
        db_id = f"db{i:03d}"
        is_holdout = i >= n_train_dbs
        if is_holdout:
            holdout.add(db_id)
        databases.append(simple_db(db_id, n_statements=n_statements))
        n_q = holdout_questions_per_db if is_holdout else questions_per_db
        for j in range(n_q):
            topic = _TOPICS[(i * 7 + j) % len(_TOPICS)]
            sql = f"SELECT count(*) FROM {db_id}_t{j % 2}" if with_sql else None
            evidence = (f"{db_id}-s{j % n_statements}",) if n_statements else ()
            samples.append(
                RoutingSample(
                    question_id=f"{db_id}-q{j:03d}",
                    text=f"How many {topic} does source {i} track in slot {j}?",
                    gold_db_id=db_id,
                    sql=sql,
                    evidence_ids=evidence,
                )
            )
    return Corpus(
        databases=tuple(databases),
        samples=tuple(samples),
        holdout_db_ids=frozenset(holdout),
    )


def random_corpus(rng: random.Random) -> Corpus:
    """A randomized corpus with occasional duplicate question texts."""
    n_train = rng.randint(2, 8)
    n_hold = rng.randint(0, 3)
    databases = []
    samples = []
    holdout = set()
    dup_text = "What is the total amount recorded?"
    for i in range(n_train + n_hold):
        db_id = f"r{i:03d}"
        if i >= n_train:
            holdout.add(db_id)
        databases.append(simple_db(db_id))
        for j in range(rng.randint(2, 12)):
            if i < n_train and rng.random() < 0.08:
                text = dup_text
            else:
                text = f"Question {j} for source {i} about {rng.choice(_TOPICS)}?"
            samples.append(
                RoutingSample(
                    question_id=f"{db_id}-q{j:03d}", text=text, gold_db_id=db_id
                )
            )
    return Corpus(
        databases=tuple(databases),
        samples=tuple(samples),
        holdout_db_ids=frozenset(holdout),
    )


@pytest.fixture
def small_corpus() -> Corpus:
    return build_corpus(n_train_dbs=3, questions_per_db=5, n_holdout_dbs=1)
