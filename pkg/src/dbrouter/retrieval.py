"""Vector index over database repositories and the ranking strategies.

A RepositoryIndex holds embeddings at three granularities: one vector per
database (its name plus full DDL), one per table, and one per domain
statement. Ranking pools per-table cosines (mean of the top k) or compares
against the whole-schema vector directly; statement retrieval lets table
vectors be re-embedded with question-relevant context on demand.

Indexes are immutable once built and safe to share across threads. The file
format is a length-prefixed JSON header followed by little-endian float32
rows in header order, so identical inputs rebuild byte-identical files.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import LinearAdapter, apply_adapter
from .embedding import (
    EmbeddingCache,
    EmbeddingError,
    ProviderConfig,
    cosine,
    embed_batch,
    provider_identity,
)
from .schema import Corpus, db_text, table_text

log = logging.getLogger(__name__)

STRATEGIES = ("whole-schema", "pooled-tables", "pooled-tables+metadata", "llm-rerank")

INDEX_MAGIC = b"DBRI"


class RetrievalError(RuntimeError):
    """Raised for missing vectors, bad strategies, or index file damage."""


@dataclass(frozen=True, eq=False)
class RepositoryIndex:
    provider_id: str
    adapter_digest: str | None
    dim: int
    db_ids: tuple[str, ...]
    db_vectors: dict[str, np.ndarray]
    table_vectors: dict[tuple[str, str], np.ndarray]
    statement_vectors: dict[tuple[str, str], np.ndarray]

    def __post_init__(self):
        if not self.db_ids:
            raise RetrievalError("index covers no databases")
        for name, vec in self._all_vectors():
            if vec.shape != (self.dim,):
                raise RetrievalError(f"vector {name} has dim {vec.shape}, expected ({self.dim},)")
        tabled = {db for db, _ in self.table_vectors}
        for db in self.db_ids:
            if db not in self.db_vectors and db not in tabled:
                raise RetrievalError(f"{db} has neither a whole-schema nor table vectors")

    def _all_vectors(self):
        for db, vec in self.db_vectors.items():
            yield f"db:{db}", vec
        for key, vec in self.table_vectors.items():
            yield f"table:{key[0]}.{key[1]}", vec
        for key, vec in self.statement_vectors.items():
            yield f"statement:{key[0]}.{key[1]}", vec

    @property
    def granularities(self) -> tuple[str, ...]:
        out = []
        if self.db_vectors:
            out.append("whole")
        if self.table_vectors:
            out.append("tables")
        if self.statement_vectors:
            out.append("statements")
        return tuple(out)

    def tables_of(self, db_id: str) -> list[str]:
        return [t for d, t in self.table_vectors if d == db_id]

    def statements_of(self, db_id: str) -> list[str]:
        return [s for d, s in self.statement_vectors if d == db_id]


@dataclass(frozen=True)
class RankedList:
    question_id: str
    entries: tuple[tuple[str, float], ...]
    strategy: str

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise RetrievalError(f"unknown strategy {self.strategy!r}")
        seen = set()
        prev = None
        for db_id, score in self.entries:
            if db_id in seen:
                raise RetrievalError(f"duplicate db in ranking: {db_id}")
            seen.add(db_id)
            if prev is not None and score > prev + 1e-12:
                raise RetrievalError("ranking scores must be non-increasing")
            prev = score

    @property
    def db_ids(self) -> tuple[str, ...]:
        return tuple(db for db, _ in self.entries)

    def top(self, k: int) -> "RankedList":
        return RankedList(self.question_id, self.entries[:k], self.strategy)

    def rank_of(self, db_id: str) -> int | None:
        """1-based position, None if absent."""
        for pos, (db, _) in enumerate(self.entries, start=1):
            if db == db_id:
                return pos
        return None


def _order_entries(scores: dict[str, float]) -> tuple[tuple[str, float], ...]:
    return tuple(sorted(scores.items(), key=lambda kv: (-kv[1], kv[0])))


def build_index(
    corpus: Corpus,
    provider: ProviderConfig,
    adapter: LinearAdapter | None = None,
    include_whole: bool = True,
    include_tables: bool = True,
    include_statements: bool = True,
    cache: EmbeddingCache | None = None,
    transport=None,
) -> RepositoryIndex:
    """Embed every requested granularity for every database in the corpus.

    Vector order is fixed (sorted db ids, schema order within a db), so two
    builds from the same inputs are identical.
    """
    if not (include_whole or include_tables):
        raise RetrievalError("index needs at least one of whole-schema or table vectors")
    db_ids = tuple(sorted(corpus.db_ids))
    texts: list[str] = []
    slots: list[tuple[str, ...]] = []
    for db_id in db_ids:
        db = corpus.db(db_id)
        if include_whole:
            texts.append(db_text(db))
            slots.append(("db", db_id))
        if include_tables:
            for table in db.tables:
                texts.append(table_text(table))
                slots.append(("table", db_id, table.name))
        if include_statements:
            for stmt in db.metadata:
                texts.append(stmt.text)
                slots.append(("statement", db_id, stmt.statement_id))
    try:
        raw = embed_batch(texts, provider, cache=cache, transport=transport)
    except EmbeddingError as exc:
        culprit = _locate_failure(texts, slots, provider, cache, transport)
        raise RetrievalError(f"embedding failed at {culprit}: {exc}") from exc

    vectors = []
    for item in raw:
        vec = item.values
        if adapter is not None:
            vec = apply_adapter(adapter, vec)
        vectors.append(vec)

    db_vecs: dict[str, np.ndarray] = {}
    table_vecs: dict[tuple[str, str], np.ndarray] = {}
    stmt_vecs: dict[tuple[str, str], np.ndarray] = {}
    for slot, vec in zip(slots, vectors):
        if slot[0] == "db":
            db_vecs[slot[1]] = vec
        elif slot[0] == "table":
            table_vecs[(slot[1], slot[2])] = vec
        else:
            stmt_vecs[(slot[1], slot[2])] = vec
    return RepositoryIndex(
        provider_id=provider_identity(provider),
        adapter_digest=adapter.digest if adapter else None,
        dim=vectors[0].shape[0] if vectors else provider.dim,
        db_ids=db_ids,
        db_vectors=db_vecs,
        table_vectors=table_vecs,
        statement_vectors=stmt_vecs,
    )


def _locate_failure(texts, slots, provider, cache, transport) -> str:
    """Bisect to the first text the provider rejects, for the error message."""
    for text, slot in zip(texts, slots):
        try:
            embed_batch([text], provider, cache=cache, transport=transport)
        except EmbeddingError:
            return ":".join(slot)
    return "unknown text"


def retrieve_statements(
    question_vec: np.ndarray, db_id: str, index: RepositoryIndex, k: int = 3
) -> list[tuple[str, float]]:
    """Top-k domain statements of one DB by cosine; empty if the DB has none."""
    if k < 1:
        raise RetrievalError("k must be at least 1")
    scored = [
        (sid, cosine(question_vec, index.statement_vectors[(db_id, sid)]))
        for sid in index.statements_of(db_id)
    ]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return scored[:k]


def score_db_whole(question_vec: np.ndarray, db_id: str, index: RepositoryIndex) -> float:
    vec = index.db_vectors.get(db_id)
    if vec is None:
        raise RetrievalError(f"no whole-schema vector for {db_id}")
    return cosine(question_vec, vec)


def score_db_pooled(
    question_vec: np.ndarray,
    db_id: str,
    index: RepositoryIndex,
    k: int = 3,
    table_vectors: dict[str, np.ndarray] | None = None,
) -> tuple[float, tuple[str, ...]]:
    """Mean of the k best table cosines plus the contributing table names.

    DBs with fewer than k tables pool over everything they have. Pass
    `table_vectors` to score against question-contextualized replacements
    instead of the stored ones.
    """
    if table_vectors is None:
        names = index.tables_of(db_id)
        table_vectors = {t: index.table_vectors[(db_id, t)] for t in names}
    if not table_vectors:
        raise RetrievalError(f"no table vectors for {db_id}")
    sims = sorted(
        ((name, cosine(question_vec, vec)) for name, vec in table_vectors.items()),
        key=lambda e: (-e[1], e[0]),
    )
    top = sims[:k]
    score = float(np.mean([s for _, s in top]))
    return score, tuple(name for name, _ in top)


@dataclass
class Scorer:
    """Binds a corpus, its index, and the embedding pipeline for ranking.

    The index is treated as read-only; contextualized table vectors are
    recomputed per question and deduplicated through the embedding cache.
    """

    corpus: Corpus
    index: RepositoryIndex
    provider: ProviderConfig
    adapter: LinearAdapter | None = None
    cache: EmbeddingCache | None = None
    transport: object = None
    pool_k: int = 3
    statements_k: int = 3

    def __post_init__(self):
        want = provider_identity(self.provider)
        if self.index.provider_id != want:
            raise RetrievalError(
                f"index built with {self.index.provider_id}, scorer configured for {want}"
            )
        have = self.adapter.digest if self.adapter else None
        if self.index.adapter_digest != have:
            raise RetrievalError("index adapter does not match scorer adapter")

    def _embed(self, texts: list[str]) -> list[np.ndarray]:
        raw = embed_batch(texts, self.provider, cache=self.cache, transport=self.transport)
        if self.adapter is None:
            return [v.values for v in raw]
        return [apply_adapter(self.adapter, v.values) for v in raw]

    def question_vector(self, text: str) -> np.ndarray:
        return self._embed([text])[0]

    def _contextual_tables(
        self, question_vec: np.ndarray, db_ids: list[str]
    ) -> dict[str, dict[str, np.ndarray]]:
        """Re-embed each DB's tables with that question's retrieved statements."""
        plans: list[tuple[str, str]] = []
        texts: list[str] = []
        for db_id in db_ids:
            db = self.corpus.db(db_id)
            hits = retrieve_statements(question_vec, db_id, self.index, self.statements_k)
            stmts = [db.statement(sid) for sid, _ in hits]
            for table in db.tables:
                plans.append((db_id, table.name))
                texts.append(table_text(table, stmts))
        vectors = self._embed(texts)
        out: dict[str, dict[str, np.ndarray]] = {db_id: {} for db_id in db_ids}
        for (db_id, name), vec in zip(plans, vectors):
            out[db_id][name] = vec
        return out

    def pooled_details(
        self, question_text: str, db_ids: list[str] | None = None, use_metadata: bool = False
    ) -> dict[str, tuple[float, tuple[str, ...]]]:
        """Pooled score and top tables per DB, for ranking and re-ranking."""
        scope = list(db_ids) if db_ids is not None else list(self.index.db_ids)
        qvec = self.question_vector(question_text)
        overrides = self._contextual_tables(qvec, scope) if use_metadata else {}
        return {
            db_id: score_db_pooled(
                qvec, db_id, self.index, self.pool_k, overrides.get(db_id)
            )
            for db_id in scope
        }

    def rank_databases(
        self,
        question_id: str,
        question_text: str,
        strategy: str = "pooled-tables",
        db_ids: list[str] | None = None,
        top_k: int | None = None,
    ) -> RankedList:
        """Score every DB in scope and sort, ties by ascending db_id."""
        scope = list(db_ids) if db_ids is not None else list(self.index.db_ids)
        if not scope:
            raise RetrievalError("no databases to rank")
        missing = [d for d in scope if d not in set(self.index.db_ids)]
        if missing:
            raise RetrievalError(f"not in index: {', '.join(sorted(missing))}")
        if strategy == "whole-schema":
            qvec = self.question_vector(question_text)
            scores = {d: score_db_whole(qvec, d, self.index) for d in scope}
        elif strategy == "pooled-tables":
            details = self.pooled_details(question_text, scope, use_metadata=False)
            scores = {d: s for d, (s, _) in details.items()}
        elif strategy == "pooled-tables+metadata":
            details = self.pooled_details(question_text, scope, use_metadata=True)
            scores = {d: s for d, (s, _) in details.items()}
        else:
            raise RetrievalError(
                f"strategy {strategy!r} is not scored here"
                if strategy in STRATEGIES
                else f"unknown strategy {strategy!r}"
            )
        ranked = RankedList(question_id, _order_entries(scores), strategy)
        return ranked.top(top_k) if top_k is not None else ranked


# ---------------------------------------------------------------------------
# Index file: length-prefixed JSON header, then float32 rows in header order
# ---------------------------------------------------------------------------


def save_index(path: str | Path, index: RepositoryIndex):
    order: list[np.ndarray] = []
    header = {
        "format": 1,
        "provider": index.provider_id,
        "adapter": index.adapter_digest,
        "dim": index.dim,
        "granularities": list(index.granularities),
        "db_ids": list(index.db_ids),
        "dbs": [],
        "tables": [],
        "statements": [],
    }
    for db, vec in index.db_vectors.items():
        header["dbs"].append(db)
        order.append(vec)
    for (db, table), vec in index.table_vectors.items():
        header["tables"].append([db, table])
        order.append(vec)
    for (db, sid), vec in index.statement_vectors.items():
        header["statements"].append([db, sid])
        order.append(vec)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for vec in order:
            fh.write(vec.astype("<f4").tobytes())


def load_index(path: str | Path) -> RepositoryIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != INDEX_MAGIC:
            raise RetrievalError(f"{path}: not an index file")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode("utf-8"))
        payload = fh.read()
    dim = header["dim"]
    rows = len(header["dbs"]) + len(header["tables"]) + len(header["statements"])
    expected = rows * dim * 4
    if len(payload) != expected:
        raise RetrievalError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    matrix = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(rows, dim)
    cursor = 0
    db_vecs = {}
    for db in header["dbs"]:
        db_vecs[db] = matrix[cursor]
        cursor += 1
    table_vecs = {}
    for db, table in header["tables"]:
        table_vecs[(db, table)] = matrix[cursor]
        cursor += 1
    stmt_vecs = {}
    for db, sid in header["statements"]:
        stmt_vecs[(db, sid)] = matrix[cursor]
        cursor += 1
    return RepositoryIndex(
        provider_id=header["provider"],
        adapter_digest=header["adapter"],
        dim=dim,
        db_ids=tuple(header["db_ids"]),
        db_vectors=db_vecs,
        table_vectors=table_vecs,
        statement_vectors=stmt_vecs,
    )
