"""Re-ranking an embedding shortlist with a chat-completion model.

The prompt enumerates the shortlisted databases with the DDL of their best
tables and asks for the three most relevant names in a fixed bracketed
format. Replies are parsed leniently (bracket grammar first, bare commas as
fallback, fuzzy name resolution) because open models rarely follow the
format to the letter. Transport or parse failure falls back to the
embedding order and records an incident instead of failing the question.
"""

import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .embedding import default_transport, text_digest
from .retrieval import RankedList, Scorer, score_db_pooled
from .schema import DatabaseSchema, render_ddl

log = logging.getLogger(__name__)

ENV_LLM_URL = "DBROUTER_LLM_URL"
ENV_LLM_MODEL = "DBROUTER_LLM_MODEL"

PREAMBLE = (
    "You are a database administrator and have designed the following "
    "databases whose names and corresponding schema is given as:"
)
INSTRUCTION = (
    "Your task is to find the names of the 3 most relevant databases to "
    "answer the given question correctly. Your response must contain 3 "
    "relevant database names in descending order of relevance in the given "
    "format: <database 1,database 2,database 3>. The first database must be "
    "most relevant to the question. Only provide the 3 database names and "
    "not any explanation."
)


class RerankError(RuntimeError):
    """Configuration, budget, or transport problems in the re-rank stage."""


class RerankParseError(RerankError):
    """No database name in the reply could be resolved; carries the raw text."""

    def __init__(self, raw_response: str):
        super().__init__(f"no resolvable database names in reply: {raw_response!r}")
        self.raw_response = raw_response


@dataclass(frozen=True)
class RerankCandidate:
    db_id: str
    tables: tuple[str, ...]
    rendered: str

    def __post_init__(self):
        if not self.tables:
            raise RerankError(f"candidate {self.db_id} has no tables")

    @classmethod
    def from_schema(cls, db: DatabaseSchema, table_names) -> "RerankCandidate":
        names = tuple(table_names)
        subset = DatabaseSchema(db_id=db.db_id, tables=tuple(db.table(n) for n in names))
        return cls(db_id=db.db_id, tables=names, rendered=render_ddl(subset))

    def drop_last_table(self, db: DatabaseSchema) -> "RerankCandidate":
        return RerankCandidate.from_schema(db, self.tables[:-1])


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    max_prompt_tokens: int = 8000
    temperature: float = 0.0
    timeout: float = 60.0
    retries: int = 3
    backoff: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if self.max_prompt_tokens < 1:
            raise RerankError("max_prompt_tokens must be at least 1")
        if self.retries < 1 or self.timeout <= 0 or self.max_in_flight < 1:
            raise RerankError("retries, timeout, max_in_flight must be positive")

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        endpoint = overrides.pop("endpoint", os.environ.get(ENV_LLM_URL, ""))
        model = overrides.pop("model", os.environ.get(ENV_LLM_MODEL, ""))
        return cls(endpoint=endpoint, model=model, **overrides)


def prompt_token_count(text: str) -> int:
    """Proxy token count: one token per 4 characters, rounded up."""
    return math.ceil(len(text) / 4)


def build_prompt(question: str, candidates: list[RerankCandidate]) -> str:
    """Fixed re-ranking template; candidate order is preserved verbatim."""
    if not candidates:
        raise RerankError("prompt needs at least one candidate")
    lines = [PREAMBLE]
    for i, cand in enumerate(candidates, start=1):
        lines.append(f"Database {i}: {cand.db_id}")
        lines.append(f"Database schema: {cand.rendered}")
    lines.append("")
    lines.append(INSTRUCTION)
    lines.append(f"Question: {question}")
    lines.append("Top-3 Ranked Databases:")
    return "\n".join(lines)


def fit_to_budget(
    candidates: list[RerankCandidate],
    max_tokens: int,
    question: str = "",
    schemas: dict[str, DatabaseSchema] | None = None,
) -> list[RerankCandidate]:
    """Shrink the candidate set until the full prompt fits the token budget.

    Tables go first, from the tail candidate inward and each candidate's
    lowest-ranked table first; then whole candidates drop from the tail. The
    top candidate always keeps its best table. `schemas` maps db_id to its
    schema for re-rendering after a table drop; omit it only when no
    trimming can occur.
    """
    if not candidates:
        raise RerankError("no candidates to fit")

    def fits(cands):
        return prompt_token_count(build_prompt(question, cands)) <= max_tokens

    work = list(candidates)
    if fits(work):
        return work
    if schemas is None:
        raise RerankError("cannot trim candidates without their schemas")
    minimal = [candidates[0] if len(candidates[0].tables) == 1
               else RerankCandidate.from_schema(schemas[candidates[0].db_id], candidates[0].tables[:1])]
    if not fits(minimal):
        raise RerankError(
            f"budget of {max_tokens} tokens cannot fit even a single-table prompt"
        )
    for idx in range(len(work) - 1, -1, -1):
        while len(work[idx].tables) > 1:
            work[idx] = work[idx].drop_last_table(schemas[work[idx].db_id])
            if fits(work):
                return work
    while len(work) > 1:
        work.pop()
        if fits(work):
            return work
    return work


_BRACKET_RE = re.compile(r"<([^<>]*)>")


def _resolve(name: str, shortlist: list[str]) -> str | None:
    if name in shortlist:
        return name
    lowered = name.casefold()
    exact_ci = [db for db in shortlist if db.casefold() == lowered]
    if len(exact_ci) == 1:
        return exact_ci[0]
    partial = [
        db for db in shortlist
        if lowered and (lowered in db.casefold() or db.casefold() in lowered)
    ]
    if len(partial) == 1:
        return partial[0]
    return None


def parse_ranking(response: str, shortlist: list[str]) -> list[str]:
    """Extract up to three shortlist ids from a model reply, padding from
    the shortlist's own order when the reply names fewer."""
    if not shortlist:
        raise RerankError("empty shortlist")
    names: list[str] = []
    for match in _BRACKET_RE.finditer(response):
        names.extend(p.strip() for p in match.group(1).split(",") if p.strip())
    if not names:
        names = [p.strip() for p in response.split(",") if p.strip()]
    want = min(3, len(shortlist))
    resolved: list[str] = []
    for name in names:
        db = _resolve(name, shortlist)
        if db is not None and db not in resolved:
            resolved.append(db)
        if len(resolved) == want:
            break
    if not resolved:
        raise RerankParseError(response)
    for db in shortlist:
        if len(resolved) == want:
            break
        if db not in resolved:
            resolved.append(db)
    return resolved


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------


class HttpLlmClient:
    """Chat-completion endpoint speaking the common JSON shape."""

    def __init__(self, cfg: LlmConfig, transport=None):
        if not cfg.endpoint or not cfg.model:
            raise RerankError("llm endpoint and model are required")
        self.cfg = cfg
        self.transport = transport or default_transport
        self._slots = threading.Semaphore(cfg.max_in_flight)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        }
        last = None
        with self._slots:
            for attempt in range(self.cfg.retries):
                if attempt:
                    time.sleep(self.cfg.backoff * (2 ** (attempt - 1)))
                try:
                    status, body = self.transport(self.cfg.endpoint, payload, self.cfg.timeout)
                except Exception as exc:
                    last = f"transport error: {exc}"
                    continue
                if status == 200:
                    try:
                        return body["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError) as exc:
                        raise RerankError(f"malformed completion body: {exc}") from exc
                last = f"status {status}: {body.get('error', body) if isinstance(body, dict) else body}"
                if 400 <= status < 500 and status != 429:
                    break
        raise RerankError(f"completion failed after {self.cfg.retries} attempts: {last}")


class FakeLlmClient:
    """Deterministic stand-in: answers from a function or a fixed string."""

    def __init__(self, reply):
        self.reply = reply
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.reply(prompt) if callable(self.reply) else self.reply


class ReplayLlmClient:
    """Replays recorded responses keyed by prompt digest."""

    def __init__(self, fixtures: list[dict]):
        self.responses = {f["prompt_digest"]: f["response"] for f in fixtures}

    def complete(self, prompt: str) -> str:
        digest = text_digest(prompt)
        if digest not in self.responses:
            raise RerankError(f"no recorded response for prompt digest {digest[:12]}")
        return self.responses[digest]


class RecordingLlmClient:
    """Wraps a live client and captures (digest, response) fixtures."""

    def __init__(self, inner):
        self.inner = inner
        self.fixtures: list[dict] = []

    def complete(self, prompt: str) -> str:
        response = self.inner.complete(prompt)
        self.fixtures.append({"prompt_digest": text_digest(prompt), "response": response})
        return response


def save_fixtures(path: str | Path, fixtures: list[dict]):
    Path(path).write_text(json.dumps(fixtures, indent=2, sort_keys=True) + "\n")


def load_fixtures(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# Incidents and the full stage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Incident:
    question_id: str
    stage: str  # "transport" or "parse"
    detail: str
    prompt_digest: str | None = None


class IncidentLog:
    def __init__(self):
        self._lock = threading.Lock()
        self._items: list[Incident] = []

    def record(self, incident: Incident):
        with self._lock:
            self._items.append(incident)

    @property
    def items(self) -> tuple[Incident, ...]:
        with self._lock:
            return tuple(self._items)


def rerank(
    question_id: str,
    question: str,
    ranked: RankedList,
    scorer: Scorer,
    cfg: LlmConfig,
    client,
    shortlist_k: int = 10,
    tables_k: int = 3,
    incidents: IncidentLog | None = None,
) -> RankedList:
    """Ask the model to reorder the embedding shortlist.

    The parsed top-3 heads the output; everything else keeps its embedding
    order so downstream metrics over the full list stay defined. On
    transport or parse failure the embedding order is returned unchanged
    (under the llm-rerank tag) and the failure is logged.
    """
    if not ranked.entries:
        raise RerankError("empty ranking cannot be re-ranked")
    shortlist = list(ranked.db_ids[:shortlist_k])
    qvec = scorer.question_vector(question)
    candidates = []
    for db_id in shortlist:
        _, top_tables = score_db_pooled(qvec, db_id, scorer.index, tables_k)
        candidates.append(RerankCandidate.from_schema(scorer.corpus.db(db_id), top_tables))
    schemas = {db_id: scorer.corpus.db(db_id) for db_id in shortlist}
    candidates = fit_to_budget(candidates, cfg.max_prompt_tokens, question, schemas)
    prompt = build_prompt(question, candidates)

    def fallback(stage: str, detail: str) -> RankedList:
        if incidents is not None:
            incidents.record(Incident(question_id, stage, detail, text_digest(prompt)))
        log.warning("rerank fell back to embedding order for %s: %s", question_id, detail)
        return _as_reciprocal(question_id, list(ranked.db_ids))

    try:
        response = client.complete(prompt)
    except RerankError as exc:
        return fallback("transport", str(exc))
    try:
        top3 = parse_ranking(response, shortlist)
    except RerankParseError as exc:
        return fallback("parse", str(exc))
    order = top3 + [db for db in ranked.db_ids if db not in top3]
    return _as_reciprocal(question_id, order)


def _as_reciprocal(question_id: str, order: list[str]) -> RankedList:
    entries = tuple((db, 1.0 / pos) for pos, db in enumerate(order, start=1))
    return RankedList(question_id, entries, "llm-rerank")
