"""HTTP routing service over a built index.

The service loads a corpus manifest plus an index file, binds them into a
Scorer, and answers routing questions until told to hot-swap the index. A
swap builds the replacement scorer off to the side and publishes it with a
single reference assignment, so in-flight requests keep the scorer they
started with and later requests see only the new one.
"""

import logging
import threading
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .adapter import LinearAdapter, load_adapter
from .embedding import EmbeddingCache, EmbeddingError, ProviderConfig
from .rerank import HttpLlmClient, IncidentLog, LlmConfig, RerankError, rerank
from .retrieval import (
    STRATEGIES,
    RankedList,
    RetrievalError,
    Scorer,
    load_index,
)
from .schema import SchemaError, ingest_corpus

log = logging.getLogger(__name__)


class ServiceError(RuntimeError):
    """Bad service configuration or startup state."""


@dataclass(frozen=True)
class ServiceConfig:
    manifest_dir: str
    index_path: str
    host: str = "127.0.0.1"
    port: int = 8080
    strategy: str = "pooled-tables"
    top_k: int = 3
    provider: ProviderConfig = ProviderConfig()
    llm: LlmConfig | None = None
    adapter_path: str | None = None
    cache_path: str | None = None
    request_timeout: float = 30.0
    max_concurrent: int = 8

    def __post_init__(self):
        if self.top_k < 1:
            raise ServiceError("top_k must be at least 1")
        if self.max_concurrent < 1 or self.request_timeout <= 0:
            raise ServiceError("max_concurrent and request_timeout must be positive")
        if self.strategy not in STRATEGIES:
            raise ServiceError(f"unknown strategy {self.strategy!r}")


class RouterState:
    """Shared, swappable scorer. Readers take one reference per request."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self._swap_lock = threading.Lock()
        self._slots = threading.Semaphore(cfg.max_concurrent)
        self.incidents = IncidentLog()
        self.llm_client = None
        if cfg.llm is not None and cfg.llm.endpoint:
            self.llm_client = HttpLlmClient(cfg.llm)
        self.scorer = self._build_scorer(cfg.index_path)

    def _build_scorer(self, index_path: str) -> Scorer:
        corpus = ingest_corpus(self.cfg.manifest_dir)
        index = load_index(index_path)
        adapter: LinearAdapter | None = None
        if self.cfg.adapter_path:
            adapter = load_adapter(self.cfg.adapter_path)
        cache = EmbeddingCache(self.cfg.cache_path) if self.cfg.cache_path else None
        return Scorer(
            corpus=corpus,
            index=index,
            provider=self.cfg.provider,
            adapter=adapter,
            cache=cache,
        )

    def swap(self, index_path: str | None = None) -> Scorer:
        """Serialized rebuild; the reference flip itself is atomic."""
        with self._swap_lock:
            path = index_path or self.cfg.index_path
            replacement = self._build_scorer(path)
            self.scorer = replacement
            log.info("index swapped from %s (%d databases)", path, len(replacement.index.db_ids))
            return replacement

    def slot(self):
        return self._slots


class RouteRequest(BaseModel):
    question: str
    top_k: int | None = None
    strategy: str | None = None


class ReloadRequest(BaseModel):
    index_path: str | None = None


def create_app(state: RouterState) -> FastAPI:
    app = FastAPI(title="dbrouter", version="0.1.0")
    app.state.router = state

    @app.get("/healthz")
    def healthz():
        scorer = state.scorer
        return {
            "status": "ok",
            "databases": len(scorer.index.db_ids),
            "strategy": state.cfg.strategy,
            "provider": scorer.index.provider_id,
        }

    @app.get("/v1/databases")
    def databases():
        scorer = state.scorer
        listing = [
            {
                "db_id": db.db_id,
                "tables": len(db.tables),
                "statements": len(db.metadata),
                "cluster": db.cluster_id,
            }
            for db in sorted(scorer.corpus.databases, key=lambda d: d.db_id)
        ]
        return {"databases": listing}

    @app.post("/v1/route")
    def route(req: RouteRequest):
        question = req.question.strip()
        if not question:
            raise HTTPException(status_code=400, detail="question must not be empty")
        strategy = req.strategy or state.cfg.strategy
        if strategy not in STRATEGIES:
            raise HTTPException(status_code=400, detail=f"unknown strategy {strategy!r}")
        top_k = req.top_k if req.top_k is not None else state.cfg.top_k
        if top_k < 1:
            raise HTTPException(status_code=400, detail="top_k must be at least 1")
        if not state.slot().acquire(timeout=state.cfg.request_timeout):
            raise HTTPException(status_code=503, detail="too many concurrent requests")
        try:
            scorer = state.scorer
            return _route_once(state, scorer, question, strategy, top_k)
        except (RetrievalError, EmbeddingError, RerankError) as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        finally:
            state.slot().release()

    @app.post("/admin/reload")
    def reload(req: ReloadRequest):
        try:
            scorer = state.swap(req.index_path)
        except (SchemaError, RetrievalError, FileNotFoundError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"reloaded": True, "databases": len(scorer.index.db_ids)}

    return app


def _route_once(
    state: RouterState, scorer: Scorer, question: str, strategy: str, top_k: int
) -> dict:
    top_tables: dict[str, tuple[str, ...]] = {}
    if strategy == "llm-rerank":
        if state.llm_client is None:
            raise HTTPException(
                status_code=400,
                detail="llm-rerank requires a configured completion endpoint",
            )
        base = scorer.rank_databases("service", question, "pooled-tables")
        ranked = rerank(
            "service", question, base, scorer, state.cfg.llm, state.llm_client,
            incidents=state.incidents,
        )
    elif strategy.startswith("pooled-tables"):
        details = scorer.pooled_details(
            question, use_metadata=strategy.endswith("+metadata")
        )
        entries = tuple(
            sorted(((db, s) for db, (s, _) in details.items()), key=lambda kv: (-kv[1], kv[0]))
        )
        ranked = RankedList("service", entries, strategy)
        top_tables = {db: tables for db, (_, tables) in details.items()}
    else:
        ranked = scorer.rank_databases("service", question, strategy)
    body = []
    for db_id, score in ranked.entries[:top_k]:
        item = {"db_id": db_id, "score": score}
        if db_id in top_tables:
            item["top_tables"] = list(top_tables[db_id])
        body.append(item)
    return {"question": question, "strategy": strategy, "ranked": body}


def serve(cfg: ServiceConfig):
    """Blocking entry point used by the CLI."""
    import uvicorn

    state = RouterState(cfg)
    app = create_app(state)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
