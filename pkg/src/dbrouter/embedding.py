"""Embedding access: providers, truncation, caching, cosine scoring.

Two providers sit behind one configuration type. The remote provider talks
the embedding wire protocol (POST /v1/embed) with retries, batching, and a
bounded number of in-flight requests. The deterministic test provider maps
text to a vector through hash expansion, which keeps every downstream test
reproducible with no network and no model weights.

Vectors are L2-normalized on ingestion, so cosine similarity is a plain dot
product everywhere else in the engine.
"""

import hashlib
import json
import logging
import math
import os
import re
import sqlite3
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

log = logging.getLogger(__name__)

ENV_EMBED_URL = "DBROUTER_EMBED_URL"

PROVIDER_KINDS = ("remote", "deterministic-test")

# Whitespace tokens inflate to subword tokens by roughly this factor on
# schema-style text; the proxy stays under the budget with this margin.
TOKEN_INFLATION = 1.3


class EmbeddingError(RuntimeError):
    """Raised for provider, transport, or shape failures."""


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise EmbeddingError("vector must be one-dimensional and non-empty")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if not (1 - 1e-6 <= norm <= 1 + 1e-6):
                raise EmbeddingError(f"normalized flag set but L2 norm is {norm}")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class ProviderConfig:
    """Where embeddings come from and how requests are shaped."""

    kind: str = "deterministic-test"
    endpoint: str = ""
    model: str = "deterministic"
    token_budget: int = 512
    batch_size: int = 32
    timeout: float = 30.0
    dim: int = 64  # deterministic-test only; remote dim comes from the server
    retries: int = 3
    backoff: float = 0.25
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise EmbeddingError(f"unknown provider kind {self.kind!r}")
        if self.token_budget < 1:
            raise EmbeddingError("token_budget must be >= 1")
        if self.kind == "remote" and not self.endpoint:
            raise EmbeddingError("remote provider needs an endpoint")

    @classmethod
    def from_env(cls, **overrides) -> "ProviderConfig":
        endpoint = os.environ.get(ENV_EMBED_URL, "")
        if endpoint and "kind" not in overrides:
            overrides.setdefault("endpoint", endpoint)
            return cls(kind="remote", **overrides)
        return cls(**overrides)


def provider_identity(cfg: ProviderConfig) -> str:
    """Stable cache key prefix for a provider configuration."""
    if cfg.kind == "deterministic-test":
        return f"test:{cfg.model}:{cfg.dim}"
    return f"remote:{cfg.model}"


# ---------------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------------

_WORD_RE = re.compile(r"\S+")


def proxy_token_count(text: str) -> int:
    return math.ceil(len(_WORD_RE.findall(text)) * TOKEN_INFLATION)


def truncate(text: str, token_budget: int) -> str:
    """Cut text at a whitespace boundary so the proxy count fits the budget.

    The proxy count is whitespace tokens times 1.3, rounded up. At least one
    token always survives. A cut never lands inside a single-quoted
    identifier; it backs off to keep the quotes balanced.
    """
    if token_budget < 1:
        raise EmbeddingError("token_budget must be >= 1")
    words = list(_WORD_RE.finditer(text))
    max_words = max(1, math.floor(token_budget / TOKEN_INFLATION))
    if len(words) <= max_words:
        return text
    keep = max_words
    while keep > 1 and text[: words[keep - 1].end()].count("'") % 2 == 1:
        keep -= 1
    cut = text[: words[keep - 1].end()]
    log.debug("truncated text from %d to %d tokens", len(words), keep)
    return cut


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Content-addressed persistent vector cache.

    Backed by SQLite keyed on (provider identity, text digest). Reads may
    run concurrently; writes are serialized behind one lock.
    """

    def __init__(self, path: str | Path = ":memory:"):
        self._path = str(path)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self._path, check_same_thread=False)
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS vectors ("
                " provider TEXT NOT NULL, digest TEXT NOT NULL,"
                " dim INTEGER NOT NULL, data BLOB NOT NULL,"
                " PRIMARY KEY (provider, digest))"
            )
            self._conn.commit()

    def get_many(self, provider: str, digests: list[str]) -> dict[str, np.ndarray]:
        if not digests:
            return {}
        found = {}
        with self._lock:
            for digest in digests:
                row = self._conn.execute(
                    "SELECT dim, data FROM vectors WHERE provider=? AND digest=?",
                    (provider, digest),
                ).fetchone()
                if row:
                    dim, blob = row
                    found[digest] = np.frombuffer(blob, dtype=np.float64, count=dim).copy()
        return found

    def put_many(self, provider: str, items: dict[str, np.ndarray]):
        if not items:
            return
        with self._lock:
            self._conn.executemany(
                "INSERT OR REPLACE INTO vectors (provider, digest, dim, data)"
                " VALUES (?, ?, ?, ?)",
                [
                    (provider, digest, vec.shape[0], np.asarray(vec, dtype=np.float64).tobytes())
                    for digest, vec in items.items()
                ],
            )
            self._conn.commit()

    def close(self):
        self._conn.close()


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


def _test_vector(model: str, text: str, dim: int) -> np.ndarray:
    """Pure function of (model, text): hash-expanded pseudo-embedding."""
    base = hashlib.sha256(f"{model}\x00{text}".encode("utf-8")).digest()
    out = np.empty(dim, dtype=np.float64)
    for i in range(dim):
        h = hashlib.sha256(base + i.to_bytes(4, "big")).digest()
        out[i] = int.from_bytes(h[:8], "big") / 2**63 - 1.0
    return out


def default_transport(endpoint: str, payload: dict, timeout: float) -> tuple[int, dict]:
    resp = requests.post(endpoint, json=payload, timeout=timeout)
    try:
        body = resp.json()
    except ValueError:
        body = {"error": resp.text[:500]}
    return resp.status_code, body


def _remote_chunk(cfg: ProviderConfig, texts: list[str], transport) -> list[np.ndarray]:
    payload = {"model": cfg.model, "texts": texts}
    last_error = "no attempts made"
    for attempt in range(cfg.retries + 1):
        try:
            status, body = transport(cfg.endpoint, payload, cfg.timeout)
        except Exception as exc:
            last_error = str(exc)
            status, body = None, None
        if status == 200 and body is not None:
            vectors = body.get("vectors")
            dim = body.get("dim")
            if not isinstance(vectors, list) or len(vectors) != len(texts):
                raise EmbeddingError(
                    f"embedding server returned {len(vectors or [])} vectors for {len(texts)} texts"
                )
            arrays = [np.asarray(v, dtype=np.float64) for v in vectors]
            for arr in arrays:
                if arr.ndim != 1 or (dim is not None and arr.shape[0] != dim):
                    raise EmbeddingError("embedding server returned inconsistent dimensions")
            return arrays
        if status is not None:
            last_error = (body or {}).get("error", f"HTTP {status}")
            if status < 500 and status != 429:
                break  # no point retrying a 4xx other than throttling
        if attempt < cfg.retries:
            time.sleep(cfg.backoff * (2**attempt))
    raise EmbeddingError(f"embedding request failed after retries: {last_error}")


def embed_batch(
    texts: list[str],
    cfg: ProviderConfig,
    cache: EmbeddingCache | None = None,
    transport=None,
) -> list[EmbeddingVector]:
    """Embed texts in order: truncate, consult the cache, dispatch misses.

    Returns one normalized vector per input text. With a cache attached, a
    repeated batch costs zero transport calls.
    """
    if not texts:
        raise EmbeddingError("texts must be non-empty")
    truncated = [truncate(t, cfg.token_budget) for t in texts]
    digests = [text_digest(t) for t in truncated]
    identity = provider_identity(cfg)
    found: dict[str, np.ndarray] = {}
    if cache is not None:
        found = cache.get_many(identity, sorted(set(digests)))
    missing: dict[str, str] = {}
    for digest, text in zip(digests, truncated):
        if digest not in found and digest not in missing:
            missing[digest] = text

    if missing:
        order = list(missing)
        if cfg.kind == "deterministic-test":
            fresh = [_test_vector(cfg.model, missing[d], cfg.dim) for d in order]
        else:
            transport = transport or default_transport
            chunks = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
            with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
                results = list(
                    pool.map(
                        lambda chunk: _remote_chunk(cfg, [missing[d] for d in chunk], transport),
                        chunks,
                    )
                )
            fresh = [vec for chunk_vecs in results for vec in chunk_vecs]
        normalized = {}
        for digest, vec in zip(order, fresh):
            norm = float(np.linalg.norm(vec))
            if norm <= 1e-12:
                raise EmbeddingError("provider returned a zero vector")
            normalized[digest] = vec / norm
        found.update(normalized)
        if cache is not None:
            cache.put_many(identity, normalized)

    dims = {found[d].shape[0] for d in digests}
    if len(dims) != 1:
        raise EmbeddingError(f"mixed dimensions in one batch: {sorted(dims)}")
    return [EmbeddingVector(values=found[d], normalized=True) for d in digests]


def cosine(a: EmbeddingVector | np.ndarray, b: EmbeddingVector | np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1]."""
    va = a.values if isinstance(a, EmbeddingVector) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, EmbeddingVector) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise EmbeddingError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na <= 1e-12 or nb <= 1e-12:
        raise EmbeddingError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def save_vectors_json(path: str | Path, texts: list[str], vectors: list[EmbeddingVector]):
    """Debug helper: dump embeddings alongside their texts."""
    payload = [
        {"text": t, "dim": v.dim, "values": [float(x) for x in v.values]}
        for t, v in zip(texts, vectors)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


@dataclass
class CountingTransport:
    """Transport stub that counts calls; backed by the test vector function."""

    dim: int = 16
    calls: int = 0
    fail_times: int = 0
    texts_seen: list = field(default_factory=list)

    def __call__(self, endpoint: str, payload: dict, timeout: float) -> tuple[int, dict]:
        self.calls += 1
        if self.calls <= self.fail_times:
            return 503, {"error": "synthetic outage"}
        self.texts_seen.extend(payload["texts"])
        vectors = []
        for text in payload["texts"]:
            vec = _test_vector(payload["model"], text, self.dim)
            vec = vec / np.linalg.norm(vec)
            vectors.append([float(x) for x in vec])
        return 200, {"dim": self.dim, "vectors": vectors}
