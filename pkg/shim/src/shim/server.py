"""The /v1/embed wire endpoint.

Request {"model": ..., "texts": [...]} answers {"dim": D, "vectors": [[...]]},
errors answer {"error": reason}. One model instance serves everything;
encoding is serialized behind a lock so concurrent callers are safe.
"""

import threading
from dataclasses import dataclass

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .encoder import EncoderError, load_encoder


@dataclass(frozen=True)
class ShimConfig:
    model: str = "all-mpnet-base-v2"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8089
    max_batch: int = 64

    def __post_init__(self):
        if self.max_batch < 1:
            raise EncoderError("max_batch must be at least 1")
        if self.port < 1:
            raise EncoderError("port must be positive")


def create_app(encoder, served_model: str, max_batch: int = 64) -> FastAPI:
    app = FastAPI(title="embed-shim", docs_url=None, redoc_url=None)
    lock = threading.Lock()

    def error(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model": served_model, "dim": encoder.dim}

    @app.post("/v1/embed")
    def embed(payload: dict):
        texts = payload.get("texts")
        if not isinstance(texts, list) or not texts:
            return error(400, "texts must be a non-empty list")
        if not all(isinstance(t, str) for t in texts):
            return error(400, "texts must all be strings")
        if len(texts) > max_batch:
            return error(413, f"batch of {len(texts)} exceeds the limit of {max_batch}")
        model = payload.get("model")
        if model and model != served_model:
            return error(400, f"model {model!r} not served here (serving {served_model!r})")
        try:
            with lock:
                vectors = encoder.encode(texts)
        except EncoderError as exc:
            return error(500, str(exc))
        return {"dim": encoder.dim, "vectors": vectors.tolist()}

    return app


def serve_embeddings(cfg: ShimConfig):
    import uvicorn

    encoder = load_encoder(cfg.model, device=cfg.device)
    app = create_app(encoder, cfg.model, cfg.max_batch)
    uvicorn.run(app, host=cfg.host, port=cfg.port)
