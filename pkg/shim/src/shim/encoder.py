"""Encoders behind the /v1/embed endpoint.

Two families share one surface: a pretrained sentence-transformers model
(the production choice) and a self-contained hash-bucket encoder that needs
no downloaded weights. The hashed family exists so serving and fine-tuning
stay fully testable on machines without model access; `hashed:<dim>` is the
identifier, and a fine-tuned copy of either family loads back from its saved
directory.

Every encoder truncates to `max_tokens` true tokens and returns unit-norm
float64 rows.
"""

import hashlib
import json
import re
from pathlib import Path

import numpy as np
import torch

MAX_TOKENS = 512
HASHED_VOCAB = 2048
HASHED_CONFIG = "shim_config.json"
HASHED_WEIGHTS = "weights.pt"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EncoderError(RuntimeError):
    pass


def _bucket(token: str) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    # bucket 0 is reserved for empty input so no text embeds to zero
    return 1 + int.from_bytes(digest[:8], "big") % (HASHED_VOCAB - 1)


class HashedEncoder:
    """Trainable bag-of-hashed-tokens encoder with deterministic weights."""

    def __init__(self, dim: int, seed: int = 0, model_id: str | None = None):
        if dim < 2:
            raise EncoderError(f"dim must be at least 2, got {dim}")
        self.dim = dim
        self.max_tokens = MAX_TOKENS
        self.model_id = model_id or f"hashed:{dim}"
        generator = torch.Generator().manual_seed(seed)
        weights = torch.normal(
            0.0, 1.0 / dim**0.5, (HASHED_VOCAB, dim), generator=generator
        )
        self.bag = torch.nn.EmbeddingBag(
            HASHED_VOCAB, dim, mode="mean", _weight=weights
        )

    def tokenize(self, text: str) -> list[int]:
        tokens = _TOKEN_RE.findall(text.lower())[: self.max_tokens]
        return [_bucket(t) for t in tokens] or [0]

    def embed_torch(self, texts: list[str]) -> torch.Tensor:
        buckets, offsets = [], []
        for text in texts:
            offsets.append(len(buckets))
            buckets.extend(self.tokenize(text))
        return self.bag(torch.tensor(buckets), torch.tensor(offsets))

    def parameters(self):
        return self.bag.parameters()

    def train_mode(self, training: bool):
        self.bag.train(training)

    @torch.no_grad()
    def encode(self, texts: list[str]) -> np.ndarray:
        raw = self.embed_torch(texts).double().numpy()
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if (norms <= 1e-12).any():
            raise EncoderError("a text embedded to the zero vector")
        return raw / norms

    def save(self, out_dir: str | Path):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / HASHED_CONFIG).write_text(json.dumps({
            "kind": "hashed",
            "dim": self.dim,
            "vocab": HASHED_VOCAB,
            "source_model": self.model_id,
        }, indent=2))
        torch.save(self.bag.state_dict(), out / HASHED_WEIGHTS)

    @classmethod
    def load(cls, path: Path) -> "HashedEncoder":
        config = json.loads((path / HASHED_CONFIG).read_text())
        if config.get("kind") != "hashed" or config.get("vocab") != HASHED_VOCAB:
            raise EncoderError(f"{path} is not a compatible saved encoder")
        encoder = cls(config["dim"], model_id=str(path))
        encoder.bag.load_state_dict(
            torch.load(path / HASHED_WEIGHTS, weights_only=True)
        )
        return encoder


class SbertEncoder:
    """sentence-transformers model pinned to the 512-token budget."""

    def __init__(self, model_id: str, device: str = "cpu"):
        from sentence_transformers import SentenceTransformer

        try:
            self.model = SentenceTransformer(model_id, device=device)
        except Exception as exc:
            raise EncoderError(f"cannot load model {model_id!r}: {exc}") from exc
        self.model.max_seq_length = MAX_TOKENS
        self.model_id = model_id
        self.max_tokens = MAX_TOKENS
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def embed_torch(self, texts: list[str]) -> torch.Tensor:
        features = self.model.tokenize(texts)
        features = {k: v.to(self.model.device) for k, v in features.items()}
        return self.model(features)["sentence_embedding"]

    def parameters(self):
        return self.model.parameters()

    def train_mode(self, training: bool):
        self.model.train(training)

    def encode(self, texts: list[str]) -> np.ndarray:
        self.model.eval()
        vectors = self.model.encode(
            texts, convert_to_numpy=True, normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float64)

    def save(self, out_dir: str | Path):
        self.model.save(str(out_dir))


def load_encoder(model_id: str, device: str = "cpu"):
    """Resolve a model identifier: `hashed:<dim>`, a saved directory from
    `finetune`, or anything sentence-transformers accepts."""
    if model_id.startswith("hashed:"):
        try:
            dim = int(model_id.split(":", 1)[1])
        except ValueError:
            raise EncoderError(f"bad hashed model id {model_id!r}") from None
        return HashedEncoder(dim)
    path = Path(model_id)
    if path.is_dir() and (path / HASHED_CONFIG).exists():
        return HashedEncoder.load(path)
    return SbertEncoder(model_id, device=device)
