"""Contrastive loss, analytic gradients, and linear-adapter training.

The trainable object is a square projection W applied to frozen provider
embeddings; both sides of a pair go through the same W and are compared by
cosine. Two loss readings exist behind `loss_mode`:

  distance-standard  0.5 * (l * d^2 + (1-l) * relu(m - d)^2), d = 1 - cos
  paper-literal      0.5 * (l * c^2 + (1-l) * relu(m - c^2)), c = cos

The distance form matches the bring-closer/push-apart semantics and is the
default; the literal form reproduces the printed expression, which as
written drives positives toward orthogonality. Gradients are hand-derived
and checked against central finite differences in the test suite.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import PairExample

log = logging.getLogger(__name__)

LOSS_MODES = ("distance-standard", "paper-literal")

HEADER_MAGIC = b"DBRA"


class AdapterError(RuntimeError):
    """Raised for bad adapter configuration, training failure, or file damage."""


@dataclass(frozen=True, eq=False)
class LinearAdapter:
    weight: np.ndarray  # (d_out, d_in)
    margin: float
    mode: str = "distance-standard"

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        object.__setattr__(self, "weight", w)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise AdapterError("weight must be a 2-D matrix")
        if not np.isfinite(w).all():
            raise AdapterError("weight has non-finite entries")
        if not self.margin > 0:
            raise AdapterError("margin must be positive")
        if self.mode not in LOSS_MODES:
            raise AdapterError(f"unknown loss mode {self.mode!r}")

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.weight.astype(np.float32).tobytes())
        h.update(f"{self.margin}:{self.mode}".encode("utf-8"))
        return h.hexdigest()


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 5e-6
    epochs: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss_mode: str = "distance-standard"
    margin: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1 or self.learning_rate <= 0 or self.epochs < 0:
            raise AdapterError("batch_size, learning_rate must be positive; epochs >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0):
            raise AdapterError("optimizer constants out of range")
        if self.margin <= 0:
            raise AdapterError("margin must be positive")
        if self.loss_mode not in LOSS_MODES:
            raise AdapterError(f"unknown loss mode {self.loss_mode!r}")


@dataclass
class TrainResult:
    adapter: LinearAdapter
    epoch_losses: list[float]
    best_epoch: int | None
    pair_kinds: tuple[str, ...] = ()


def _cos_parts(u: np.ndarray, v: np.ndarray):
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu <= 1e-12 or nv <= 1e-12:
        raise AdapterError("cosine undefined for zero vectors")
    if not (np.isfinite(nu) and np.isfinite(nv)):
        raise AdapterError("cosine undefined for non-finite vectors")
    c = float(np.dot(u, v) / (nu * nv))
    return c, nu, nv


def contrastive_loss(
    z_i: np.ndarray, z_j: np.ndarray, label: int, margin: float,
    loss_mode: str = "distance-standard",
) -> float:
    """Loss on a projected pair. `label` 1 brings the pair closer, 0 pushes apart."""
    if label not in (0, 1):
        raise AdapterError("label must be 0 or 1")
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise AdapterError("pair vectors must share a dimension")
    c, _, _ = _cos_parts(z_i, z_j)
    if loss_mode == "distance-standard":
        d = 1.0 - c
        return 0.5 * (label * d * d + (1 - label) * max(0.0, margin - d) ** 2)
    if loss_mode == "paper-literal":
        return 0.5 * (label * c * c + (1 - label) * max(0.0, margin - c * c))
    raise AdapterError(f"unknown loss mode {loss_mode!r}")


def _dl_dc(c: float, label: int, margin: float, loss_mode: str) -> float:
    if loss_mode == "distance-standard":
        d = 1.0 - c
        return -label * d + (1 - label) * max(0.0, margin - d)
    if loss_mode == "paper-literal":
        active = 1.0 if margin - c * c > 0 else 0.0
        return label * c - (1 - label) * c * active
    raise AdapterError(f"unknown loss mode {loss_mode!r}")


def loss_gradient(
    e_i: np.ndarray, e_j: np.ndarray, label: int, margin: float,
    loss_mode: str, weight: np.ndarray,
) -> np.ndarray:
    """Gradient of the composed loss w.r.t. the projection weight.

    Both base embeddings are projected through the same weight (u = W e_i,
    v = W e_j) before the cosine, so the weight collects contributions from
    both sides.
    """
    e_i = np.asarray(e_i, dtype=np.float64)
    e_j = np.asarray(e_j, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    u = weight @ e_i
    v = weight @ e_j
    c, nu, nv = _cos_parts(u, v)
    dc_du = v / (nu * nv) - c * u / (nu * nu)
    dc_dv = u / (nu * nv) - c * v / (nv * nv)
    scale = _dl_dc(c, label, margin, loss_mode)
    return scale * (np.outer(dc_du, e_i) + np.outer(dc_dv, e_j))


def apply_adapter(adapter: LinearAdapter, vector: np.ndarray) -> np.ndarray:
    """Project and renormalize one embedding."""
    vec = np.asarray(vector, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != adapter.weight.shape[1]:
        raise AdapterError(
            f"vector dim {vec.shape} incompatible with weight {adapter.weight.shape}"
        )
    if float(np.linalg.norm(vec)) <= 1e-12:
        raise AdapterError("cannot project a zero vector")
    out = adapter.weight @ vec
    norm = float(np.linalg.norm(out))
    if norm <= 1e-12:
        raise AdapterError("projection collapsed the vector to zero")
    return out / norm


def init_weight(dim: int, seed: int) -> np.ndarray:
    """Identity plus small seeded Gaussian noise (variance 1e-4)."""
    rng = np.random.default_rng(seed)
    return np.eye(dim) + rng.normal(0.0, 1e-2, size=(dim, dim))


def train_adapter(
    pairs: list[PairExample],
    provider,
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch Adam over shuffled pairs; keeps the best epoch snapshot.

    `provider` is either a ProviderConfig consumed through embed_batch or a
    callable mapping a list of texts to vectors. Base embeddings are frozen;
    only the projection weight trains. With epochs=0 the identity-initialized
    adapter is returned untouched.
    """
    if not pairs:
        raise AdapterError("no training pairs")
    labels = {p.label for p in pairs}
    if labels != {0, 1}:
        raise AdapterError("training needs both positive and negative pairs")

    texts = []
    seen = set()
    for p in pairs:
        for t in (p.side_a, p.side_b):
            if t not in seen:
                seen.add(t)
                texts.append(t)
    if callable(provider):
        raw = provider(texts)
    else:
        from .embedding import embed_batch

        raw = embed_batch(texts, provider)
    matrix = np.stack(
        [v.values if hasattr(v, "values") else np.asarray(v, dtype=np.float64) for v in raw]
    )
    index = {t: i for i, t in enumerate(texts)}
    samples = [(index[p.side_a], index[p.side_b], p.label) for p in pairs]

    dim = matrix.shape[1]
    weight = init_weight(dim, cfg.seed)
    if cfg.epochs == 0:
        adapter = LinearAdapter(weight=weight, margin=cfg.margin, mode=cfg.loss_mode)
        return TrainResult(adapter, [], None, tuple(sorted({p.kind for p in pairs})))

    rng = np.random.default_rng(cfg.seed + 1)
    m_t = np.zeros_like(weight)
    v_t = np.zeros_like(weight)
    step = 0
    epoch_losses: list[float] = []
    snapshots: list[np.ndarray] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grad = np.zeros_like(weight)
            for k in batch:
                ia, ib, label = samples[k]
                e_a, e_b = matrix[ia], matrix[ib]
                try:
                    loss = contrastive_loss(
                        weight @ e_a, weight @ e_b, label, cfg.margin, cfg.loss_mode
                    )
                except AdapterError as exc:
                    raise AdapterError(
                        f"training diverged at epoch {epoch}, step {step}: {exc}"
                    ) from exc
                if not np.isfinite(loss):
                    raise AdapterError(
                        f"non-finite loss at epoch {epoch}, step {step}: {loss}"
                    )
                losses.append(loss)
                grad += loss_gradient(e_a, e_b, label, cfg.margin, cfg.loss_mode, weight)
            grad /= len(batch)
            step += 1
            m_t = cfg.beta1 * m_t + (1 - cfg.beta1) * grad
            v_t = cfg.beta2 * v_t + (1 - cfg.beta2) * grad * grad
            m_hat = m_t / (1 - cfg.beta1**step)
            v_hat = v_t / (1 - cfg.beta2**step)
            weight = weight - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
            if not np.isfinite(weight).all():
                raise AdapterError(f"weights diverged at epoch {epoch}, step {step}")
        epoch_losses.append(float(np.mean(losses)))
        snapshots.append(weight.copy())
        log.info("epoch %d: mean loss %.6f", epoch, epoch_losses[-1])
    best = int(np.argmin(epoch_losses))
    adapter = LinearAdapter(weight=snapshots[best], margin=cfg.margin, mode=cfg.loss_mode)
    return TrainResult(
        adapter, epoch_losses, best, tuple(sorted({p.kind for p in pairs}))
    )


# ---------------------------------------------------------------------------
# Adapter file format: length-prefixed JSON header + float32 weights
# ---------------------------------------------------------------------------


def save_adapter(path: str | Path, adapter: LinearAdapter, seed: int | None = None):
    header = {
        "format": 1,
        "d_out": adapter.weight.shape[0],
        "d_in": adapter.weight.shape[1],
        "margin": adapter.margin,
        "mode": adapter.mode,
        "seed": seed,
        "digest": adapter.digest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(HEADER_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(adapter.weight.astype("<f4").tobytes())


def load_adapter(path: str | Path) -> LinearAdapter:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HEADER_MAGIC:
            raise AdapterError(f"{path}: not an adapter file")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size).decode("utf-8"))
        payload = fh.read()
    weight = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    weight = weight.reshape(header["d_out"], header["d_in"])
    adapter = LinearAdapter(weight=weight, margin=header["margin"], mode=header["mode"])
    if adapter.digest != header["digest"]:
        raise AdapterError(f"{path}: weight payload does not match recorded digest")
    return adapter
