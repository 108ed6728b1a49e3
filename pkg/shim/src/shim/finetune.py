"""Contrastive fine-tuning of a served encoder from an exported pair file.

Pairs arrive as line-delimited JSON with side_a/side_b texts and a 0/1
label. Label 1 pulls the pair's cosine distance toward zero, label 0 pushes
it past the margin:

    L = 0.5 * (l * d^2 + (1 - l) * relu(m - d)^2),  d = 1 - cos(z_a, z_b)

averaged per epoch. The tuned model is saved as a directory that
`load_encoder` (and therefore `shim serve --model <dir>`) accepts.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .encoder import EncoderError, load_encoder


class FinetuneError(RuntimeError):
    pass


@dataclass(frozen=True)
class FinetuneConfig:
    batch_size: int = 16
    learning_rate: float = 5e-6
    epochs: int = 2
    margin: float = 0.5
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise FinetuneError("batch_size must be at least 1")
        if self.epochs < 1:
            raise FinetuneError("epochs must be at least 1")
        if self.learning_rate <= 0 or self.margin <= 0:
            raise FinetuneError("learning_rate and margin must be positive")


@dataclass(frozen=True)
class FinetuneResult:
    out_dir: str
    epoch_losses: tuple[float, ...]
    dim: int
    n_pairs: int


def load_pair_file(path: str | Path) -> list[tuple[str, str, int]]:
    """Parse an exported pair file, blaming the exact line on any defect."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FinetuneError(f"{path}: line {lineno}: not valid JSON ({exc})") from None
            if not isinstance(record, dict):
                raise FinetuneError(f"{path}: line {lineno}: expected an object")
            side_a, side_b = record.get("side_a"), record.get("side_b")
            label = record.get("label")
            if not isinstance(side_a, str) or not side_a:
                raise FinetuneError(f"{path}: line {lineno}: side_a must be a non-empty string")
            if not isinstance(side_b, str) or not side_b:
                raise FinetuneError(f"{path}: line {lineno}: side_b must be a non-empty string")
            if label not in (0, 1):
                raise FinetuneError(f"{path}: line {lineno}: label must be 0 or 1")
            pairs.append((side_a, side_b, label))
    if not pairs:
        raise FinetuneError(f"{path}: no pairs found")
    return pairs


def _pair_loss(z_a, z_b, labels, margin):
    distance = 1.0 - torch.nn.functional.cosine_similarity(z_a, z_b)
    pull = labels * distance.pow(2)
    push = (1.0 - labels) * torch.relu(margin - distance).pow(2)
    return 0.5 * (pull + push).mean()


def finetune(
    pairs_path: str | Path,
    out_dir: str | Path,
    model_id: str,
    cfg: FinetuneConfig = FinetuneConfig(),
    log=print,
) -> FinetuneResult:
    pairs = load_pair_file(pairs_path)
    labels = {label for _, _, label in pairs}
    if labels != {0, 1}:
        raise FinetuneError("fine-tuning needs both positive and negative pairs")

    encoder = load_encoder(model_id, device=cfg.device)
    optimizer = torch.optim.Adam(
        encoder.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    generator = torch.Generator().manual_seed(cfg.seed)
    encoder.train_mode(True)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        order = torch.randperm(len(pairs), generator=generator).tolist()
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [pairs[i] for i in order[start : start + cfg.batch_size]]
            z_a = encoder.embed_torch([p[0] for p in batch])
            z_b = encoder.embed_torch([p[1] for p in batch])
            batch_labels = torch.tensor([float(p[2]) for p in batch])
            loss = _pair_loss(z_a, z_b, batch_labels, cfg.margin)
            if not torch.isfinite(loss):
                raise FinetuneError(f"non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(batch)
        mean = total / len(pairs)
        epoch_losses.append(mean)
        log(f"epoch {epoch}: mean loss {mean:.6f}")
    encoder.train_mode(False)

    out = Path(out_dir)
    try:
        encoder.save(out)
    except OSError as exc:
        raise FinetuneError(f"cannot save model to {out}: {exc}") from exc
    return FinetuneResult(
        out_dir=str(out), epoch_losses=tuple(epoch_losses),
        dim=encoder.dim, n_pairs=len(pairs),
    )
