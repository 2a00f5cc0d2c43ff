"""Training of the affine NMT->LM embedding map.

The map L is trained jointly with a small causal language model: every input
token is looked up in the frozen NMT embedding table, pushed through L, and
fed to the LM, which is optimized for next-token prediction. Only L and the
LM parameters receive gradients; the NMT table is untouched.

Desk scale by design: a 2-layer GRU stands in for a large pretrained causal
LM and any small text corpus stands in for a web-scale one. The contract of
the produced map (exactly affine, trained under the causal-LM objective) is
the same.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DataError, TrainingError
from .gateway import EmbeddingMap, NmtModel
from .projection import build_index, project_embeddings


@dataclass(frozen=True)
class MapperTrainConfig:
    corpus_path: str | Path
    epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 1e-3
    lm_layers: int = 2
    lm_width: int = 32
    lm_dim: int | None = None          # LM embedding dim d_lm; defaults to the NMT d
    freeze_nmt_embeddings: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.freeze_nmt_embeddings:
            raise ValueError("the NMT embedding table is always frozen")


@dataclass
class MapperTrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    sentences: int = 0
    tokens: int = 0

    @property
    def initial_loss(self) -> float | None:
        return self.epoch_losses[0] if self.epoch_losses else None

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None


class _CausalGruLm(nn.Module):
    """Tiny causal LM over externally-produced input vectors."""

    def __init__(self, in_dim: int, width: int, layers: int, vocab_size: int,
                 dtype: torch.dtype):
        super().__init__()
        self.gru = nn.GRU(in_dim, width, num_layers=layers, batch_first=True, dtype=dtype)
        self.head = nn.Linear(width, vocab_size, dtype=dtype)

    def forward(self, vectors: torch.Tensor) -> torch.Tensor:
        out, _ = self.gru(vectors)
        return self.head(out)


def _load_corpus_ids(model: NmtModel, path: str | Path) -> list[list[int]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    vocab = model.vocabulary
    seqs = []
    for line in text.splitlines():
        if not line.strip():
            continue
        ids = vocab.tokenize(line)
        seqs.append([vocab.bos_id, *ids, vocab.eos_id])
    if not seqs:
        raise DataError(f"corpus {path} contains no usable sentences")
    return seqs


def train_mapper(model: NmtModel, cfg: MapperTrainConfig
                 ) -> tuple[EmbeddingMap, MapperTrainReport]:
    """Train L alongside the causal LM; returns the map and per-epoch losses."""
    seqs = _load_corpus_ids(model, cfg.corpus_path)
    vocab = model.vocabulary
    dtype = model.embed_table.dtype
    d = model.d
    d_lm = cfg.lm_dim if cfg.lm_dim is not None else d

    torch.manual_seed(cfg.seed)
    linear = nn.Linear(d, d_lm, bias=True, dtype=dtype)
    with torch.no_grad():
        init = EmbeddingMap.identity(d, d_lm, dtype=dtype)
        linear.weight.copy_(init.weight)
        linear.bias.copy_(init.bias)
    lm = _CausalGruLm(d_lm, cfg.lm_width, cfg.lm_layers, len(vocab), dtype)
    params = list(linear.parameters()) + list(lm.parameters())
    optimizer = torch.optim.Adam(params, lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=vocab.pad_id)

    embed_table = model.embed_table.detach()  # frozen: never part of the graph
    report = MapperTrainReport(sentences=len(seqs), tokens=sum(len(s) - 1 for s in seqs))
    shuffler = torch.Generator().manual_seed(cfg.seed)

    for _ in range(cfg.epochs):
        order = torch.randperm(len(seqs), generator=shuffler).tolist()
        total, count = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [seqs[i] for i in order[start:start + cfg.batch_size]]
            width = max(len(s) for s in batch)
            padded = torch.full((len(batch), width), vocab.pad_id, dtype=torch.long)
            for r, s in enumerate(batch):
                padded[r, : len(s)] = torch.tensor(s)
            inputs = embed_table[padded[:, :-1]]
            logits = lm(linear(inputs))
            loss = loss_fn(logits.reshape(-1, len(vocab)), padded[:, 1:].reshape(-1))
            if not torch.isfinite(loss):
                raise TrainingError("mapper training diverged (non-finite loss)")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            n_targets = int((padded[:, 1:] != vocab.pad_id).sum())
            total += float(loss.detach()) * n_targets
            count += n_targets
        report.epoch_losses.append(total / count)

    emb_map = EmbeddingMap(linear.weight.detach().clone(), linear.bias.detach().clone())
    return emb_map, report


def projection_self_consistency(model: NmtModel, emb_map: EmbeddingMap) -> float:
    """Fraction of tokens whose own NMT embedding projects back to themselves.

    Computed with no excluded ids: a usable map keeps the per-token LM
    directions separated, so this should stay near 1.
    """
    index = build_index(model, emb_map, excluded_ids=())
    ids, _ = project_embeddings(model.embed_table, index, emb_map, model)
    hits = sum(int(p == i) for i, p in enumerate(ids))
    return hits / len(ids)


# -- map serialization ---------------------------------------------------------

def save_map(emb_map: EmbeddingMap, model: NmtModel, path: str | Path) -> None:
    """Persist the map together with a fingerprint of the model's embed table."""
    np.savez(
        path,
        weight=emb_map.weight.cpu().numpy(),
        bias=emb_map.bias.cpu().numpy(),
        model_fingerprint=np.array(model.fingerprint()),
    )


def load_map(path: str | Path, model: NmtModel) -> EmbeddingMap:
    """Load a map, verifying it was trained against this model's embed table."""
    try:
        with np.load(path, allow_pickle=False) as data:
            weight = torch.from_numpy(data["weight"])
            bias = torch.from_numpy(data["bias"])
            fp = str(data["model_fingerprint"])
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read embedding map {path}: {exc}") from exc
    if fp != model.fingerprint():
        raise DataError(f"embedding map {path} was trained for a different model")
    return EmbeddingMap(weight, bias)
