"""Projection of continuous embedding rows onto valid token embeddings.

Nearness is cosine similarity in the LM space: each row is compared against
the mapped-and-normalized embedding of every vocabulary token via a single
matrix product. Exact, not approximate: acceptance checks compare against a
brute-force scan.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from .errors import DataError, ModelError
from .gateway import EmbeddingMap, NmtModel
from .vocab import TokenIds


@dataclass(frozen=True)
class ProjectionIndex:
    """Unit-norm LM-space vectors for every vocabulary token.

    Rows of excluded ids are never returned by projection (their rows are
    kept in place but masked).
    """

    lm_vocab_matrix: torch.Tensor  # |V| x d_lm, non-excluded rows unit norm
    excluded_ids: frozenset[int]
    fingerprint: str

    @property
    def vocab_size(self) -> int:
        return self.lm_vocab_matrix.shape[0]


def build_index(model: NmtModel, emb_map: EmbeddingMap,
                excluded_ids: Iterable[int] | None = None) -> ProjectionIndex:
    """Normalize the mapped embedding of every token into an index.

    ``excluded_ids`` defaults to {pad, bos, eos}: projecting a sentence row
    onto a special token is never a valid perturbation. Tokens whose mapped
    embedding has zero norm are auto-excluded with a warning.
    """
    vocab = model.vocabulary
    if excluded_ids is None:
        excluded = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    else:
        excluded = {int(i) for i in excluded_ids}
        for i in excluded:
            if not 0 <= i < len(vocab):
                raise ValueError(f"excluded id {i} outside vocabulary")
    mapped = emb_map.apply(model.embed_table)
    norms = mapped.norm(dim=1)
    degenerate = (norms == 0).nonzero().flatten().tolist()
    if degenerate:
        warnings.warn(f"excluding {len(degenerate)} token(s) with zero-norm mapped embeddings")
        excluded.update(int(i) for i in degenerate)
    if len(excluded) >= len(vocab):
        raise ModelError("projection index would exclude every vocabulary token")
    safe = torch.where(norms == 0, torch.ones_like(norms), norms)
    matrix = mapped / safe.unsqueeze(1)
    fp = f"{model.fingerprint()}:{emb_map.fingerprint()}"
    return ProjectionIndex(matrix, frozenset(excluded), fp)


def project_embeddings(e_g: torch.Tensor, index: ProjectionIndex,
                       emb_map: EmbeddingMap, model: NmtModel
                       ) -> tuple[TokenIds, torch.Tensor]:
    """Snap each row of ``e_g`` to its cosine-nearest token in LM space.

    Returns the winning token ids and their NMT-space embedding rows.
    Ties break toward the smallest token id.
    """
    if not torch.isfinite(e_g).all():
        raise ModelError("non-finite embedding rows in projection")
    mapped = emb_map.apply(e_g.detach())
    norms = mapped.norm(dim=1, keepdim=True)
    if bool((norms == 0).any()):
        raise ModelError("zero-norm mapped row in projection")
    scores = (mapped / norms) @ index.lm_vocab_matrix.T
    for i in index.excluded_ids:
        scores[:, i] = float("-inf")
    # numpy argmax picks the first (smallest) id on exact ties
    ids = tuple(int(i) for i in scores.cpu().numpy().argmax(axis=1))
    return ids, model.embed_table[torch.tensor(ids, dtype=torch.long)]


# -- optional on-disk cache ----------------------------------------------------

def save_index(index: ProjectionIndex, path: str | Path) -> None:
    np.savez(
        path,
        matrix=index.lm_vocab_matrix.cpu().numpy(),
        excluded=np.array(sorted(index.excluded_ids), dtype=np.int64),
        fingerprint=np.array(index.fingerprint),
    )


def load_index(path: str | Path, expected_fingerprint: str | None = None) -> ProjectionIndex:
    """Load a cached index; refuses a fingerprint mismatch."""
    try:
        with np.load(path, allow_pickle=False) as data:
            matrix = torch.from_numpy(data["matrix"])
            excluded = frozenset(int(i) for i in data["excluded"])
            fp = str(data["fingerprint"])
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read projection index {path}: {exc}") from exc
    if expected_fingerprint is not None and fp != expected_fingerprint:
        raise DataError(f"projection index {path} was built for a different model/map")
    return ProjectionIndex(matrix, excluded, fp)


def cached_index(model: NmtModel, emb_map: EmbeddingMap, cache_dir: str | Path | None,
                 excluded_ids: Sequence[int] | None = None) -> ProjectionIndex:
    """Build the index, or reuse a cache file when the fingerprint matches."""
    if cache_dir is None:
        return build_index(model, emb_map, excluded_ids)
    fp = f"{model.fingerprint()}:{emb_map.fingerprint()}"
    path = Path(cache_dir) / f"index-{hash_short(fp)}.npz"
    if path.exists():
        try:
            return load_index(path, expected_fingerprint=fp)
        except DataError:
            pass  # stale or foreign cache entry; rebuild below
    index = build_index(model, emb_map, excluded_ids)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_index(index, path)
    return index


def hash_short(fingerprint: str) -> str:
    import hashlib

    return hashlib.sha256(fingerprint.encode()).hexdigest()[:16]
