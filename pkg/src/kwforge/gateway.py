"""Differentiable gateway to sequence-to-sequence translation models.

All models expose the same surface:

  * ``vocabulary`` / ``embed_table`` / ``decode_limit``
  * ``tokenize`` / ``detokenize`` / ``embed``
  * ``translate_with_logits(e, forced_prefix=None)`` returning the decoded
    token sequence and one logits row per decoded position, with gradients
    of any scalar of the logits flowing back to ``e``.

The bundled toy model is a seeded single-layer attention encoder-decoder
(vocab 48, d=16) in float64, small enough that every acceptance check runs
on a laptop with no downloads. Its output projection is tied to the
embedding table and its embeddings are drawn in angular clusters, so the
embedding space has the near-neighbour structure the projection step needs
(real subword vocabularies are far denser still).
"""
from __future__ import annotations

import hashlib
import math
from typing import Callable, Optional, Sequence

import torch

from .errors import ModelError
from .vocab import TokenIds, Vocabulary, toy_vocabulary


class EmbeddingMap:
    """Affine map from the NMT embedding space (d) to the LM space (d_lm)."""

    def __init__(self, weight: torch.Tensor, bias: torch.Tensor):
        if weight.ndim != 2 or bias.ndim != 1 or bias.shape[0] != weight.shape[0]:
            raise ValueError(f"inconsistent map shapes {tuple(weight.shape)} / {tuple(bias.shape)}")
        if not (torch.isfinite(weight).all() and torch.isfinite(bias).all()):
            raise ValueError("embedding map parameters must be finite")
        self.weight = weight
        self.bias = bias

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def identity(cls, in_dim: int, out_dim: int | None = None,
                 dtype: torch.dtype = torch.float64) -> "EmbeddingMap":
        """Identity on the min(in, out) leading dims, zeros elsewhere, zero bias."""
        out_dim = in_dim if out_dim is None else out_dim
        weight = torch.zeros(out_dim, in_dim, dtype=dtype)
        k = min(in_dim, out_dim)
        weight[:k, :k] = torch.eye(k, dtype=dtype)
        return cls(weight, torch.zeros(out_dim, dtype=dtype))

    def apply(self, rows: torch.Tensor) -> torch.Tensor:
        """Map rows (n x d) into the LM space (n x d_lm)."""
        if rows.shape[-1] != self.in_dim:
            raise ValueError(f"rows have dim {rows.shape[-1]}, map expects {self.in_dim}")
        return rows @ self.weight.T.to(rows.dtype) + self.bias.to(rows.dtype)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.weight.detach().to(torch.float64).numpy().tobytes())
        h.update(self.bias.detach().to(torch.float64).numpy().tobytes())
        return h.hexdigest()


class NmtModel:
    """Base class for translation model handles.

    Handles are read-only after construction and safe to share across
    concurrent forward passes; each attack owns its own gradient context.
    """

    vocabulary: Vocabulary
    embed_table: torch.Tensor  # |V| x d
    decode_limit: int

    # -- vocabulary plumbing ------------------------------------------------

    def tokenize(self, text: str) -> TokenIds:
        return self.vocabulary.tokenize(text)

    def detokenize(self, ids: Sequence[int]) -> str:
        return self.vocabulary.detokenize(ids)

    @property
    def d(self) -> int:
        return self.embed_table.shape[1]

    def embed(self, ids: Sequence[int]) -> torch.Tensor:
        """NMT-space embedding rows for a token sequence (n x d)."""
        ids = self.vocabulary.validate_ids(ids)
        return self.embed_table[torch.tensor(ids, dtype=torch.long)]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update("\x00".join(self.vocabulary.tokens).encode())
        h.update(self.embed_table.detach().to(torch.float64).numpy().tobytes())
        return h.hexdigest()

    # -- decoding -----------------------------------------------------------

    def translate_with_logits(
        self, e: torch.Tensor, forced_prefix: Optional[Sequence[int]] = None
    ) -> tuple[TokenIds, torch.Tensor]:
        """Decode from source embeddings ``e`` (n x d).

        Greedy decoding (beam width 1) up to ``decode_limit`` unless a
        ``forced_prefix`` teacher-forces the decoder. Returns the decoded
        tokens and an m x |V| logits tensor, one row per decoded position;
        the logits stay connected to ``e`` in the autograd graph.
        """
        raise NotImplementedError

    def greedy_translate(self, ids: Sequence[int]) -> TokenIds:
        """Canonical f(x): greedy translation of a token sequence."""
        with torch.no_grad():
            tokens, _ = self.translate_with_logits(self.embed(ids))
        return tokens


class ToyTranslationModel(NmtModel):
    """Deterministic single-layer attention encoder-decoder.

    encoder:  H = E W_enc + P_src[:n]
    step j:   u = embed[prev] W_dec + Q_step[j]
              a = softmax(H u / sqrt(d));  c = a H
              z = tanh(c W_ctx + u W_qry + b_z)
              logits = tau * z @ embed_table^T + b_out

    Greedy decoding never emits pad/bos, and never emits eos at the first
    step, so translations have length >= 1.
    """

    MAX_SOURCE_LEN = 32

    def __init__(self, vocabulary: Vocabulary, embed_table: torch.Tensor, *,
                 W_enc: torch.Tensor, P_src: torch.Tensor, W_dec: torch.Tensor,
                 Q_step: torch.Tensor, W_ctx: torch.Tensor, W_qry: torch.Tensor,
                 b_z: torch.Tensor, b_out: torch.Tensor, tau: float,
                 decode_limit: int):
        if embed_table.shape[0] != len(vocabulary):
            raise ValueError("embed_table rows must match vocabulary size")
        if Q_step.shape[0] < decode_limit:
            raise ValueError("Q_step must cover decode_limit steps")
        self.vocabulary = vocabulary
        self.embed_table = embed_table
        self.W_enc, self.P_src = W_enc, P_src
        self.W_dec, self.Q_step = W_dec, Q_step
        self.W_ctx, self.W_qry = W_ctx, W_qry
        self.b_z, self.b_out = b_z, b_out
        self.tau = tau
        self.decode_limit = decode_limit

    @classmethod
    def seeded(cls, seed: int = 0, *, d: int = 16, decode_limit: int = 12,
               n_clusters: int = 12, cluster_sigma: float = 0.5,
               tau: float = 6.0, vocabulary: Vocabulary | None = None
               ) -> "ToyTranslationModel":
        """Standard toy fixture: weights fixed by seed, float64."""
        vocab = vocabulary if vocabulary is not None else toy_vocabulary()
        V = len(vocab)
        g = torch.Generator().manual_seed(seed)

        def rnd(*shape, scale=1.0):
            return torch.randn(*shape, generator=g, dtype=torch.float64) * scale

        # unit-norm embeddings drawn around cluster centres so tokens have
        # angular near-neighbours (cosine projection needs crossable gaps)
        centers = rnd(n_clusters, d)
        centers = centers / centers.norm(dim=1, keepdim=True)
        rows = centers[torch.arange(V) % n_clusters] + cluster_sigma * rnd(V, d)
        embed_table = rows / rows.norm(dim=1, keepdim=True)

        eye = torch.eye(d, dtype=torch.float64)
        mix = 0.3 / math.sqrt(d)
        return cls(
            vocab, embed_table,
            W_enc=0.8 * eye + rnd(d, d, scale=mix),
            P_src=rnd(cls.MAX_SOURCE_LEN, d, scale=0.3),
            W_dec=0.8 * eye + rnd(d, d, scale=mix),
            Q_step=rnd(decode_limit, d, scale=0.3),
            W_ctx=0.8 * eye + rnd(d, d, scale=mix),
            W_qry=rnd(d, d, scale=mix),
            b_z=rnd(d, scale=0.1),
            b_out=rnd(V, scale=0.1),
            tau=tau,
            decode_limit=decode_limit,
        )

    def translate_with_logits(
        self, e: torch.Tensor, forced_prefix: Optional[Sequence[int]] = None
    ) -> tuple[TokenIds, torch.Tensor]:
        if e.ndim != 2 or e.shape[1] != self.d:
            raise ValueError(f"expected n x {self.d} embeddings, got {tuple(e.shape)}")
        if e.shape[0] > self.MAX_SOURCE_LEN:
            raise ValueError(f"source longer than {self.MAX_SOURCE_LEN} tokens")
        if not torch.isfinite(e).all():
            raise ModelError("non-finite source embeddings")
        vocab = self.vocabulary
        n = e.shape[0]
        H = e @ self.W_enc + self.P_src[:n]

        forced = None if forced_prefix is None else vocab.validate_ids(forced_prefix)
        limit = len(forced) if forced is not None else self.decode_limit
        if forced is not None and limit > self.Q_step.shape[0]:
            raise ValueError(f"forced prefix longer than decoder horizon {self.Q_step.shape[0]}")

        rows: list[torch.Tensor] = []
        decoded: list[int] = []
        prev = vocab.bos_id
        for j in range(limit):
            u = self.embed_table[prev] @ self.W_dec + self.Q_step[j]
            attn = torch.softmax(H @ u / math.sqrt(self.d), dim=0)
            c = attn @ H
            z = torch.tanh(c @ self.W_ctx + u @ self.W_qry + self.b_z)
            logits = self.tau * (z @ self.embed_table.T) + self.b_out
            rows.append(logits)
            if forced is not None:
                prev = forced[j]
                continue
            choice = logits.detach().clone()
            choice[vocab.pad_id] = float("-inf")
            choice[vocab.bos_id] = float("-inf")
            if j == 0:
                choice[vocab.eos_id] = float("-inf")
            nxt = int(choice.argmax())
            if nxt == vocab.eos_id:
                break
            decoded.append(nxt)
            prev = nxt

        if forced is not None:
            return forced, torch.stack(rows)
        # one logits row per decoded token; the row that chose eos is dropped
        return tuple(decoded), torch.stack(rows[: len(decoded)])


# -- adapter registry ---------------------------------------------------------

ModelFactory = Callable[[str, str], NmtModel]  # (model_id, device) -> handle

_ADAPTERS: dict[str, ModelFactory] = {}


def register_adapter(name: str, factory: ModelFactory) -> None:
    """Register a named constructor for real translation models."""
    _ADAPTERS[name] = factory


def available_adapters() -> tuple[str, ...]:
    return tuple(sorted(_ADAPTERS))


def resolve_model(spec: str, device: str = "cpu") -> NmtModel:
    """Build a model handle from a spec string.

    ``toy`` or ``toy:<seed>`` builds the bundled toy model; any other name
    must be a registered adapter, given as ``<adapter>:<model-id>``.
    """
    name, _, model_id = spec.partition(":")
    if name == "toy":
        seed = int(model_id) if model_id else 0
        return ToyTranslationModel.seeded(seed)
    if name == "marian" and name not in _ADAPTERS:
        # bundled optional adapter; import lazily so transformers stays optional
        try:
            from . import hf_marian  # noqa: F401
        except ImportError as exc:
            raise ModelError(f"adapter 'marian' needs the transformers extra: {exc}") from exc
    if name not in _ADAPTERS:
        raise ModelError(f"unknown model adapter {name!r} (available: {', '.join(available_adapters()) or 'none'})")
    if not model_id:
        raise ModelError(f"adapter {name!r} needs a model id, e.g. {name}:<model-id>")
    return _ADAPTERS[name](model_id, device)
