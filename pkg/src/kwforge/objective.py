"""Attack objective: keyword cross-entropy, position selection, similarity.

Positions are 0-based throughout. Logits are m x |V| tensors, one row per
translation position. All losses are differentiable torch expressions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal

import torch

from .errors import TargetError
from .vocab import Vocabulary


@dataclass(frozen=True)
class TargetSpec:
    """What to force into the translation.

    ``predefined``: keyword_token is the target class t.
    ``nth_most_likely``: t is resolved per sentence as the n-th most probable
    token (1-based rank) at the position where it trails the top token least.
    """

    mode: Literal["predefined", "nth_most_likely"]
    keyword_token: int | None = None
    n: int | None = None

    def __post_init__(self):
        if self.mode == "predefined":
            if self.keyword_token is None or self.keyword_token < 0:
                raise ValueError("predefined target needs a keyword token id")
        elif self.mode == "nth_most_likely":
            if self.n is None or self.n < 1:
                raise ValueError("nth-most-likely target needs a rank n >= 1")
        else:
            raise ValueError(f"unknown target mode {self.mode!r}")

    @classmethod
    def keyword(cls, token_id: int) -> "TargetSpec":
        return cls(mode="predefined", keyword_token=token_id)

    @classmethod
    def nth(cls, n: int) -> "TargetSpec":
        return cls(mode="nth_most_likely", n=n)


@dataclass(frozen=True)
class ObjectiveConfig:
    """alpha weights the similarity term against the keyword loss."""

    alpha: float

    def __post_init__(self):
        if not (self.alpha >= 0 and self.alpha == self.alpha):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")


def adversarial_loss(logits: torch.Tensor, k: int, t: int) -> torch.Tensor:
    """Cross-entropy of target class t at translation position k: -log softmax(z_k)[t]."""
    m, vsize = logits.shape
    if not 0 <= k < m:
        raise IndexError(f"position {k} out of range for {m} translation positions")
    if not 0 <= t < vsize:
        raise IndexError(f"target token {t} out of range for vocabulary of {vsize}")
    return -torch.log_softmax(logits[k], dim=0)[t]


def _gaps_to_target(logits: torch.Tensor, t: int) -> torch.Tensor:
    """Per-position logit gap between the most probable token and t."""
    return logits.max(dim=1).values - logits[:, t]


def select_attack_position(logits: torch.Tensor, t: int) -> int:
    """Position where inserting t is easiest: argmin_i (max_j z_ij - z_it).

    Ties break toward the smallest position index.
    """
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("logits must be a non-empty m x |V| tensor")
    if not 0 <= t < logits.shape[1]:
        raise IndexError(f"target token {t} out of range for vocabulary of {logits.shape[1]}")
    gaps = _gaps_to_target(logits, t)
    # numpy argmin guarantees first-occurrence tie-breaking
    return int(gaps.detach().cpu().numpy().argmin())


def select_nth_likely_target(logits: torch.Tensor, n: int) -> tuple[int, int]:
    """Pick (position, token) for the n-th most-likely class attack.

    At each position the candidate is the token with the n-th largest logit
    (rank ties -> smallest token id); the chosen position minimises the gap
    to the top token (ties -> smallest position).
    """
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("logits must be a non-empty m x |V| tensor")
    m, vsize = logits.shape
    if not 1 <= n <= vsize:
        raise ValueError(f"rank n={n} invalid for vocabulary of {vsize}")
    z = logits.detach().cpu().numpy()
    best_pos, best_tok, best_gap = 0, 0, None
    for i in range(m):
        # stable sort on (-logit, token id): n-th largest, smallest id on ties
        order = sorted(range(vsize), key=lambda j: (-z[i, j], j))
        tok = order[n - 1]
        gap = z[i].max() - z[i, tok]
        if best_gap is None or gap < best_gap:
            best_pos, best_tok, best_gap = i, tok, gap
    return best_pos, best_tok


def similarity_loss(v: torch.Tensor, v_prime: torch.Tensor) -> torch.Tensor:
    """Mean cosine distance between aligned LM-space rows: (1/n) sum_i (1 - cos(v_i, v'_i)).

    Evaluated as |u_i - u'_i|^2 / 2 on the normalized rows, which equals
    1 - cos exactly in the reals and returns exactly 0.0 on identical
    inputs; each term is clamped to [0, 2] against rounding at the
    antipodal bound.
    """
    if v.shape != v_prime.shape or v.ndim != 2:
        raise ValueError(f"row matrices must share shape, got {tuple(v.shape)} vs {tuple(v_prime.shape)}")
    norms_a = v.norm(dim=1, keepdim=True)
    norms_b = v_prime.norm(dim=1, keepdim=True)
    if bool((norms_a == 0).any()) or bool((norms_b == 0).any()):
        raise ValueError("zero-norm row in similarity loss")
    diff = v / norms_a - v_prime / norms_b
    return (diff.pow(2).sum(dim=1) / 2).clamp(0.0, 2.0).mean()


def total_loss(logits: torch.Tensor, k: int, t: int,
               v: torch.Tensor, v_prime: torch.Tensor,
               cfg: ObjectiveConfig) -> torch.Tensor:
    """Combined objective: keyword cross-entropy plus alpha * similarity distance."""
    return adversarial_loss(logits, k, t) + cfg.alpha * similarity_loss(v, v_prime)


def resolve_keyword_token(vocabulary: Vocabulary, keyword: str) -> int:
    """Map a keyword string to its target token id.

    Multi-token keywords fall back to their first token with a warning;
    keywords outside the vocabulary raise TargetError.
    """
    try:
        ids = vocabulary.tokenize(keyword)
    except ValueError as exc:
        raise TargetError(str(exc)) from exc
    if all(i == vocabulary.unk_id for i in ids):
        raise TargetError(f"keyword {keyword!r} is not in the vocabulary")
    known = [i for i in ids if i != vocabulary.unk_id]
    if len(ids) > 1:
        warnings.warn(
            f"keyword {keyword!r} tokenizes to {len(ids)} tokens; using the first "
            f"known token {vocabulary.tokens[known[0]]!r} as the target",
            stacklevel=2,
        )
    return known[0]
