"""Iterated gradient-projection attack loop.

Per iteration: re-select the easiest translation position for the keyword,
take one Adam step on the combined objective in NMT embedding space, project
every row back to the nearest valid token (LM-space cosine), and test the
projected sentence. The continuous point is snapped to the projected
embeddings only when the projected sentence is new; repeats keep descending
unreset so the search cannot cycle. If a weight in the alpha schedule fails
after ``max_iterations`` steps the attack restarts from the original
sentence with the next, smaller alpha.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import torch

from .errors import TargetError
from .gateway import EmbeddingMap, NmtModel
from .objective import (ObjectiveConfig, TargetSpec, select_attack_position,
                        select_nth_likely_target, total_loss)
from .projection import ProjectionIndex, project_embeddings
from .vocab import TokenIds


@dataclass(frozen=True)
class AttackConfig:
    learning_rate: float = 0.02
    max_iterations: int = 500          # per alpha
    alpha_schedule: tuple[float, ...] = (10.0, 4.0, 1.0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if len(self.alpha_schedule) == 0:
            raise ValueError("alpha_schedule must be non-empty")
        if list(self.alpha_schedule) != sorted(self.alpha_schedule, reverse=True) or \
                len(set(self.alpha_schedule)) != len(self.alpha_schedule):
            raise ValueError("alpha_schedule must be strictly decreasing")


@dataclass(frozen=True)
class AttackResult:
    success: bool
    adversarial_tokens: TokenIds
    adversarial_text: str
    translation: TokenIds
    translation_text: str
    target_token: int
    iterations_used: int
    alpha_used: float | None
    perturbed_token_count: int
    position_history: tuple[int, ...]
    source_tokens: TokenIds
    error: str | None = None


@dataclass(frozen=True)
class TraceEvent:
    """Per-iteration diagnostics passed to an optional trace hook."""

    iteration: int            # 1-based, cumulative over the whole schedule
    alpha: float
    position: int
    candidate: TokenIds
    is_new: bool
    visited_size: int
    embeddings: torch.Tensor  # e_g after the snap-or-keep decision (detached copy)


TraceHook = Callable[[TraceEvent], None]


def _hamming(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(x != y for x, y in zip(a, b)) + abs(len(a) - len(b))


def resolve_target(model: NmtModel, source: Sequence[int], target: TargetSpec
                   ) -> tuple[int, TokenIds]:
    """Fix the target token id and return it with the clean translation.

    nth-most-likely mode resolves t once, from the unperturbed sentence's
    logits; the attack position still re-selects every iteration.
    """
    source = model.vocabulary.validate_ids(source)
    with torch.no_grad():
        clean_tokens, clean_logits = model.translate_with_logits(model.embed(source))
    if target.mode == "predefined":
        t = int(target.keyword_token)
        if not 0 <= t < len(model.vocabulary):
            raise TargetError(f"keyword token {t} outside vocabulary")
    else:
        if len(clean_tokens) == 0:
            raise TargetError("empty clean translation; cannot rank target candidates")
        _, t = select_nth_likely_target(clean_logits, int(target.n))
    return t, clean_tokens


def run_attack(model: NmtModel, emb_map: EmbeddingMap, index: ProjectionIndex,
               source: Sequence[int], target: TargetSpec, cfg: AttackConfig,
               trace_hook: Optional[TraceHook] = None) -> AttackResult:
    """Attack one sentence; see the module docstring for the loop contract."""
    vocab = model.vocabulary
    source = vocab.validate_ids(source)
    t, clean_translation = resolve_target(model, source, target)

    def result(success, tokens, translation, iterations, alpha, history):
        return AttackResult(
            success=success,
            adversarial_tokens=tokens,
            adversarial_text=vocab.detokenize(tokens),
            translation=translation,
            translation_text=vocab.detokenize(translation) if translation else "",
            target_token=t,
            iterations_used=iterations,
            alpha_used=alpha,
            perturbed_token_count=_hamming(source, tokens),
            position_history=tuple(history),
            source_tokens=source,
        )

    if t in clean_translation:
        # keyword already present: the clean sentence is its own adversary
        return result(True, source, clean_translation, 0, None, ())

    orig_e = model.embed(source)
    v_orig = emb_map.apply(orig_e)
    translations: dict[TokenIds, TokenIds] = {source: clean_translation}

    iterations = 0
    history: list[int] = []
    last_candidate, last_translation = source, clean_translation

    for alpha in cfg.alpha_schedule:
        obj = ObjectiveConfig(alpha=alpha)
        e_g = orig_e.clone().requires_grad_(True)
        optimizer = torch.optim.Adam([e_g], lr=cfg.learning_rate, betas=cfg.adam_betas)
        visited: set[TokenIds] = set()

        for _ in range(cfg.max_iterations):
            iterations += 1
            decoded, logits = model.translate_with_logits(e_g)
            k = select_attack_position(logits, t)
            history.append(k)

            loss = total_loss(logits, k, t, v_orig, emb_map.apply(e_g), obj)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            with torch.no_grad():
                candidate, e_p = project_embeddings(e_g.detach(), index, emb_map, model)
                is_new = candidate not in visited
                if is_new:
                    visited.add(candidate)
                    e_g.data.copy_(e_p)
                if candidate not in translations:
                    translations[candidate] = model.greedy_translate(candidate)
                translation = translations[candidate]
                if trace_hook is not None:
                    trace_hook(TraceEvent(iterations, alpha, k, candidate, is_new,
                                          len(visited), e_g.detach().clone()))
                last_candidate, last_translation = candidate, translation
                if t in translation:
                    return result(True, candidate, translation, iterations, alpha, history)

    return result(False, last_candidate, last_translation, iterations,
                  cfg.alpha_schedule[-1], history)


def attack_batch(model: NmtModel, emb_map: EmbeddingMap, index: ProjectionIndex,
                 sources: Sequence[Sequence[int]], target: TargetSpec,
                 cfg: AttackConfig, workers: int = 1) -> list[AttackResult]:
    """Independent per-sentence attacks, order-preserving.

    Per-sentence errors are embedded in the result list instead of aborting
    the batch. Workers > 1 runs sentences in threads; the model handle is
    read-only so this is safe, and results are identical to the serial run.
    """
    if len(sources) == 0:
        raise ValueError("attack_batch needs at least one source sentence")

    def one(ids: Sequence[int]) -> AttackResult:
        try:
            return run_attack(model, emb_map, index, ids, target, cfg)
        except Exception as exc:  # noqa: BLE001 - contract: never abort the batch
            ids_t = tuple(int(i) for i in ids)
            return AttackResult(
                success=False, adversarial_tokens=ids_t, adversarial_text="",
                translation=(), translation_text="", target_token=-1,
                iterations_used=0, alpha_used=None, perturbed_token_count=0,
                position_history=(), source_tokens=ids_t, error=str(exc),
            )

    if workers <= 1:
        return [one(ids) for ids in sources]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, sources))
