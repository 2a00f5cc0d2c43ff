"""Attack metrics: success rate, BLEU degradation, semantic similarity.

Conventions (also recorded in report metadata):
  * BLEU tokenization is whitespace splitting, case-sensitive.
  * BLEU is corpus-level 4-gram with brevity penalty; orders 2-4 use add-one
    smoothing, order 1 is unsmoothed so disjoint corpora score exactly 0.
  * RDBLEU and similarity are computed over successful attacks only, and
    trivially-successful sentences (keyword already in the clean
    translation) are excluded from both; ASR counts them as successes.
"""
from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .attack import AttackConfig, AttackResult, attack_batch
from .errors import MetricError
from .gateway import EmbeddingMap, NmtModel
from .objective import TargetSpec
from .projection import ProjectionIndex

BLEU_TOKENIZATION = "whitespace"


# -- corpus BLEU ----------------------------------------------------------------

def _ngram_counts(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def compute_corpus_bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus-level BLEU in [0, 100]; see the module docstring for the exact rule."""
    if len(hypotheses) == 0:
        raise ValueError("BLEU needs at least one sentence pair")
    if len(hypotheses) != len(references):
        raise ValueError(f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}")

    matched = [0] * 4
    total = [0] * 4
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h_toks, r_toks = hyp.split(), ref.split()
        hyp_len += len(h_toks)
        ref_len += len(r_toks)
        for n in range(1, 5):
            h_counts = _ngram_counts(h_toks, n)
            r_counts = _ngram_counts(r_toks, n)
            total[n - 1] += max(len(h_toks) - n + 1, 0)
            matched[n - 1] += sum(min(c, r_counts.get(g, 0)) for g, c in h_counts.items())

    if hyp_len == 0 or matched[0] == 0:
        return 0.0
    log_precisions = [math.log(matched[0] / total[0])]
    for n in range(2, 5):
        log_precisions.append(math.log((matched[n - 1] + 1) / (total[n - 1] + 1)))
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(sum(log_precisions) / 4.0)


# -- records and report -----------------------------------------------------------

def is_trivial_success(result: AttackResult) -> bool:
    """Keyword was already in the clean translation: success at zero iterations."""
    return result.success and result.iterations_used == 0


@dataclass(frozen=True)
class BenchmarkRecord:
    source_text: str
    reference_translation: str
    clean_translation: str
    adversarial_translation: str
    attack_result: AttackResult

    @property
    def clean_bleu_inputs(self) -> tuple[str, str]:
        return self.clean_translation, self.reference_translation

    @property
    def adversarial_bleu_inputs(self) -> tuple[str, str]:
        return self.adversarial_translation, self.reference_translation


@dataclass
class MetricsReport:
    asr: float
    rdbleu: float | None
    similarity: float | None
    total: int
    successful: int
    trivially_successful: int
    errored: int
    bleu_clean: float | None = None
    bleu_adversarial: float | None = None
    per_keyword: dict[str, dict[str, float]] = field(default_factory=dict)
    metadata: dict[str, object] = field(default_factory=dict)


def compute_asr(results: Sequence[AttackResult]) -> float:
    """Fraction of attacked sentences whose translation contains the target."""
    if len(results) == 0:
        raise ValueError("ASR over an empty result list is undefined")
    return sum(r.success for r in results) / len(results)


def _scored_subset(records: Sequence[BenchmarkRecord]) -> list[BenchmarkRecord]:
    return [r for r in records
            if r.attack_result.success and not is_trivial_success(r.attack_result)]


def compute_rdbleu(records: Sequence[BenchmarkRecord]) -> float:
    """Relative BLEU decrease (clean - adversarial) / clean over successful attacks."""
    subset = _scored_subset(records)
    if not subset:
        raise MetricError("RDBLEU is undefined without successful non-trivial attacks")
    refs = [r.reference_translation for r in subset]
    clean = compute_corpus_bleu([r.clean_translation for r in subset], refs)
    adv = compute_corpus_bleu([r.adversarial_translation for r in subset], refs)
    if clean == 0.0:
        raise MetricError("clean BLEU is zero; RDBLEU undefined")
    return (clean - adv) / clean


class SentenceSimilarityScorer(Protocol):
    """Pluggable source-vs-adversarial similarity, higher = more similar."""

    def score(self, original: str, perturbed: str) -> float: ...


class LmEmbeddingSimilarityScorer:
    """Desk-scale default: cosine of mean-pooled LM-space token embeddings."""

    def __init__(self, model: NmtModel, emb_map: EmbeddingMap):
        self.model = model
        self.emb_map = emb_map

    def score(self, original: str, perturbed: str) -> float:
        a = self.emb_map.apply(self.model.embed(self.model.tokenize(original))).mean(dim=0)
        b = self.emb_map.apply(self.model.embed(self.model.tokenize(perturbed))).mean(dim=0)
        denom = a.norm() * b.norm()
        if float(denom) == 0.0:
            raise MetricError("zero-norm pooled embedding in similarity scorer")
        return float(a @ b / denom)


def compute_similarity(records: Sequence[BenchmarkRecord],
                       scorer: SentenceSimilarityScorer) -> float:
    """Mean scorer(source, adversarial) over successful non-trivial attacks."""
    subset = _scored_subset(records)
    if not subset:
        raise MetricError("similarity is undefined without successful non-trivial attacks")
    scores = []
    for rec in subset:
        try:
            scores.append(scorer.score(rec.source_text, rec.attack_result.adversarial_text))
        except Exception as exc:  # noqa: BLE001 - contract: skip the record, keep the batch
            warnings.warn(f"similarity scorer failed on {rec.source_text!r}: {exc}")
    if not scores:
        raise MetricError("similarity scorer failed on every successful record")
    return sum(scores) / len(scores)


def summarize_records(records: Sequence[BenchmarkRecord],
                      scorer: SentenceSimilarityScorer | None = None,
                      metadata: dict | None = None,
                      token_name=None) -> MetricsReport:
    """Assemble the standard report from attack records."""
    if len(records) == 0:
        raise ValueError("cannot summarize zero records")
    results = [r.attack_result for r in records]
    subset = _scored_subset(records)
    bleu_clean = bleu_adv = None
    rdbleu: float | None = 0.0  # nothing degraded when no successful non-trivial attacks
    if subset:
        refs = [r.reference_translation for r in subset]
        bleu_clean = compute_corpus_bleu([r.clean_translation for r in subset], refs)
        bleu_adv = compute_corpus_bleu([r.adversarial_translation for r in subset], refs)
        rdbleu = (bleu_clean - bleu_adv) / bleu_clean if bleu_clean > 0 else None
    similarity = None
    if scorer is not None and subset:
        try:
            similarity = compute_similarity(records, scorer)
        except MetricError:
            similarity = None

    per_keyword: dict[str, dict[str, float]] = {}
    for rec in records:
        res = rec.attack_result
        # group by resolved target token (varies per sentence in nth mode)
        if res.target_token < 0:
            key = "<error>"
        elif token_name is not None:
            key = token_name(res.target_token)
        else:
            key = f"#{res.target_token}"
        bucket = per_keyword.setdefault(key, {"total": 0, "successful": 0})
        bucket["total"] += 1
        bucket["successful"] += int(res.success)
    for bucket in per_keyword.values():
        bucket["asr"] = bucket["successful"] / bucket["total"]

    meta = {"bleu_tokenization": BLEU_TOKENIZATION}
    if metadata:
        meta.update(metadata)
    return MetricsReport(
        asr=compute_asr(results),
        rdbleu=rdbleu,
        similarity=similarity,
        total=len(records),
        successful=sum(r.success for r in results),
        trivially_successful=sum(is_trivial_success(r) for r in results),
        errored=sum(r.error is not None for r in results),
        bleu_clean=bleu_clean,
        bleu_adversarial=bleu_adv,
        per_keyword=per_keyword,
        metadata=meta,
    )


def run_benchmark(model: NmtModel, emb_map: EmbeddingMap, index: ProjectionIndex,
                  dataset: Sequence[tuple[str, str]], target: TargetSpec,
                  cfg: AttackConfig, *, sample_size: int | None = None,
                  seed: int = 0, scorer: SentenceSimilarityScorer | None = None,
                  workers: int = 1) -> tuple[MetricsReport, list[BenchmarkRecord]]:
    """Attack a (sampled) parallel dataset and compute all metrics.

    Deterministic under a fixed seed: the sample, every attack, and the
    report are reproducible bit-for-bit within a process.
    """
    if len(dataset) == 0:
        raise ValueError("benchmark dataset is empty")
    pairs = list(dataset)
    if sample_size is not None and sample_size < len(pairs):
        rng = random.Random(seed)
        pairs = [pairs[i] for i in sorted(rng.sample(range(len(pairs)), sample_size))]

    sources = [model.tokenize(src) for src, _ in pairs]
    results = attack_batch(model, emb_map, index, sources, target, cfg, workers=workers)

    records = []
    for (src_text, ref_text), ids, res in zip(pairs, sources, results):
        if res.error is None:
            clean = model.detokenize(model.greedy_translate(ids))
        else:
            clean = ""
        records.append(BenchmarkRecord(
            source_text=src_text,
            reference_translation=ref_text,
            clean_translation=clean,
            adversarial_translation=res.translation_text,
            attack_result=res,
        ))
    report = summarize_records(records, scorer=scorer,
                               metadata={"seed": seed, "sample_size": len(pairs),
                                         "alpha_schedule": list(cfg.alpha_schedule),
                                         "learning_rate": cfg.learning_rate,
                                         "max_iterations": cfg.max_iterations},
                               token_name=lambda tid: model.vocabulary.tokens[tid])
    return report, records
