"""kwforge: targeted keyword-insertion attacks on seq2seq translation models.

Craft adversarial source sentences by gradient descent in the model's
embedding space with nearest-token projection, so that a chosen keyword
appears in the translation; evaluate success rate, BLEU degradation, and
semantic similarity.
"""
from .attack import AttackConfig, AttackResult, TraceEvent, attack_batch, run_attack
from .errors import (DataError, KwforgeError, MetricError, ModelError,
                     TargetError, TrainingError)
from .evaluation import (BenchmarkRecord, LmEmbeddingSimilarityScorer,
                         MetricsReport, SentenceSimilarityScorer, compute_asr,
                         compute_corpus_bleu, compute_rdbleu,
                         compute_similarity, run_benchmark, summarize_records)
from .gateway import (EmbeddingMap, NmtModel, ToyTranslationModel,
                      available_adapters, register_adapter, resolve_model)
from .mapper import (MapperTrainConfig, MapperTrainReport, load_map,
                     projection_self_consistency, save_map, train_mapper)
from .objective import (ObjectiveConfig, TargetSpec, adversarial_loss,
                        resolve_keyword_token, select_attack_position,
                        select_nth_likely_target, similarity_loss, total_loss)
from .projection import (ProjectionIndex, build_index, cached_index,
                         load_index, project_embeddings, save_index)
from .vocab import Vocabulary, toy_vocabulary

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackResult", "TraceEvent", "attack_batch", "run_attack",
    "DataError", "KwforgeError", "MetricError", "ModelError", "TargetError", "TrainingError",
    "BenchmarkRecord", "LmEmbeddingSimilarityScorer", "MetricsReport",
    "SentenceSimilarityScorer", "compute_asr", "compute_corpus_bleu",
    "compute_rdbleu", "compute_similarity", "run_benchmark", "summarize_records",
    "EmbeddingMap", "NmtModel", "ToyTranslationModel",
    "available_adapters", "register_adapter", "resolve_model",
    "MapperTrainConfig", "MapperTrainReport", "load_map",
    "projection_self_consistency", "save_map", "train_mapper",
    "ObjectiveConfig", "TargetSpec", "adversarial_loss", "resolve_keyword_token",
    "select_attack_position", "select_nth_likely_target", "similarity_loss", "total_loss",
    "ProjectionIndex", "build_index", "cached_index", "load_index",
    "project_embeddings", "save_index",
    "Vocabulary", "toy_vocabulary",
]
