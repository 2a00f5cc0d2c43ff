"""Command-line entry points.

    kwforge attack       one sentence or a dataset; writes a record file
    kwforge benchmark    sampled dataset run with the full metrics report
    kwforge train-mapper train the NMT->LM embedding map on a text corpus
    kwforge report       aggregate record files into a metrics/sweep table

Exit codes: 0 completed run, 2 usage/config error, 3 data error,
4 model/runtime error. A completed run with failed attacks still exits 0.

Flags override values from --config (a JSON file of flag names), which
override built-in defaults. KWFORGE_CACHE names a directory for cached
projection indexes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .attack import AttackConfig
from .corpus import load_parallel_corpus, read_records, write_records
from .errors import DataError, KwforgeError, TargetError
from .evaluation import (LmEmbeddingSimilarityScorer, run_benchmark,
                         summarize_records)
from .gateway import EmbeddingMap, NmtModel, resolve_model
from .mapper import MapperTrainConfig, load_map, projection_self_consistency, save_map, train_mapper
from .objective import TargetSpec, resolve_keyword_token
from .projection import cached_index

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4

DEFAULTS = {
    "model": "toy",
    "device": "cpu",
    "seed": 0,
    "lr": 0.02,
    "max_iter": 500,
    "alpha_schedule": "10,4,1",
    "workers": 1,
    "sample_size": None,
    "out": ".",
    "epochs": 3,
    "batch_size": 16,
    "lr_mapper": 1e-3,
    "lm_layers": 2,
    "lm_width": 32,
}


def _merged(args: argparse.Namespace, key: str):
    """flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    config = getattr(args, "_config", {})
    if key in config:
        return config[key]
    return DEFAULTS.get(key)


def _load_config_file(args: argparse.Namespace) -> None:
    config = {}
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise DataError(f"config file {args.config} must hold a JSON object")
    args._config = config


def _attack_config(args: argparse.Namespace) -> AttackConfig:
    schedule = _merged(args, "alpha_schedule")
    if isinstance(schedule, str):
        schedule = tuple(float(x) for x in schedule.split(",") if x.strip())
    return AttackConfig(
        learning_rate=float(_merged(args, "lr")),
        max_iterations=int(_merged(args, "max_iter")),
        alpha_schedule=tuple(schedule),
        seed=int(_merged(args, "seed")),
    )


def _target(args: argparse.Namespace, model: NmtModel) -> TargetSpec:
    keyword = _merged(args, "keyword")
    nth = _merged(args, "nth")
    if (keyword is None) == (nth is None):
        raise UsageError("exactly one of --keyword or --nth is required")
    if keyword is not None:
        return TargetSpec.keyword(resolve_keyword_token(model.vocabulary, keyword))
    return TargetSpec.nth(int(nth))


class UsageError(Exception):
    pass


def _model_and_map(args: argparse.Namespace) -> tuple[NmtModel, EmbeddingMap]:
    model = resolve_model(str(_merged(args, "model")), str(_merged(args, "device")))
    map_path = _merged(args, "map")
    if map_path:
        emb_map = load_map(map_path, model)
    else:
        emb_map = EmbeddingMap.identity(model.d, dtype=model.embed_table.dtype)
    return model, emb_map


def _cache_dir() -> str | None:
    return os.environ.get("KWFORGE_CACHE") or None


# -- subcommands ---------------------------------------------------------------

def cmd_attack(args: argparse.Namespace) -> int:
    _load_config_file(args)
    model, emb_map = _model_and_map(args)
    target = _target(args, model)
    cfg = _attack_config(args)
    index = cached_index(model, emb_map, _cache_dir())

    if args.sentence is None and _merged(args, "dataset") is None:
        raise UsageError("need --sentence or --dataset")
    if args.sentence is not None:
        pairs = [(args.sentence, "")]
    else:
        pairs = load_parallel_corpus(_merged(args, "dataset"), getattr(args, "reference", None))

    sample = _merged(args, "sample_size")
    report, records = run_benchmark(
        model, emb_map, index, pairs, target, cfg,
        sample_size=int(sample) if sample else None,
        seed=int(_merged(args, "seed")),
        workers=int(_merged(args, "workers")),
    )

    out_dir = Path(_merged(args, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    write_records(records, records_path, config=_run_config_dict(args, cfg, model))
    for rec in records:
        res = rec.attack_result
        status = "ERROR" if res.error else ("ok" if res.success else "fail")
        print(f"[{status}] {rec.source_text!r} -> {res.adversarial_text!r} "
              f"(iters={res.iterations_used} alpha={res.alpha_used} "
              f"changed={res.perturbed_token_count})")
    print(f"attacked {report.total} sentence(s): {report.successful} successful "
          f"({report.trivially_successful} trivially), {report.errored} errored")
    print(f"records written to {records_path}")
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    _load_config_file(args)
    if _merged(args, "dataset") is None:
        raise UsageError("benchmark needs --dataset")
    model, emb_map = _model_and_map(args)
    target = _target(args, model)
    cfg = _attack_config(args)
    index = cached_index(model, emb_map, _cache_dir())
    pairs = load_parallel_corpus(_merged(args, "dataset"), getattr(args, "reference", None))
    sample = _merged(args, "sample_size")

    report, records = run_benchmark(
        model, emb_map, index, pairs, target, cfg,
        sample_size=int(sample) if sample else None,
        seed=int(_merged(args, "seed")),
        scorer=LmEmbeddingSimilarityScorer(model, emb_map),
        workers=int(_merged(args, "workers")),
    )

    out_dir = Path(_merged(args, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records(records, out_dir / "records.jsonl", config=_run_config_dict(args, cfg, model))
    (out_dir / "report.json").write_text(json.dumps(asdict(report), indent=2) + "\n", encoding="utf-8")
    _print_report(report)
    print(f"outputs written to {out_dir}")
    return EXIT_OK


def cmd_train_mapper(args: argparse.Namespace) -> int:
    _load_config_file(args)
    if args.corpus is None:
        raise UsageError("train-mapper needs --corpus")
    model, _ = _model_and_map(args)
    cfg = MapperTrainConfig(
        corpus_path=args.corpus,
        epochs=int(_merged(args, "epochs")),
        batch_size=int(_merged(args, "batch_size")),
        learning_rate=float(_merged(args, "lr_mapper")),
        lm_layers=int(_merged(args, "lm_layers")),
        lm_width=int(_merged(args, "lm_width")),
        seed=int(_merged(args, "seed")),
    )
    emb_map, report = train_mapper(model, cfg)
    out_dir = Path(_merged(args, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    map_path = out_dir / "map.npz"
    save_map(emb_map, model, map_path)
    consistency = projection_self_consistency(model, emb_map)
    for i, loss in enumerate(report.epoch_losses, 1):
        print(f"epoch {i}: lm loss {loss:.4f}")
    print(f"projection self-consistency: {consistency:.3f}")
    print(f"map written to {map_path}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    _load_config_file(args)
    scorer = None
    if _merged(args, "model") is not None and args.with_similarity:
        model, emb_map = _model_and_map(args)
        scorer = LmEmbeddingSimilarityScorer(model, emb_map)
    rows = []
    for path in args.records:
        header, records = read_records(path)
        report = summarize_records(records, scorer=scorer, metadata=header.get("config", {}))
        cfg = header.get("config", {})
        rows.append((path, cfg, report))
    if args.sweep:
        key = args.sweep
        print(f"{key:>12}  {'ASR':>6}  {'RDBLEU':>7}  {'Sim':>6}  {'n':>5}")
        for path, cfg, report in rows:
            val = cfg.get("alpha_schedule") if key == "alpha" else cfg.get(key, "?")
            sim = f"{report.similarity:.3f}" if report.similarity is not None else "-"
            rd = f"{report.rdbleu:.3f}" if report.rdbleu is not None else "-"
            print(f"{str(val):>12}  {report.asr:6.3f}  {rd:>7}  {sim:>6}  {report.total:>5}")
    else:
        for path, _, report in rows:
            print(f"== {path}")
            _print_report(report)
    return EXIT_OK


def _print_report(report) -> None:
    print(f"ASR: {report.asr:.4f} ({report.successful}/{report.total}, "
          f"{report.trivially_successful} trivially successful, {report.errored} errored)")
    rd = f"{report.rdbleu:.4f}" if report.rdbleu is not None else "n/a"
    sim = f"{report.similarity:.4f}" if report.similarity is not None else "n/a"
    print(f"RDBLEU: {rd}   similarity: {sim}")
    if report.bleu_clean is not None:
        print(f"BLEU clean: {report.bleu_clean:.2f}   BLEU adversarial: {report.bleu_adversarial:.2f}")
    for key, bucket in sorted(report.per_keyword.items()):
        print(f"  keyword {key}: ASR {bucket['asr']:.3f} ({int(bucket['successful'])}/{int(bucket['total'])})")


def _run_config_dict(args: argparse.Namespace, cfg: AttackConfig, model: NmtModel) -> dict:
    return {
        "model": str(_merged(args, "model")),
        "seed": int(_merged(args, "seed")),
        "learning_rate": cfg.learning_rate,
        "max_iterations": cfg.max_iterations,
        "alpha_schedule": list(cfg.alpha_schedule),
        "keyword": _merged(args, "keyword"),
        "nth": _merged(args, "nth"),
        "vocab_size": len(model.vocabulary),
    }


# -- parser --------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--model", help="toy | toy:<seed> | <adapter>:<model-id>")
    p.add_argument("--device", help="torch device for adapters (default cpu)")
    p.add_argument("--map", help="path to a trained embedding map (.npz); identity map if omitted")
    p.add_argument("--seed", type=int, help="seed for sampling and toy-model init")
    p.add_argument("--out", help="output directory")


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--keyword", help="target keyword string")
    p.add_argument("--nth", type=int, help="n-th most-likely class target")
    p.add_argument("--alpha-schedule", dest="alpha_schedule",
                   help="comma-separated decreasing weights, e.g. 10,4,1")
    p.add_argument("--lr", type=float, help="attack learning rate")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="iterations per alpha")
    p.add_argument("--workers", type=int, help="parallel sentences")
    p.add_argument("--dataset", help="parallel corpus (TSV, or source file with --reference)")
    p.add_argument("--reference", help="reference file for two-file corpora")
    p.add_argument("--sample-size", dest="sample_size", type=int, help="sentences to sample")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kwforge",
                                     description="Targeted keyword-insertion attacks on translation models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack one sentence or a dataset")
    _add_common(p)
    _add_attack_flags(p)
    p.add_argument("--sentence", help="single source sentence")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("benchmark", help="attack a sampled dataset and report metrics")
    _add_common(p)
    _add_attack_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("train-mapper", help="train the NMT->LM embedding map")
    _add_common(p)
    p.add_argument("--corpus", help="text corpus, one sentence per line")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-mapper", dest="lr_mapper", type=float)
    p.add_argument("--lm-layers", dest="lm_layers", type=int)
    p.add_argument("--lm-width", dest="lm_width", type=int)
    p.set_defaults(func=cmd_train_mapper)

    p = sub.add_parser("report", help="aggregate record files")
    _add_common(p)
    p.add_argument("records", nargs="+", help="record files from attack/benchmark runs")
    p.add_argument("--sweep", choices=["alpha", "learning_rate"],
                   help="render one row per file keyed by this hyperparameter")
    p.add_argument("--with-similarity", dest="with_similarity", action="store_true",
                   help="recompute similarity with the given --model/--map")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, TargetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (KwforgeError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
