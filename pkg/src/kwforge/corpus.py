"""Parallel-corpus loading and attack record persistence.

Record files are JSON lines with a schema-versioned header line, one attack
per line after that. Plain text keeps them diffable in tests and greppable
in sweeps.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .attack import AttackResult
from .errors import DataError
from .evaluation import BenchmarkRecord

RECORD_SCHEMA = "kwforge-records/1"


def load_parallel_corpus(path: str | Path, reference_path: str | Path | None = None
                         ) -> list[tuple[str, str]]:
    """Load aligned (source, reference) pairs.

    One file: tab-separated source<TAB>reference per line. Two files:
    line-aligned source and reference files. Blank lines are skipped; a
    count mismatch between the two sides is an error naming both counts.
    """
    try:
        if reference_path is None:
            pairs = []
            for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: expected 'source<TAB>reference', got {len(parts)} fields")
                pairs.append((parts[0].strip(), parts[1].strip()))
            return pairs
        sources = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
        refs = [l for l in Path(reference_path).read_text(encoding="utf-8").splitlines() if l.strip()]
    except OSError as exc:
        raise DataError(f"cannot read corpus: {exc}") from exc
    if len(sources) != len(refs):
        raise DataError(f"misaligned corpus: {len(sources)} source lines vs {len(refs)} reference lines")
    return [(s.strip(), r.strip()) for s, r in zip(sources, refs)]


def _record_row(rec: BenchmarkRecord) -> dict:
    res = rec.attack_result
    return {
        "source": rec.source_text,
        "adversarial": res.adversarial_text,
        "clean_translation": rec.clean_translation,
        "adversarial_translation": rec.adversarial_translation,
        "success": res.success,
        "iterations": res.iterations_used,
        "alpha_used": res.alpha_used,
        "perturbed_token_count": res.perturbed_token_count,
        "position_history": list(res.position_history),
        "target_token": res.target_token,
        "source_tokens": list(res.source_tokens),
        "adversarial_tokens": list(res.adversarial_tokens),
        "translation_tokens": list(res.translation),
        "reference": rec.reference_translation,
        "error": res.error,
    }


def write_records(records: Sequence[BenchmarkRecord], path: str | Path,
                  config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"schema": RECORD_SCHEMA, "config": config or {}}
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            fh.write(json.dumps(_record_row(rec), sort_keys=True) + "\n")


def read_records(path: str | Path) -> tuple[dict, list[BenchmarkRecord]]:
    """Reload records; AttackResult fields round-trip exactly."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read record file {path}: {exc}") from exc
    if not lines:
        raise DataError(f"record file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed header: {exc}") from exc
    if header.get("schema") != RECORD_SCHEMA:
        raise DataError(f"{path}: unsupported schema {header.get('schema')!r}")
    records = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
        result = AttackResult(
            success=row["success"],
            adversarial_tokens=tuple(row["adversarial_tokens"]),
            adversarial_text=row["adversarial"],
            translation=tuple(row["translation_tokens"]),
            translation_text=row["adversarial_translation"],
            target_token=row["target_token"],
            iterations_used=row["iterations"],
            alpha_used=row["alpha_used"],
            perturbed_token_count=row["perturbed_token_count"],
            position_history=tuple(row["position_history"]),
            source_tokens=tuple(row["source_tokens"]),
            error=row["error"],
        )
        records.append(BenchmarkRecord(
            source_text=row["source"],
            reference_translation=row["reference"],
            clean_translation=row["clean_translation"],
            adversarial_translation=row["adversarial_translation"],
            attack_result=result,
        ))
    if not records:
        raise DataError(f"record file {path} has a header but no records")
    return header, records
