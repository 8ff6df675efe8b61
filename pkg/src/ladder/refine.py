"""Inference-time refinement: sample an intermediate translation from a
target model, refine it with the trained refiner endpoint, optionally iterate
(self-refinement), and build weak-supervision training triplets.

Corpus operations never consult gold references when building prompts, record
per-item failures without aborting the run, and keep results in input order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .client import EndpointConfig, GenerationResult, generate_batch
from .corpus import DatasetSplit, Direction, RefinementTriplet
from .metrics.chrf import chrf_sentence
from .metrics.quality import QualityScore
from .prompting import ExtractionPolicy, DEFAULT_POLICY, TemplatePair, parse_completion, render_direct, render_refine


@dataclass(frozen=True)
class RefinementRecord:
    """One source's journey through the loop: intermediate translation,
    refined output, and whatever scores were attached downstream."""

    id: str
    direction: Direction
    source: str
    intermediate: str | None
    refined: str | None
    reference: str | None
    target_tag: str
    ladder_tag: str
    scores: dict[str, QualityScore] = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.refined is not None


@dataclass(frozen=True)
class IterationTrace:
    """Texts produced across self-refinement iterations; index 0 is the
    original direct translation. A completed trace has iterations+1 texts."""

    id: str
    texts: tuple[str, ...]
    scores: tuple[QualityScore, ...] | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class WeakSupervisionConfig:
    weak_reference_endpoint: EndpointConfig
    intermediate_endpoint: EndpointConfig


@dataclass(frozen=True)
class IntermediateItem:
    """A source with an externally produced intermediate translation."""

    id: str
    source: str
    intermediate: str
    reference: str | None = None


def _parse_results(
    results: Sequence[GenerationResult], policy: ExtractionPolicy
) -> list[tuple[str | None, str | None]]:
    """Per item: (translation, error) with exactly one side set."""
    parsed: list[tuple[str | None, str | None]] = []
    for result in results:
        if not result.ok:
            parsed.append((None, result.error))
            continue
        try:
            parsed.append((parse_completion(result.text, policy), None))
        except ValueError as exc:
            parsed.append((None, f"unparseable reply: {exc}"))
    return parsed


def refine_corpus(
    split: DatasetSplit,
    target: EndpointConfig,
    ladder: EndpointConfig,
    templates: TemplatePair,
    policy: ExtractionPolicy = DEFAULT_POLICY,
) -> list[RefinementRecord]:
    """For each pair: sample the intermediate from the target endpoint, then
    refine it with the refiner endpoint. Gold references ride along in the
    records for later evaluation but never enter any prompt."""
    if len(split) == 0:
        raise ValueError("split is empty")
    pairs = split.pairs
    direct_prompts = [render_direct(templates.direct, p.source, p.direction) for p in pairs]
    intermediate_raw = generate_batch(target, direct_prompts, ids=[p.id for p in pairs])
    intermediates = _parse_results(intermediate_raw, policy)

    refine_indexes = [i for i, (text, _) in enumerate(intermediates) if text is not None]
    refined: list[tuple[str | None, str | None]] = [(None, None)] * len(pairs)
    if refine_indexes:
        refine_prompts = [
            render_refine(
                templates.refine, pairs[i].source, intermediates[i][0], pairs[i].direction
            )
            for i in refine_indexes
        ]
        refined_raw = generate_batch(
            ladder, refine_prompts, ids=[pairs[i].id for i in refine_indexes]
        )
        for i, outcome in zip(refine_indexes, _parse_results(refined_raw, policy)):
            refined[i] = outcome

    records = []
    for i, pair in enumerate(pairs):
        intermediate, int_error = intermediates[i]
        refined_text, ref_error = refined[i]
        error = int_error if int_error else ref_error
        records.append(
            RefinementRecord(
                id=pair.id,
                direction=pair.direction,
                source=pair.source,
                intermediate=intermediate,
                refined=refined_text,
                reference=pair.reference,
                target_tag=target.model_name,
                ladder_tag=ladder.model_name,
                error=error,
            )
        )
    return records


def precomputed_refine(
    items: Sequence[IntermediateItem],
    ladder: EndpointConfig,
    templates: TemplatePair,
    direction: Direction,
    policy: ExtractionPolicy = DEFAULT_POLICY,
) -> list[RefinementRecord]:
    """Refine intermediates produced offline: no target-model calls are made.
    Items without an intermediate become per-item errors."""
    if not items:
        raise ValueError("no items to refine")
    usable = [i for i, item in enumerate(items) if item.intermediate.strip()]
    refined: list[tuple[str | None, str | None]] = [
        (None, "missing intermediate") for _ in items
    ]
    if usable:
        prompts = [
            render_refine(templates.refine, items[i].source, items[i].intermediate, direction)
            for i in usable
        ]
        results = generate_batch(ladder, prompts, ids=[items[i].id for i in usable])
        for i, outcome in zip(usable, _parse_results(results, policy)):
            refined[i] = outcome

    records = []
    for i, item in enumerate(items):
        refined_text, error = refined[i]
        records.append(
            RefinementRecord(
                id=item.id,
                direction=direction,
                source=item.source,
                intermediate=item.intermediate if item.intermediate.strip() else None,
                refined=refined_text,
                reference=item.reference,
                target_tag="precomputed",
                ladder_tag=ladder.model_name,
                error=error,
            )
        )
    return records


def self_refine(
    split: DatasetSplit,
    model: EndpointConfig,
    iterations: int,
    templates: TemplatePair,
    policy: ExtractionPolicy = DEFAULT_POLICY,
    score_against_references: bool = True,
) -> list[IterationTrace]:
    """One model translates, then repeatedly refines its own previous output.
    Traces hold iterations+1 texts; a failed iteration truncates that item's
    trace and flags it. Iterations are scored with sentence chrF when the
    split carries references."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(split) == 0:
        raise ValueError("split is empty")
    pairs = split.pairs
    texts: list[list[str]] = [[] for _ in pairs]
    errors: list[str | None] = [None] * len(pairs)

    direct_prompts = [render_direct(templates.direct, p.source, p.direction) for p in pairs]
    for i, (text, error) in enumerate(
        _parse_results(generate_batch(model, direct_prompts, ids=[p.id for p in pairs]), policy)
    ):
        if text is None:
            errors[i] = f"iteration 0: {error}"
        else:
            texts[i].append(text)

    for iteration in range(1, iterations + 1):
        live = [i for i in range(len(pairs)) if errors[i] is None]
        if not live:
            break
        prompts = [
            render_refine(templates.refine, pairs[i].source, texts[i][-1], pairs[i].direction)
            for i in live
        ]
        results = generate_batch(model, prompts, ids=[pairs[i].id for i in live])
        for i, (text, error) in zip(live, _parse_results(results, policy)):
            if text is None:
                errors[i] = f"iteration {iteration}: {error}"
            else:
                texts[i].append(text)

    traces = []
    for i, pair in enumerate(pairs):
        scores = None
        if errors[i] is None and score_against_references:
            scores = tuple(chrf_sentence(text, pair.reference) for text in texts[i])
        traces.append(
            IterationTrace(id=pair.id, texts=tuple(texts[i]), scores=scores, error=errors[i])
        )
    return traces


@dataclass(frozen=True)
class WeakTripletResult:
    triplets: tuple[RefinementTriplet, ...]
    failures: tuple[tuple[str, str], ...]  # (pair id, message)


def build_weak_triplets(
    split: DatasetSplit,
    cfg: WeakSupervisionConfig,
    templates: TemplatePair,
    policy: ExtractionPolicy = DEFAULT_POLICY,
) -> WeakTripletResult:
    """Build training triplets whose reference slot holds a weaker model's
    translation instead of the gold reference. Gold references stay on the
    split for evaluation only. An item failing either endpoint yields a
    failure entry, never a partial triplet."""
    if len(split) == 0:
        raise ValueError("split is empty")
    pairs = split.pairs
    prompts = [render_direct(templates.direct, p.source, p.direction) for p in pairs]
    ids = [p.id for p in pairs]
    weak = _parse_results(generate_batch(cfg.weak_reference_endpoint, prompts, ids=ids), policy)
    intermediate = _parse_results(
        generate_batch(cfg.intermediate_endpoint, prompts, ids=ids), policy
    )

    triplets = []
    failures = []
    for pair, (weak_text, weak_err), (int_text, int_err) in zip(pairs, weak, intermediate):
        if weak_text is None:
            failures.append((pair.id, f"weak reference: {weak_err}"))
        elif int_text is None:
            failures.append((pair.id, f"intermediate: {int_err}"))
        else:
            triplets.append(
                RefinementTriplet(
                    id=pair.id,
                    source=pair.source,
                    intermediate=int_text,
                    reference=weak_text,
                    direction=pair.direction,
                    sampler_tag=cfg.intermediate_endpoint.model_name,
                )
            )
    return WeakTripletResult(tuple(triplets), tuple(failures))


def record_to_json(record: RefinementRecord) -> dict:
    return {
        "id": record.id,
        "src_lang": record.direction.src_lang,
        "tgt_lang": record.direction.tgt_lang,
        "source": record.source,
        "intermediate": record.intermediate,
        "refined": record.refined,
        "reference": record.reference,
        "scores": {
            name: {"metric": score.metric, "value": score.value}
            for name, score in record.scores.items()
        },
        "target_tag": record.target_tag,
        "ladder_tag": record.ladder_tag,
        "error": record.error,
    }


def write_records(records: Sequence[RefinementRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[RefinementRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            records.append(
                RefinementRecord(
                    id=obj["id"],
                    direction=Direction.from_codes(obj["src_lang"], obj["tgt_lang"]),
                    source=obj["source"],
                    intermediate=obj.get("intermediate"),
                    refined=obj.get("refined"),
                    reference=obj.get("reference"),
                    target_tag=obj.get("target_tag", ""),
                    ladder_tag=obj.get("ladder_tag", ""),
                    scores={
                        name: QualityScore(s["metric"], s["value"])
                        for name, s in obj.get("scores", {}).items()
                    },
                    error=obj.get("error"),
                )
            )
    return records


def read_intermediates(path: str | Path, format: str = "tsv") -> list[IntermediateItem]:
    """Load externally produced intermediates: TSV ``source TAB intermediate``
    or the triplet JSONL shape with the reference optional."""
    path = Path(path)
    items = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if format == "tsv":
                columns = line.split("\t")
                if len(columns) != 2:
                    raise ValueError(
                        f"{path}:{lineno}: expected 2 tab-separated columns, found {len(columns)}"
                    )
                items.append(
                    IntermediateItem(id=f"{path.stem}:{lineno}", source=columns[0], intermediate=columns[1])
                )
            elif format == "jsonl":
                obj = json.loads(line)
                items.append(
                    IntermediateItem(
                        id=str(obj.get("id") or f"{path.stem}:{lineno}"),
                        source=obj["source"],
                        intermediate=obj.get("intermediate", ""),
                        reference=obj.get("reference"),
                    )
                )
            else:
                raise ValueError(f"unknown intermediate format {format!r}")
    return items
