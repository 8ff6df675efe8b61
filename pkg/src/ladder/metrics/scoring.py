"""Scoring surfaces: the remote neural-scorer client, triplet scoring, and
whole-corpus evaluation reports.

The neural scorer is an external HTTP service (POST ``{endpoint}/score``)
returning values in [0, 1]; reference-free quality estimation is the same
call with ``reference`` null. A chrF fallback (normalized to 0-1) covers
fully offline runs; reports always label which scorer produced their numbers.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Sequence

import httpx

from ..corpus import RefinementTriplet
from .bleu import bleu_corpus, bleu_sentence, default_tokenization
from .cache import ScoreCache
from .chrf import chrf_corpus, chrf_sentence
from .quality import QualityScore

TRIPLET_SCORERS = ("chrf", "neural")


@dataclass(frozen=True)
class MetricReport:
    """Corpus-level metric values plus the per-segment scores they pool."""

    corpus_bleu: float
    corpus_chrf: float
    mean_neural: float | None
    per_segment: tuple[dict[str, QualityScore], ...]

    def __post_init__(self):
        if len(self.per_segment) == 0:
            raise ValueError("per_segment must not be empty")


def _backoff_sleep(attempt: int, base: float = 0.5, cap: float = 30.0) -> None:
    time.sleep(min(cap, base * 2**attempt) * random.uniform(0.5, 1.0))


def remote_score(
    endpoint: str,
    source: str,
    hypothesis: str,
    reference: str | None = None,
    *,
    cache: ScoreCache | None = None,
    timeout: float = 30.0,
    retries: int = 2,
) -> QualityScore:
    """Score a hypothesis via the external scoring service. Results are
    cached by content hash when a cache is given; out-of-range replies are
    rejected."""
    if not hypothesis:
        raise ValueError("hypothesis is empty")
    if cache is not None:
        cached = cache.get("neural", source, hypothesis, reference)
        if cached is not None:
            return QualityScore("neural", cached)
    url = endpoint.rstrip("/") + "/score"
    payload = {"source": source, "hypothesis": hypothesis, "reference": reference}
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            response = httpx.post(url, json=payload, timeout=timeout)
        except httpx.HTTPError as exc:
            last_error = exc
            if attempt < retries:
                _backoff_sleep(attempt)
            continue
        if response.status_code == 429 or response.status_code >= 500:
            last_error = RuntimeError(f"scorer returned HTTP {response.status_code}")
            if attempt < retries:
                _backoff_sleep(attempt)
            continue
        if response.status_code != 200:
            raise RuntimeError(f"scorer returned HTTP {response.status_code}: {response.text}")
        body = response.json()
        if "score" not in body:
            raise RuntimeError(f"malformed scorer reply: {body!r}")
        value = float(body["score"])
        score = QualityScore("neural", value)  # rejects out-of-range values
        if cache is not None:
            cache.put("neural", source, hypothesis, reference, value)
        return score
    raise RuntimeError(f"scorer unreachable after {retries + 1} attempts: {last_error}")


def score_triplets(
    triplets: Sequence[RefinementTriplet],
    scorer: str = "chrf",
    *,
    endpoint: str | None = None,
    cache: ScoreCache | None = None,
    rescore: bool = False,
) -> list[RefinementTriplet]:
    """Score each triplet's intermediate against its reference and attach the
    normalized [0, 1] value. Order is preserved. Refuses to overwrite
    existing scores unless ``rescore`` is set."""
    if scorer not in TRIPLET_SCORERS:
        raise ValueError(f"unknown scorer {scorer!r}; expected one of {TRIPLET_SCORERS}")
    if scorer == "neural" and endpoint is None:
        raise ValueError("neural scoring needs a scorer endpoint")
    if not rescore:
        scored = [t.id for t in triplets if t.score is not None]
        if scored:
            raise ValueError(
                f"triplets already scored (pass rescore=True to overwrite): {', '.join(scored)}"
            )
    out = []
    for triplet in triplets:
        try:
            if scorer == "chrf":
                value = chrf_sentence(triplet.intermediate, triplet.reference).normalized
            else:
                value = remote_score(
                    endpoint, triplet.source, triplet.intermediate, triplet.reference, cache=cache
                ).value
        except Exception as exc:
            raise RuntimeError(f"scoring failed for triplet {triplet.id}: {exc}") from exc
        out.append(triplet.with_score(value))
    return out


def evaluate_corpus(
    hypotheses: Sequence[str],
    references: Sequence[str],
    tgt_lang: str,
    *,
    sources: Sequence[str] | None = None,
    neural_endpoint: str | None = None,
    cache: ScoreCache | None = None,
) -> MetricReport:
    """Corpus BLEU + chrF (and neural scores when an endpoint is configured)
    with per-segment values for downstream analytics."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise ValueError("empty corpus")
    tokenization = default_tokenization(tgt_lang)
    per_segment: list[dict[str, QualityScore]] = []
    neural_values: list[float] = []
    for index, (hyp, ref) in enumerate(zip(hypotheses, references)):
        segment = {
            "bleu": bleu_sentence(hyp, ref, tokenization),
            "chrf": chrf_sentence(hyp, ref),
        }
        if neural_endpoint is not None:
            source = sources[index] if sources is not None else ""
            segment["neural"] = remote_score(neural_endpoint, source, hyp, ref, cache=cache)
            neural_values.append(segment["neural"].value)
        per_segment.append(segment)
    return MetricReport(
        corpus_bleu=bleu_corpus(hypotheses, references, tokenization).value,
        corpus_chrf=chrf_corpus(hypotheses, references).value,
        mean_neural=sum(neural_values) / len(neural_values) if neural_values else None,
        per_segment=tuple(per_segment),
    )
