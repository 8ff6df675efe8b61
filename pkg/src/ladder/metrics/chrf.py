"""Character n-gram F-score (chrF), n = 1..6, beta = 2, whitespace removed.

Precision and recall are averaged over the orders for which both sides have
n-grams, then combined into F-beta. Scores are on a 0-100 scale for parity
with BLEU reporting.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Sequence

from .quality import QualityScore

CHRF_ORDER = 6
CHRF_BETA = 2.0

_WS = re.compile(r"\s+")


def _strip_whitespace(text: str) -> str:
    return _WS.sub("", text.strip())


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def _segment_statistics(hypothesis: str, reference: str) -> list[int]:
    """Per order n: (hypothesis n-grams, reference n-grams, matches), flattened."""
    hyp = _strip_whitespace(hypothesis)
    ref = _strip_whitespace(reference)
    stats = [0] * (CHRF_ORDER * 3)
    for i in range(CHRF_ORDER):
        hyp_ngrams = _char_ngrams(hyp, i + 1)
        ref_ngrams = _char_ngrams(ref, i + 1)
        common = hyp_ngrams & ref_ngrams
        stats[3 * i] = sum(hyp_ngrams.values())
        stats[3 * i + 1] = sum(ref_ngrams.values())
        stats[3 * i + 2] = sum(common.values())
    return stats


def _score_from_statistics(stats: Sequence[int], beta: float = CHRF_BETA) -> float:
    avg_precision = 0.0
    avg_recall = 0.0
    effective_order = 0
    for i in range(CHRF_ORDER):
        hyp_count, ref_count, match_count = stats[3 * i], stats[3 * i + 1], stats[3 * i + 2]
        if hyp_count > 0 and ref_count > 0:
            avg_precision += match_count / hyp_count
            avg_recall += match_count / ref_count
            effective_order += 1
    if effective_order == 0:
        return 0.0
    avg_precision /= effective_order
    avg_recall /= effective_order
    if avg_precision + avg_recall == 0.0:
        return 0.0
    beta_sq = beta**2
    fscore = (1 + beta_sq) * avg_precision * avg_recall / (beta_sq * avg_precision + avg_recall)
    return 100.0 * fscore


def chrf_sentence(hypothesis: str, reference: str) -> QualityScore:
    """chrF for one segment, 0-100 scale."""
    if not reference.strip():
        raise ValueError("reference is empty")
    return QualityScore("chrf", _score_from_statistics(_segment_statistics(hypothesis, reference)))


def chrf_corpus(hypotheses: Sequence[str], references: Sequence[str]) -> QualityScore:
    """Corpus chrF: statistics pooled over segments, then one F-score."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise ValueError("empty corpus")
    totals = [0] * (CHRF_ORDER * 3)
    for hyp, ref in zip(hypotheses, references):
        if not ref.strip():
            raise ValueError("reference is empty")
        for i, value in enumerate(_segment_statistics(hyp, ref)):
            totals[i] += value
    return QualityScore("chrf", _score_from_statistics(totals))
