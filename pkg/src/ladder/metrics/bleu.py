"""Native corpus- and sentence-level BLEU.

Standard 4-gram modified precision with brevity penalty, following the
community scorer's conventions so corpus scores are comparable:

* ``intl`` tokenization splits on Unicode punctuation and symbols (the
  international mteval rules), keeping digit-internal separators attached.
* ``cjk`` tokenization isolates each CJK character, then applies the mteval
  punctuation rules to the rest; it is the right choice for Chinese targets.

Corpus BLEU is unsmoothed (a zero precision zeroes the score); sentence BLEU
uses add-one smoothing on the n>1 precisions and the effective n-gram order,
which keeps short segments comparable for per-segment analytics.
"""

from __future__ import annotations

import math
import re
import sys
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .quality import QualityScore

NGRAM_ORDER = 4

_LOG_ZERO = -9999999999  # stands in for log(0) so a zero precision zeroes the score


@lru_cache(maxsize=1)
def _unicode_classes() -> tuple[str, str]:
    """Characters in the Unicode punctuation (P*) and symbol (S*) categories."""
    punct = []
    symbol = []
    for codepoint in range(sys.maxunicode + 1):
        category = unicodedata.category(chr(codepoint))
        if category.startswith("P"):
            punct.append(chr(codepoint))
        elif category.startswith("S"):
            symbol.append(chr(codepoint))
    return "".join(punct), "".join(symbol)


@lru_cache(maxsize=1)
def _intl_regexes() -> tuple[re.Pattern, re.Pattern, re.Pattern]:
    punct, symbol = _unicode_classes()
    punct_class = re.escape(punct)
    symbol_class = re.escape(symbol)
    return (
        re.compile(r"([^\d])([" + punct_class + r"])"),
        re.compile(r"([" + punct_class + r"])([^\d])"),
        re.compile(r"([" + symbol_class + r"])"),
    )


def tokenize_intl(line: str) -> list[str]:
    """International tokenization: separate punctuation and symbols except
    when a punctuation mark sits between digits (decimal/thousand separators)."""
    nondigit_punct, punct_nondigit, symbol = _intl_regexes()
    line = nondigit_punct.sub(r"\1 \2 ", line)
    line = punct_nondigit.sub(r" \1 \2", line)
    line = symbol.sub(r" \1 ", line)
    return line.split()


# Codepoint ranges treated as CJK for character-level tokenization.
_CJK_RANGES = (
    (0x3400, 0x4DB5),
    (0x4E00, 0x9FA5),
    (0x9FA6, 0x9FBB),
    (0xF900, 0xFA2D),
    (0xFA30, 0xFA6A),
    (0xFA70, 0xFAD9),
    (0x20000, 0x2A6D6),
    (0x2F800, 0x2FA1D),
    (0xFF00, 0xFFEF),
    (0x2E80, 0x2EFF),
    (0x3000, 0x303F),
    (0x31C0, 0x31EF),
    (0x2F00, 0x2FDF),
    (0x2FF0, 0x2FFF),
    (0x3100, 0x312F),
    (0x31A0, 0x31BF),
    (0xFE10, 0xFE1F),
    (0xFE30, 0xFE4F),
    (0x2600, 0x26FF),
    (0x2700, 0x27BF),
    (0x3200, 0x32FF),
    (0x3300, 0x33FF),
)


def _is_cjk_char(char: str) -> bool:
    cp = ord(char)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize_cjk(line: str) -> list[str]:
    """Character tokenization for CJK: every CJK character becomes its own
    token; the remainder follows the mteval punctuation rules."""
    line = line.strip()
    chars = []
    for char in line:
        if _is_cjk_char(char):
            chars.append(f" {char} ")
        else:
            chars.append(char)
    line = "".join(chars)
    line = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", line)
    line = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", line)
    line = re.sub(r"([\.,])([^0-9])", r" \1 \2", line)
    line = re.sub(r"([0-9])(-)", r"\1 \2 ", line)
    return line.split()


TOKENIZERS = {
    "intl": tokenize_intl,
    "cjk": tokenize_cjk,
}


def default_tokenization(tgt_lang: str) -> str:
    """Tokenization choice per target language: character-level for Chinese,
    international rules otherwise."""
    return "cjk" if tgt_lang == "zh" else "intl"


def _tokenize(text: str, tokenization: str) -> list[str]:
    try:
        tokenizer = TOKENIZERS[tokenization]
    except KeyError:
        raise ValueError(
            f"unknown tokenization {tokenization!r}; expected one of {tuple(TOKENIZERS)}"
        ) from None
    return tokenizer(text.rstrip())


def _ngram_counts(tokens: Sequence[str]) -> Counter:
    counts: Counter = Counter()
    for n in range(1, NGRAM_ORDER + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


@dataclass(frozen=True)
class BleuStats:
    """Sufficient statistics: clipped/total n-gram counts per order plus the
    hypothesis and reference lengths. Additive across segments."""

    correct: tuple[int, int, int, int]
    total: tuple[int, int, int, int]
    sys_len: int
    ref_len: int

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            tuple(a + b for a, b in zip(self.correct, other.correct)),
            tuple(a + b for a, b in zip(self.total, other.total)),
            self.sys_len + other.sys_len,
            self.ref_len + other.ref_len,
        )


def _segment_stats(hypothesis: str, reference: str, tokenization: str) -> BleuStats:
    hyp_tokens = _tokenize(hypothesis, tokenization)
    ref_tokens = _tokenize(reference, tokenization)
    hyp_counts = _ngram_counts(hyp_tokens)
    ref_counts = _ngram_counts(ref_tokens)
    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    for ngram, count in hyp_counts.items():
        order = len(ngram) - 1
        total[order] += count
        correct[order] += min(count, ref_counts.get(ngram, 0))
    return BleuStats(tuple(correct), tuple(total), len(hyp_tokens), len(ref_tokens))


def _score_from_stats(
    stats: BleuStats, smoothing: str, use_effective_order: bool
) -> float:
    correct = list(stats.correct)
    total = list(stats.total)
    precisions = [0.0] * NGRAM_ORDER
    effective_order = NGRAM_ORDER
    for n in range(1, NGRAM_ORDER + 1):
        if smoothing == "add-one" and n > 1:
            correct[n - 1] += 1
            total[n - 1] += 1
        if total[n - 1] == 0:
            break
        if use_effective_order:
            effective_order = n
        if correct[n - 1] > 0:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]

    if stats.sys_len == 0:
        brevity_penalty = 0.0
    elif stats.sys_len < stats.ref_len:
        brevity_penalty = math.exp(1 - stats.ref_len / stats.sys_len)
    else:
        brevity_penalty = 1.0

    log_sum = sum(
        math.log(p) if p > 0.0 else _LOG_ZERO for p in precisions[:effective_order]
    )
    score = brevity_penalty * math.exp(log_sum / effective_order)
    # precisions and BP are each bounded, so anything past 100 is float noise
    return min(100.0, max(0.0, score))


def bleu_corpus(
    hypotheses: Sequence[str],
    references: Sequence[str],
    tokenization: str = "intl",
) -> QualityScore:
    """Corpus BLEU over aligned hypothesis/reference segments, 0-100 scale."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference length mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise ValueError("empty corpus")
    stats = _segment_stats(hypotheses[0], references[0], tokenization)
    for hyp, ref in zip(hypotheses[1:], references[1:]):
        stats = stats + _segment_stats(hyp, ref, tokenization)
    return QualityScore("bleu", _score_from_stats(stats, smoothing="none", use_effective_order=False))


def bleu_sentence(
    hypothesis: str,
    reference: str,
    tokenization: str = "intl",
) -> QualityScore:
    """Sentence BLEU with add-one smoothing and effective order, 0-100 scale."""
    stats = _segment_stats(hypothesis, reference, tokenization)
    return QualityScore(
        "bleu", _score_from_stats(stats, smoothing="add-one", use_effective_order=True)
    )
