from .bleu import bleu_corpus, bleu_sentence, default_tokenization
from .cache import ScoreCache
from .chrf import chrf_corpus, chrf_sentence
from .quality import QualityScore
from .scoring import MetricReport, evaluate_corpus, remote_score, score_triplets

__all__ = [
    "MetricReport",
    "QualityScore",
    "ScoreCache",
    "bleu_corpus",
    "bleu_sentence",
    "chrf_corpus",
    "chrf_sentence",
    "default_tokenization",
    "evaluate_corpus",
    "remote_score",
    "score_triplets",
]
