"""Parallel-corpus ingestion, split handling, and refinement-triplet storage.

A corpus is a set of (source, reference) pairs for one translation direction.
Triplets add a model-sampled intermediate translation and an optional quality
score, and round-trip losslessly through a one-object-per-line JSONL file.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

LANGUAGE_NAMES = {
    "en": "English",
    "de": "German",
    "cs": "Czech",
    "zh": "Chinese",
    "ru": "Russian",
    "fr": "French",
    "es": "Spanish",
    "it": "Italian",
    "ja": "Japanese",
    "ko": "Korean",
    "pt": "Portuguese",
    "pl": "Polish",
    "nl": "Dutch",
    "uk": "Ukrainian",
}

SPLIT_NAMES = ("train", "dev", "test")

CORPUS_FORMATS = ("tsv", "jsonl", "paired-text")


class CorpusError(ValueError):
    """Malformed corpus input; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


def language_name(code: str) -> str:
    """Full language name for an ISO-639-1 code; falls back to the code."""
    return LANGUAGE_NAMES.get(code, code)


@dataclass(frozen=True)
class Direction:
    """A translation direction with the full language names used verbatim
    in prompt rendering."""

    src_lang: str
    tgt_lang: str
    src_name: str
    tgt_name: str

    def __post_init__(self):
        if self.src_lang == self.tgt_lang:
            raise ValueError(f"source and target language are both {self.src_lang!r}")
        if not self.src_name or not self.tgt_name:
            raise ValueError("language names must be nonempty")

    @classmethod
    def from_codes(cls, src_lang: str, tgt_lang: str) -> "Direction":
        return cls(src_lang, tgt_lang, language_name(src_lang), language_name(tgt_lang))

    @classmethod
    def parse(cls, text: str) -> "Direction":
        """Parse "de-en" style direction strings."""
        parts = text.split("-")
        if len(parts) != 2 or not all(parts):
            raise ValueError(f"direction must look like 'de-en', got {text!r}")
        return cls.from_codes(parts[0], parts[1])

    @property
    def label(self) -> str:
        return f"{self.src_lang}-{self.tgt_lang}"


@dataclass(frozen=True)
class ParallelPair:
    """One (source, reference) pair with a corpus-unique id."""

    id: str
    source: str
    reference: str
    direction: Direction

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError(f"pair {self.id}: source is empty")
        if not self.reference.strip():
            raise ValueError(f"pair {self.id}: reference is empty")


@dataclass(frozen=True)
class RefinementTriplet:
    """A (source, intermediate, reference) training triplet.

    ``intermediate`` is a translation sampled from the model named by
    ``sampler_tag``; ``score``, when present, is the quality of the
    intermediate against the reference, normalized to [0, 1].
    """

    id: str
    source: str
    intermediate: str
    reference: str
    direction: Direction
    sampler_tag: str
    score: float | None = None

    def __post_init__(self):
        for field_name in ("source", "intermediate", "reference"):
            if not getattr(self, field_name).strip():
                raise ValueError(f"triplet {self.id}: {field_name} is empty")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise ValueError(f"triplet {self.id}: score {self.score} outside [0, 1]")

    def with_score(self, score: float) -> "RefinementTriplet":
        return replace(self, score=score)


@dataclass(frozen=True)
class DatasetSplit:
    """A named, ordered collection of parallel pairs."""

    name: str
    pairs: tuple[ParallelPair, ...]

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValueError(f"split name must be one of {SPLIT_NAMES}, got {self.name!r}")
        seen: set[str] = set()
        for pair in self.pairs:
            if pair.id in seen:
                raise ValueError(f"duplicate pair id {pair.id!r} in split {self.name!r}")
            seen.add(pair.id)

    def __len__(self) -> int:
        return len(self.pairs)

    def ids(self) -> list[str]:
        return [p.id for p in self.pairs]


def load_parallel_corpus(
    path: str | Path,
    format: str,
    direction: Direction,
    split: str = "train",
) -> DatasetSplit:
    """Load a parallel corpus file into a split.

    Formats:
      * ``tsv`` — two tab-separated columns (source TAB reference), UTF-8,
        no header.
      * ``jsonl`` — one object per line with ``source`` and ``reference``
        fields and an optional ``id``.
      * ``paired-text`` — ``path`` is a stem; ``{path}.{src_lang}`` and
        ``{path}.{tgt_lang}`` hold one aligned segment per line.

    Pairs are returned in file order. Malformed lines raise
    :class:`CorpusError` with the offending line number; nothing is dropped
    silently. Missing ids are synthesized as ``{stem}:{line}``.
    """
    if format not in CORPUS_FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")
    path = Path(path)
    if format == "paired-text":
        pairs = _load_paired_text(path, direction)
    else:
        if not path.is_file():
            raise FileNotFoundError(f"corpus file not found: {path}")
        loader = _load_tsv if format == "tsv" else _load_jsonl
        pairs = loader(path, direction)
    if not pairs:
        raise CorpusError(f"empty corpus: {path}")
    return DatasetSplit(split, tuple(pairs))


def _synth_id(path: Path, line: int) -> str:
    return f"{path.stem}:{line}"


def _make_pair(pid: str, source: str, reference: str, direction: Direction, line: int) -> ParallelPair:
    try:
        return ParallelPair(pid, source, reference, direction)
    except ValueError as exc:
        raise CorpusError(str(exc), line=line) from exc


def _load_tsv(path: Path, direction: Direction) -> list[ParallelPair]:
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if line == "":
                raise CorpusError("blank line in TSV corpus", line=lineno)
            columns = line.split("\t")
            if len(columns) != 2:
                raise CorpusError(
                    f"expected 2 tab-separated columns, found {len(columns)}", line=lineno
                )
            pairs.append(
                _make_pair(_synth_id(path, lineno), columns[0], columns[1], direction, lineno)
            )
    return pairs


def _load_jsonl(path: Path, direction: Direction) -> list[ParallelPair]:
    pairs = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                raise CorpusError("blank line in JSONL corpus", line=lineno)
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            for key in ("source", "reference"):
                if key not in obj:
                    raise CorpusError(f"missing {key!r} field", line=lineno)
            pid = str(obj.get("id") or _synth_id(path, lineno))
            if pid in seen:
                raise CorpusError(f"duplicate id {pid!r}", line=lineno)
            seen.add(pid)
            pairs.append(_make_pair(pid, obj["source"], obj["reference"], direction, lineno))
    return pairs


def _load_paired_text(stem: Path, direction: Direction) -> list[ParallelPair]:
    src_path = stem.with_name(f"{stem.name}.{direction.src_lang}")
    ref_path = stem.with_name(f"{stem.name}.{direction.tgt_lang}")
    for p in (src_path, ref_path):
        if not p.is_file():
            raise FileNotFoundError(f"corpus file not found: {p}")
    src_lines = src_path.read_text(encoding="utf-8").splitlines()
    ref_lines = ref_path.read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(ref_lines):
        raise CorpusError(
            f"paired files disagree in length: {len(src_lines)} source lines "
            f"vs {len(ref_lines)} reference lines",
            line=min(len(src_lines), len(ref_lines)) + 1,
        )
    pairs = []
    for lineno, (source, reference) in enumerate(zip(src_lines, ref_lines), start=1):
        pairs.append(_make_pair(_synth_id(stem, lineno), source, reference, direction, lineno))
    return pairs


def sample_dev_split(split: DatasetSplit, n: int, seed: int) -> DatasetSplit:
    """Draw a deterministic size-``n`` subset without replacement.

    The input split is left untouched; rerunning with the same seed returns
    the same pair ids.
    """
    if n > len(split):
        raise ValueError(f"cannot sample {n} pairs from a split of {len(split)}")
    rng = random.Random(seed)
    sampled = rng.sample(list(split.pairs), n)
    return DatasetSplit("dev", tuple(sampled))


def attach_intermediates(
    split: DatasetSplit,
    intermediates: Mapping[str, str],
    sampler_tag: str,
) -> list[RefinementTriplet]:
    """Join sampled intermediate translations onto a split, one triplet per
    pair, in split order. Every pair id must have an intermediate; all
    missing ids are reported together."""
    missing = [p.id for p in split.pairs if p.id not in intermediates]
    if missing:
        raise ValueError(f"missing intermediates for ids: {', '.join(missing)}")
    return [
        RefinementTriplet(
            id=pair.id,
            source=pair.source,
            intermediate=intermediates[pair.id],
            reference=pair.reference,
            direction=pair.direction,
            sampler_tag=sampler_tag,
        )
        for pair in split.pairs
    ]


TRIPLET_FIELDS = ("id", "src_lang", "tgt_lang", "source", "intermediate", "reference", "score", "sampler_tag")


def triplet_to_record(triplet: RefinementTriplet) -> dict:
    return {
        "id": triplet.id,
        "src_lang": triplet.direction.src_lang,
        "tgt_lang": triplet.direction.tgt_lang,
        "source": triplet.source,
        "intermediate": triplet.intermediate,
        "reference": triplet.reference,
        "score": triplet.score,
        "sampler_tag": triplet.sampler_tag,
    }


def write_triplets(triplets: Iterable[RefinementTriplet], path: str | Path) -> None:
    """Write triplets as JSONL (one object per line). The destination
    directory must already exist."""
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"destination directory does not exist: {path.parent}")
    with open(path, "w", encoding="utf-8") as handle:
        for triplet in triplets:
            handle.write(json.dumps(triplet_to_record(triplet), ensure_ascii=False) + "\n")


def read_triplets(path: str | Path) -> list[RefinementTriplet]:
    """Read a triplet JSONL file. Inverse of :func:`write_triplets` on every
    field, including optional scores."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"triplet file not found: {path}")
    triplets = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                raise CorpusError("blank line in triplet file", line=lineno)
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            missing = [k for k in TRIPLET_FIELDS if k not in obj]
            if missing:
                raise CorpusError(f"missing fields: {', '.join(missing)}", line=lineno)
            if obj["id"] in seen:
                raise CorpusError(f"duplicate id {obj['id']!r}", line=lineno)
            seen.add(obj["id"])
            score = obj["score"]
            if score is not None and not isinstance(score, (int, float)):
                raise CorpusError(f"score must be a number or null, got {score!r}", line=lineno)
            try:
                triplets.append(
                    RefinementTriplet(
                        id=obj["id"],
                        source=obj["source"],
                        intermediate=obj["intermediate"],
                        reference=obj["reference"],
                        direction=Direction.from_codes(obj["src_lang"], obj["tgt_lang"]),
                        sampler_tag=obj["sampler_tag"],
                        score=score,
                    )
                )
            except ValueError as exc:
                raise CorpusError(str(exc), line=lineno) from exc
    return triplets
