from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladder.corpus import (
    CorpusError,
    DatasetSplit,
    Direction,
    ParallelPair,
    RefinementTriplet,
    attach_intermediates,
    load_parallel_corpus,
    read_triplets,
    sample_dev_split,
    write_triplets,
)

ZH_EN = Direction.from_codes("zh", "en")
DE_EN = Direction.from_codes("de", "en")


def make_pairs(n, direction=DE_EN, prefix="p"):
    return tuple(
        ParallelPair(f"{prefix}{i}", f"source {i}", f"reference {i}", direction) for i in range(n)
    )


class TestDirection:
    def test_from_codes_resolves_full_names(self):
        assert ZH_EN.src_name == "Chinese"
        assert ZH_EN.tgt_name == "English"
        assert ZH_EN.label == "zh-en"

    def test_same_language_rejected(self):
        with pytest.raises(ValueError):
            Direction.from_codes("en", "en")

    def test_unknown_code_falls_back_to_code(self):
        d = Direction.from_codes("xx", "en")
        assert d.src_name == "xx"

    def test_parse(self):
        assert Direction.parse("de-en") == DE_EN
        with pytest.raises(ValueError):
            Direction.parse("deen")


class TestLoadCorpus:
    def test_tsv_loads_all_rows_in_order(self, tmp_path):
        # mirrors the Zh->En train corpus size
        n = 15406
        path = tmp_path / "zhen_train.tsv"
        path.write_text(
            "\n".join(f"源句 {i}\ttarget sentence {i}" for i in range(n)) + "\n", encoding="utf-8"
        )
        split = load_parallel_corpus(path, "tsv", ZH_EN)
        assert len(split) == n
        assert split.pairs[0].id == "zhen_train:1"
        assert split.pairs[-1].source == f"源句 {n - 1}"
        assert split.name == "train"

    def test_empty_file_is_an_error(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(CorpusError, match="empty corpus"):
            load_parallel_corpus(path, "tsv", DE_EN)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_parallel_corpus(tmp_path / "nope.tsv", "tsv", DE_EN)

    def test_tsv_wrong_column_count_reports_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\nc\td\te\nf\tg\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=r"line 2"):
            load_parallel_corpus(path, "tsv", DE_EN)

    def test_tsv_whitespace_only_field_rejected(self, tmp_path):
        path = tmp_path / "blank.tsv"
        path.write_text("a\tb\n   \td\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=r"line 2"):
            load_parallel_corpus(path, "tsv", DE_EN)

    def test_jsonl_missing_reference_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps({"source": "a", "reference": "b"})
            + "\n"
            + json.dumps({"source": "c"})
            + "\n",
            encoding="utf-8",
        )
        with pytest.raises(CorpusError, match=r"'reference'.*line 2"):
            load_parallel_corpus(path, "jsonl", DE_EN)

    def test_jsonl_keeps_explicit_ids_and_rejects_duplicates(self, tmp_path):
        path = tmp_path / "ids.jsonl"
        path.write_text(
            json.dumps({"id": "x1", "source": "a", "reference": "b"}) + "\n",
            encoding="utf-8",
        )
        split = load_parallel_corpus(path, "jsonl", DE_EN)
        assert split.pairs[0].id == "x1"
        path.write_text(
            json.dumps({"id": "x1", "source": "a", "reference": "b"}) + "\n"
            + json.dumps({"id": "x1", "source": "c", "reference": "d"}) + "\n",
            encoding="utf-8",
        )
        with pytest.raises(CorpusError, match="duplicate id"):
            load_parallel_corpus(path, "jsonl", DE_EN)

    def test_paired_text(self, tmp_path):
        (tmp_path / "news.de").write_text("quelle 1\nquelle 2\n", encoding="utf-8")
        (tmp_path / "news.en").write_text("target 1\ntarget 2\n", encoding="utf-8")
        split = load_parallel_corpus(tmp_path / "news", "paired-text", DE_EN)
        assert [p.source for p in split.pairs] == ["quelle 1", "quelle 2"]
        assert [p.reference for p in split.pairs] == ["target 1", "target 2"]

    def test_paired_text_length_mismatch(self, tmp_path):
        (tmp_path / "news.de").write_text("a\nb\n", encoding="utf-8")
        (tmp_path / "news.en").write_text("x\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="disagree in length"):
            load_parallel_corpus(tmp_path / "news", "paired-text", DE_EN)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(CorpusError, match="unknown corpus format"):
            load_parallel_corpus(tmp_path / "x", "xml", DE_EN)


class TestSampleDevSplit:
    def test_deterministic_for_seed(self):
        split = DatasetSplit("train", make_pairs(1002))
        first = sample_dev_split(split, 100, seed=7)
        second = sample_dev_split(split, 100, seed=7)
        assert len(first) == 100
        assert first.ids() == second.ids()
        assert first.name == "dev"

    def test_subset_without_replacement(self):
        split = DatasetSplit("train", make_pairs(50))
        sampled = sample_dev_split(split, 20, seed=3)
        ids = sampled.ids()
        assert len(set(ids)) == 20
        assert set(ids) <= set(split.ids())
        # original untouched
        assert len(split) == 50

    def test_full_size_sample_is_same_id_set(self):
        split = DatasetSplit("train", make_pairs(17))
        sampled = sample_dev_split(split, 17, seed=11)
        assert set(sampled.ids()) == set(split.ids())

    def test_zero_sample_is_empty(self):
        split = DatasetSplit("train", make_pairs(5))
        assert len(sample_dev_split(split, 0, seed=1)) == 0

    def test_oversample_rejected(self):
        split = DatasetSplit("train", make_pairs(5))
        with pytest.raises(ValueError):
            sample_dev_split(split, 6, seed=1)

    @given(seed=st.integers(0, 2**31), n=st.integers(0, 30))
    @settings(max_examples=25, deadline=None)
    def test_sampling_is_a_true_subset(self, seed, n):
        split = DatasetSplit("train", make_pairs(30))
        sampled = sample_dev_split(split, n, seed)
        assert set(sampled.ids()) <= set(split.ids())
        assert len(sampled.ids()) == len(set(sampled.ids())) == n


class TestAttachIntermediates:
    def test_bijection(self):
        split = DatasetSplit("train", make_pairs(3))
        triplets = attach_intermediates(
            split, {f"p{i}": f"draft {i}" for i in range(3)}, "sampler-v1"
        )
        assert [t.id for t in triplets] == ["p0", "p1", "p2"]
        assert all(t.sampler_tag == "sampler-v1" for t in triplets)
        assert all(t.score is None for t in triplets)

    def test_missing_intermediate_lists_ids(self):
        split = DatasetSplit("train", make_pairs(3))
        with pytest.raises(ValueError, match="p2"):
            attach_intermediates(split, {"p0": "a", "p1": "b"}, "s")

    def test_intermediate_equal_to_reference_is_valid(self):
        split = DatasetSplit("train", make_pairs(1))
        triplets = attach_intermediates(split, {"p0": "reference 0"}, "s")
        assert triplets[0].intermediate == triplets[0].reference

    def test_order_and_cardinality_preserved(self):
        split = DatasetSplit("train", tuple(reversed(make_pairs(20))))
        triplets = attach_intermediates(split, {f"p{i}": "x" for i in range(20)}, "s")
        assert [t.id for t in triplets] == [p.id for p in split.pairs]


class TestTripletRoundTrip:
    def make_triplets(self, n):
        return [
            RefinementTriplet(
                id=f"t{i}",
                source=f"quelle {i}",
                intermediate=f"draft {i}",
                reference=f"ref {i}",
                direction=DE_EN,
                sampler_tag="sampler",
                score=None if i % 3 == 0 else round(i / n, 4),
            )
            for i in range(1, n + 1)
        ]

    def test_round_trip_is_identity(self, tmp_path):
        triplets = self.make_triplets(100)
        path = tmp_path / "triplets.jsonl"
        write_triplets(triplets, path)
        assert read_triplets(path) == triplets

    def test_score_precision_preserved(self, tmp_path):
        triplet = RefinementTriplet("a", "s", "i", "r", DE_EN, "m", score=0.8321)
        path = tmp_path / "one.jsonl"
        write_triplets([triplet], path)
        assert read_triplets(path)[0].score == 0.8321

    def test_duplicate_ids_rejected(self, tmp_path):
        triplet = RefinementTriplet("dup", "s", "i", "r", DE_EN, "m")
        path = tmp_path / "dup.jsonl"
        path.write_text(
            "\n".join(json.dumps(
                {"id": "dup", "src_lang": "de", "tgt_lang": "en", "source": "s",
                 "intermediate": "i", "reference": "r", "score": None, "sampler_tag": "m"}
            ) for _ in range(2)) + "\n",
            encoding="utf-8",
        )
        with pytest.raises(CorpusError, match="duplicate id.*line 2"):
            read_triplets(path)

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text(json.dumps({"id": "a", "source": "s"}) + "\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="line 1"):
            read_triplets(path)

    def test_write_requires_existing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            write_triplets(self.make_triplets(1), tmp_path / "missing" / "t.jsonl")

    text = st.text(
        alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=60
    ).filter(lambda s: s.strip())

    @given(
        data=st.lists(
            st.tuples(text, text, text, st.one_of(st.none(), st.floats(0, 1, allow_nan=False))),
            min_size=1,
            max_size=20,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_identity_property(self, tmp_path_factory, data):
        triplets = [
            RefinementTriplet(f"id{i}", s, m, r, ZH_EN, "tag", score=score)
            for i, (s, m, r, score) in enumerate(data)
        ]
        path = tmp_path_factory.mktemp("rt") / "t.jsonl"
        write_triplets(triplets, path)
        assert read_triplets(path) == triplets
