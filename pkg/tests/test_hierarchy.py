from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladder.corpus import Direction, RefinementTriplet
from ladder.hierarchy import (
    DEFAULT_THRESHOLDS,
    THRESHOLD_PRESETS,
    ThresholdConfig,
    emit_shards,
    partition,
    plan_schedule,
)
from ladder.prompting import TemplatePair

from mock_endpoints import PIPE_DIRECT, PIPE_REFINE

DE_EN = Direction.from_codes("de", "en")


def triplet(i, score):
    return RefinementTriplet(
        id=f"t{i}",
        source=f"quelle {i}",
        intermediate=f"draft {i}",
        reference=f"ref {i}",
        direction=DE_EN,
        sampler_tag="sampler",
        score=score,
    )


def triplets_from(scores):
    return [triplet(i, s) for i, s in enumerate(scores)]


def naive_level(score, mu, nu):
    """Independent per-element three-way comparison."""
    if score < mu:
        return "easy"
    if mu <= score < nu:
        return "medium"
    return "hard"


class TestThresholds:
    def test_presets(self):
        assert THRESHOLD_PRESETS["hft2"] == ThresholdConfig(0.75, 0.85)
        assert THRESHOLD_PRESETS["hft1"] == ThresholdConfig(0.70, 0.80)
        assert THRESHOLD_PRESETS["hft3"] == ThresholdConfig(0.80, 0.90)
        assert DEFAULT_THRESHOLDS == THRESHOLD_PRESETS["hft2"]

    def test_mu_below_nu_enforced(self):
        with pytest.raises(ValueError):
            ThresholdConfig(0.85, 0.75)
        with pytest.raises(ValueError):
            ThresholdConfig(0.5, 0.5)

    def test_open_interval(self):
        with pytest.raises(ValueError):
            ThresholdConfig(0.0, 0.5)
        with pytest.raises(ValueError):
            ThresholdConfig(0.5, 1.0)


class TestPartition:
    def test_three_way_split(self):
        part = partition(triplets_from([0.50, 0.80, 0.90]), DEFAULT_THRESHOLDS)
        assert [t.score for t in part.easy] == [0.50]
        assert [t.score for t in part.medium] == [0.80]
        assert [t.score for t in part.hard] == [0.90]

    def test_boundaries_are_half_open(self):
        part = partition(triplets_from([0.75, 0.85]), DEFAULT_THRESHOLDS)
        assert [t.score for t in part.medium] == [0.75]
        assert [t.score for t in part.hard] == [0.85]

    def test_all_perfect_scores_land_in_hard(self):
        part = partition(triplets_from([1.0, 1.0, 1.0]), DEFAULT_THRESHOLDS)
        assert not part.easy and not part.medium
        assert len(part.hard) == 3

    def test_unscored_reported_by_id(self):
        bad = triplets_from([0.5, 0.9])
        bad.append(triplet(2, None))
        with pytest.raises(ValueError, match="t2"):
            partition(bad, DEFAULT_THRESHOLDS)

    def test_within_bucket_order_preserved(self):
        scores = [0.1, 0.9, 0.2, 0.8, 0.3]
        part = partition(triplets_from(scores), DEFAULT_THRESHOLDS)
        assert [t.id for t in part.easy] == ["t0", "t2", "t4"]

    def test_agrees_with_naive_oracle_for_all_presets(self):
        rng = random.Random(99)
        scores = [rng.random() for _ in range(10_000)]
        items = triplets_from(scores)
        for cfg in THRESHOLD_PRESETS.values():
            part = partition(items, cfg)
            assert len(part) == len(items)
            ids = [t.id for t in part.easy + part.medium + part.hard]
            assert len(set(ids)) == len(items)
            for bucket, name in ((part.easy, "easy"), (part.medium, "medium"), (part.hard, "hard")):
                for t in bucket:
                    assert naive_level(t.score, cfg.mu, cfg.nu) == name

    def test_lowering_mu_shrinks_easy(self):
        items = triplets_from([i / 100 for i in range(1, 100)])
        wide = partition(items, ThresholdConfig(0.75, 0.85))
        narrow = partition(items, ThresholdConfig(0.60, 0.85))
        assert {t.id for t in narrow.easy} <= {t.id for t in wide.easy}

    @given(scores=st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=200))
    @settings(max_examples=50, deadline=None)
    def test_exhaustive_and_exclusive(self, scores):
        part = partition(triplets_from(scores), DEFAULT_THRESHOLDS)
        ids = [t.id for t in part.easy] + [t.id for t in part.medium] + [t.id for t in part.hard]
        assert len(ids) == len(scores)
        assert len(set(ids)) == len(ids)


class TestPlanSchedule:
    def make_partition(self, easy=3, medium=2, hard=1):
        scores = [0.1] * easy + [0.8] * medium + [0.9] * hard
        return partition(triplets_from(scores), DEFAULT_THRESHOLDS)

    def test_hft_order(self):
        plan = plan_schedule(self.make_partition(), "hft")
        assert [s.name for s in plan.stages] == ["easy", "medium", "hard"]

    def test_anti_hft_is_exact_reverse(self):
        part = self.make_partition()
        hft = plan_schedule(part, "hft")
        anti = plan_schedule(part, "anti_hft")
        assert list(reversed(hft.stages)) == list(anti.stages)

    def test_mixed_is_seeded_permutation(self):
        part = self.make_partition(5, 4, 3)
        first = plan_schedule(part, "mixed", seed=42)
        second = plan_schedule(part, "mixed", seed=42)
        assert first.stages == second.stages
        ids = [t.id for t in first.stages[0].triplets]
        assert sorted(ids) == sorted(t.id for t in part.easy + part.medium + part.hard)
        different = plan_schedule(part, "mixed", seed=43)
        assert [t.id for t in different.stages[0].triplets] != ids

    def test_mixed_needs_seed(self):
        with pytest.raises(ValueError, match="seed"):
            plan_schedule(self.make_partition(), "mixed")

    def test_empty_buckets_keep_stage_numbering(self):
        part = partition(triplets_from([0.9, 0.95]), DEFAULT_THRESHOLDS)
        plan = plan_schedule(part, "hft")
        assert [s.name for s in plan.stages] == ["easy", "medium", "hard"]
        assert [len(s.triplets) for s in plan.stages] == [0, 0, 2]

    def test_all_empty_rejected(self):
        from ladder.hierarchy import Partition

        empty = Partition((), (), (), DEFAULT_THRESHOLDS)
        with pytest.raises(ValueError):
            plan_schedule(empty, "hft")

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            plan_schedule(self.make_partition(), "random")


class TestEmitShards:
    templates = TemplatePair(PIPE_DIRECT, PIPE_REFINE)

    def plan(self, easy=5, medium=3, hard=2, strategy="hft", seed=None):
        scores = [0.1] * easy + [0.8] * medium + [0.9] * hard
        return plan_schedule(partition(triplets_from(scores), DEFAULT_THRESHOLDS), strategy, seed)

    def test_one_file_per_stage_with_counts(self, tmp_path):
        paths = emit_shards(self.plan(), self.templates, tmp_path)
        assert [p.name for p in paths] == ["stage1_easy.jsonl", "stage2_medium.jsonl", "stage3_hard.jsonl"]
        counts = [len(p.read_text(encoding="utf-8").splitlines()) for p in paths]
        assert counts == [5, 3, 2]

    def test_completion_is_reference_verbatim(self, tmp_path):
        paths = emit_shards(self.plan(), self.templates, tmp_path)
        for path in paths:
            for line in path.read_text(encoding="utf-8").splitlines():
                record = json.loads(line)
                index = int(record["id"][1:])
                assert record["completion"] == f"ref {index}"
                assert f"quelle {index}" in record["prompt"]
                assert f"draft {index}" in record["prompt"]

    def test_empty_stage_still_emitted(self, tmp_path):
        plan = self.plan(easy=2, medium=0, hard=1)
        paths = emit_shards(plan, self.templates, tmp_path)
        medium = tmp_path / "stage2_medium.jsonl"
        assert medium in paths and medium.exists()
        assert medium.read_text(encoding="utf-8") == ""

    def test_lossless_id_union(self, tmp_path):
        plan = self.plan(7, 6, 5)
        paths = emit_shards(plan, self.templates, tmp_path)
        shard_ids = set()
        for path in paths:
            for line in path.read_text(encoding="utf-8").splitlines():
                shard_ids.add(json.loads(line)["id"])
        plan_ids = {t.id for stage in plan.stages for t in stage.triplets}
        assert shard_ids == plan_ids

    def test_record_levels_and_stage_numbers(self, tmp_path):
        paths = emit_shards(self.plan(), self.templates, tmp_path)
        for stage_number, (path, level) in enumerate(
            zip(paths, ("easy", "medium", "hard")), start=1
        ):
            for line in path.read_text(encoding="utf-8").splitlines():
                record = json.loads(line)
                assert record["stage"] == stage_number
                assert record["level"] == level

    def test_mixed_shard_keeps_per_triplet_levels(self, tmp_path):
        plan = self.plan(2, 2, 2, strategy="mixed", seed=7)
        emit_shards(plan, self.templates, tmp_path)
        lines = (tmp_path / "stage1_mixed.jsonl").read_text(encoding="utf-8").splitlines()
        levels = {json.loads(line)["level"] for line in lines}
        assert levels == {"easy", "medium", "hard"}

    def test_manifest_contents(self, tmp_path):
        emit_shards(self.plan(), self.templates, tmp_path)
        manifest = json.loads((tmp_path / "plan.json").read_text(encoding="utf-8"))
        assert manifest["strategy"] == "hft"
        assert manifest["thresholds"] == {"mu": 0.75, "nu": 0.85}
        assert [s["count"] for s in manifest["stages"]] == [5, 3, 2]
        assert [s["path"] for s in manifest["stages"]] == [
            "stage1_easy.jsonl",
            "stage2_medium.jsonl",
            "stage3_hard.jsonl",
        ]


@given(scores=st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=100), seed=st.integers(0, 999))
@settings(max_examples=30, deadline=None)
def test_mixed_permutation_property(scores, seed):
    part = partition(triplets_from(scores), DEFAULT_THRESHOLDS)
    plan = plan_schedule(part, "mixed", seed=seed)
    ids = [t.id for t in plan.stages[0].triplets]
    assert sorted(ids) == sorted(f"t{i}" for i in range(len(scores)))
