"""Quality-tiered partitioning of scored triplets and staged training schedules.

Triplets whose intermediate scores below ``mu`` are Easy (far from the
reference, most room to improve), in [``mu``, ``nu``) Medium, and at or above
``nu`` Hard (near-perfect). Schedules order the tiers for staged fine-tuning:
``hft`` trains Easy then Medium then Hard, ``anti_hft`` is the exact reverse,
and ``mixed`` is a single seeded shuffle of everything. Shards are JSONL
(prompt, completion) records where the prompt is the rendered refinement
instruction and the completion is the reference verbatim.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .corpus import RefinementTriplet
from .prompting import TemplatePair, render_refine

STRATEGIES = ("hft", "anti_hft", "mixed")


class HierarchyLevel(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True)
class ThresholdConfig:
    mu: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0) or not (0.0 < self.nu < 1.0):
            raise ValueError(f"thresholds must lie in (0, 1), got mu={self.mu}, nu={self.nu}")
        if not self.mu < self.nu:
            raise ValueError(f"mu must be below nu, got mu={self.mu}, nu={self.nu}")


# Presets used for the threshold-robustness comparison.
THRESHOLD_PRESETS = {
    "hft1": ThresholdConfig(0.70, 0.80),
    "hft2": ThresholdConfig(0.75, 0.85),
    "hft3": ThresholdConfig(0.80, 0.90),
}

DEFAULT_THRESHOLDS = THRESHOLD_PRESETS["hft2"]


def level_of(score: float, thresholds: ThresholdConfig) -> HierarchyLevel:
    """Tier for a score in [0, 1]: score < mu is Easy, mu <= score < nu is
    Medium, score >= nu is Hard (half-open so every score lands somewhere)."""
    if score < thresholds.mu:
        return HierarchyLevel.EASY
    if score < thresholds.nu:
        return HierarchyLevel.MEDIUM
    return HierarchyLevel.HARD


@dataclass(frozen=True)
class Partition:
    easy: tuple[RefinementTriplet, ...]
    medium: tuple[RefinementTriplet, ...]
    hard: tuple[RefinementTriplet, ...]
    thresholds: ThresholdConfig

    def bucket(self, level: HierarchyLevel) -> tuple[RefinementTriplet, ...]:
        return {
            HierarchyLevel.EASY: self.easy,
            HierarchyLevel.MEDIUM: self.medium,
            HierarchyLevel.HARD: self.hard,
        }[level]

    def __len__(self) -> int:
        return len(self.easy) + len(self.medium) + len(self.hard)


def partition(triplets: Sequence[RefinementTriplet], cfg: ThresholdConfig) -> Partition:
    """Split scored triplets into Easy/Medium/Hard. Buckets are disjoint,
    cover the input, and preserve input order within each bucket."""
    unscored = [t.id for t in triplets if t.score is None]
    if unscored:
        raise ValueError(f"unscored triplets: {', '.join(unscored)}")
    buckets: dict[HierarchyLevel, list[RefinementTriplet]] = {level: [] for level in HierarchyLevel}
    for triplet in triplets:
        buckets[level_of(triplet.score, cfg)].append(triplet)
    return Partition(
        easy=tuple(buckets[HierarchyLevel.EASY]),
        medium=tuple(buckets[HierarchyLevel.MEDIUM]),
        hard=tuple(buckets[HierarchyLevel.HARD]),
        thresholds=cfg,
    )


@dataclass(frozen=True)
class Stage:
    name: str
    triplets: tuple[RefinementTriplet, ...]


@dataclass(frozen=True)
class StagePlan:
    strategy: str
    stages: tuple[Stage, ...]
    thresholds: ThresholdConfig
    seed: int | None = None

    def total(self) -> int:
        return sum(len(stage.triplets) for stage in self.stages)


def plan_schedule(
    part: Partition, strategy: str, seed: int | None = None
) -> StagePlan:
    """Build the staged training order. Empty buckets become empty stages so
    stage numbering stays stable across datasets; the mixed shuffle is
    deterministic for a given seed."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if len(part) == 0:
        raise ValueError("all buckets are empty; nothing to schedule")
    if strategy == "mixed":
        if seed is None:
            raise ValueError("mixed strategy needs a seed for a reproducible shuffle")
        pooled = list(part.easy + part.medium + part.hard)
        random.Random(seed).shuffle(pooled)
        return StagePlan("mixed", (Stage("mixed", tuple(pooled)),), part.thresholds, seed)
    order = [HierarchyLevel.EASY, HierarchyLevel.MEDIUM, HierarchyLevel.HARD]
    if strategy == "anti_hft":
        order.reverse()
    stages = tuple(Stage(level.value, part.bucket(level)) for level in order)
    return StagePlan(strategy, stages, part.thresholds, seed)


def shard_filename(stage_index: int, name: str) -> str:
    return f"stage{stage_index}_{name}.jsonl"


def emit_shards(
    plan: StagePlan, templates: TemplatePair, out_dir: str | Path
) -> list[Path]:
    """Write one JSONL shard per stage (1-indexed, empty stages included)
    plus a plan.json manifest. Each record pairs the rendered refinement
    prompt with the triplet's reference as the completion, and keeps the
    triplet id for traceability."""
    if plan.total() == 0:
        raise ValueError("plan is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    manifest_stages = []
    for index, stage in enumerate(plan.stages, start=1):
        path = out_dir / shard_filename(index, stage.name)
        with open(path, "w", encoding="utf-8") as handle:
            for triplet in stage.triplets:
                record = {
                    "id": triplet.id,
                    "stage": index,
                    "level": level_of(triplet.score, plan.thresholds).value,
                    "prompt": render_refine(
                        templates.refine, triplet.source, triplet.intermediate, triplet.direction
                    ),
                    "completion": triplet.reference,
                }
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        paths.append(path)
        manifest_stages.append(
            {"stage": index, "name": stage.name, "count": len(stage.triplets), "path": path.name}
        )
    manifest = {
        "strategy": plan.strategy,
        "seed": plan.seed,
        "thresholds": {"mu": plan.thresholds.mu, "nu": plan.thresholds.nu},
        "stages": manifest_stages,
    }
    (out_dir / "plan.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return paths
