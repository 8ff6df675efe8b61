"""Improvement analytics over refinement runs: score deltas, improved vs
degraded proportions, comparison tables, and scatter-plot data exports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .refine import RefinementRecord

FRACTION_TOLERANCE = 1e-9

TABLE_FORMATS = ("text", "markdown", "csv")


@dataclass(frozen=True)
class DeltaStats:
    """Mean and spread of per-segment improvement (refined minus original),
    plus the improved/degraded/unchanged proportions."""

    delta_mean: float
    delta_std: float
    n: int
    improved_frac: float
    degraded_frac: float
    unchanged_frac: float
    metric: str

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.delta_std < 0:
            raise ValueError("standard deviation must be non-negative")
        total = self.improved_frac + self.degraded_frac + self.unchanged_frac
        if abs(total - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"class fractions must sum to 1, got {total}")

    def to_json(self) -> dict:
        return {
            "delta_mean": self.delta_mean,
            "delta_std": self.delta_std,
            "n": self.n,
            "improved_frac": self.improved_frac,
            "degraded_frac": self.degraded_frac,
            "unchanged_frac": self.unchanged_frac,
            "metric": self.metric,
        }


def classify_delta(delta: float, tie_epsilon: float) -> str:
    if delta > tie_epsilon:
        return "improved"
    if delta < -tie_epsilon:
        return "degraded"
    return "unchanged"


def improvement_stats(
    original_scores: Sequence[float],
    refined_scores: Sequence[float],
    tie_epsilon: float = 0.0,
    metric: str = "chrf",
) -> DeltaStats:
    """Delta mean, population standard deviation, and class proportions over
    aligned original/refined score lists."""
    if len(original_scores) != len(refined_scores):
        raise ValueError(
            f"score list length mismatch: {len(original_scores)} vs {len(refined_scores)}"
        )
    if not original_scores:
        raise ValueError("empty score lists")
    deltas = [r - o for o, r in zip(original_scores, refined_scores)]
    n = len(deltas)
    mean = sum(deltas) / n
    variance = sum((d - mean) ** 2 for d in deltas) / n
    counts = {"improved": 0, "degraded": 0, "unchanged": 0}
    for delta in deltas:
        counts[classify_delta(delta, tie_epsilon)] += 1
    return DeltaStats(
        delta_mean=mean,
        delta_std=math.sqrt(variance),
        n=n,
        improved_frac=counts["improved"] / n,
        degraded_frac=counts["degraded"] / n,
        unchanged_frac=counts["unchanged"] / n,
        metric=metric,
    )


@dataclass(frozen=True)
class BreakdownRow:
    """Original vs refined metric value for one (model, direction) cell."""

    model: str
    direction: str
    metric: str
    original: float
    refined: float

    @property
    def delta(self) -> float:
        return self.refined - self.original

    @property
    def flag(self) -> str:
        return classify_delta(self.delta, 0.0)


def render_table(rows: Sequence[BreakdownRow], format: str = "text") -> str:
    """Comparison table ordered by (model, direction) with signed deltas."""
    if not rows:
        raise ValueError("no rows to render")
    if format not in TABLE_FORMATS:
        raise ValueError(f"unknown table format {format!r}; expected one of {TABLE_FORMATS}")
    ordered = sorted(rows, key=lambda r: (r.model, r.direction))
    header = ("model", "direction", "metric", "original", "refined", "delta", "flag")
    cells = [
        (
            row.model,
            row.direction,
            row.metric,
            f"{row.original:.2f}",
            f"{row.refined:.2f}",
            f"{row.delta:+.2f}",
            row.flag,
        )
        for row in ordered
    ]
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(header)
        writer.writerows(cells)
        return buffer.getvalue()
    if format == "markdown":
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join("---" for _ in header) + " |",
        ]
        lines.extend("| " + " | ".join(row) + " |" for row in cells)
        return "\n".join(lines) + "\n"
    widths = [max(len(header[i]), *(len(row[i]) for row in cells)) for i in range(len(header))]
    lines = [
        "  ".join(header[i].ljust(widths[i]) for i in range(len(header))),
        "  ".join("-" * widths[i] for i in range(len(header))),
    ]
    lines.extend("  ".join(row[i].ljust(widths[i]) for i in range(len(header))) for row in cells)
    return "\n".join(lines) + "\n"


def export_scatter(
    records: Sequence[RefinementRecord],
    path: str | Path,
    score_key_original: str = "intermediate",
    score_key_refined: str = "refined",
    tie_epsilon: float = 0.0,
) -> Path:
    """Write per-record (original score, refined score, class) rows as CSV.
    Every record must carry scores for both texts; class proportions agree
    with :func:`improvement_stats` on the same records by construction."""
    if not records:
        raise ValueError("no records to export")
    rows = []
    for record in records:
        if score_key_original not in record.scores or score_key_refined not in record.scores:
            raise ValueError(f"record {record.id} is missing scores for both texts")
        original = record.scores[score_key_original].value
        refined = record.scores[score_key_refined].value
        rows.append((record.id, original, refined, classify_delta(refined - original, tie_epsilon)))
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("id", "original", "refined", "class"))
        writer.writerows(rows)
    return path


def write_run_manifest(out_dir: str | Path, payload: dict) -> Path:
    """Persist everything needed to replay a run: command, config snapshot,
    endpoint identities, seeds, and scorer labels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = dict(payload)
    manifest.setdefault("created_at", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    path = out_dir / "run.json"
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
