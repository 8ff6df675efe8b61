"""The score value type shared by all metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

METRIC_SCALES = {"bleu": (0.0, 100.0), "chrf": (0.0, 100.0), "neural": (0.0, 1.0)}


@dataclass(frozen=True)
class QualityScore:
    """A named metric value. Lexical metrics (bleu, chrf) live on a 0-100
    scale; neural scores on 0-1."""

    metric: str
    value: float

    def __post_init__(self):
        if self.metric not in METRIC_SCALES:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {tuple(METRIC_SCALES)}")
        if math.isnan(self.value):
            raise ValueError(f"{self.metric} score is NaN")
        lo, hi = METRIC_SCALES[self.metric]
        if not (lo <= self.value <= hi):
            raise ValueError(f"{self.metric} score {self.value} outside [{lo}, {hi}]")

    @property
    def normalized(self) -> float:
        """The score mapped onto [0, 1]."""
        lo, hi = METRIC_SCALES[self.metric]
        return (self.value - lo) / (hi - lo)
