from __future__ import annotations

from pathlib import Path

import pytest

from trainer_fixtures import write_shard


@pytest.fixture
def shard_factory(tmp_path):
    def factory(count: int, tag: str = "a", name: str | None = None) -> Path:
        return write_shard(tmp_path / (name or f"shard_{tag}.jsonl"), count, tag)

    return factory
