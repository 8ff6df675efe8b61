"""Shard loading, byte tokenization with prompt masking, and batching.

Shards are the pipeline's stage files: JSONL records with ``prompt`` and
``completion`` fields (ids kept for traceability). An example becomes
``[BOS] prompt-bytes completion-bytes [EOS]`` and the training loss counts
only the completion span (including EOS): label entries before the
completion never contribute, which `masked_completion_loss` enforces by
position rather than by sentinel values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .model import BOS_ID, EOS_ID, encode_text


@dataclass(frozen=True)
class Example:
    id: str
    input_ids: tuple[int, ...]
    prompt_len: int  # positions [prompt_len, len) are completion tokens

    def __len__(self) -> int:
        return len(self.input_ids)


def load_shard(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"shard not found: {path}")
    records = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            for key in ("prompt", "completion"):
                if key not in obj:
                    raise ValueError(f"{path}:{lineno}: shard record missing {key!r}")
            records.append(obj)
    return records


def tokenize_example(record: dict, max_seq_len: int) -> Example:
    prompt_ids = [BOS_ID] + encode_text(record["prompt"])
    completion_ids = encode_text(record["completion"]) + [EOS_ID]
    ids = (prompt_ids + completion_ids)[:max_seq_len]
    prompt_len = min(len(prompt_ids), len(ids))
    return Example(id=str(record.get("id", "")), input_ids=tuple(ids), prompt_len=prompt_len)


def make_batches(
    examples: list[Example], batch_size: int, *, shuffle: bool, generator: torch.Generator
) -> list[list[Example]]:
    order = list(range(len(examples)))
    if shuffle:
        order = torch.randperm(len(examples), generator=generator).tolist()
    return [
        [examples[i] for i in order[start : start + batch_size]]
        for start in range(0, len(order), batch_size)
    ]


def collate(batch: list[Example]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad to the batch max length; returns (input_ids, labels, prompt_lens,
    lengths). Labels equal the inputs; masking happens positionally in the
    loss, so padding content is irrelevant."""
    width = max(len(e) for e in batch)
    input_ids = torch.zeros(len(batch), width, dtype=torch.long)
    for row, example in enumerate(batch):
        input_ids[row, : len(example)] = torch.tensor(example.input_ids, dtype=torch.long)
    labels = input_ids.clone()
    prompt_lens = torch.tensor([e.prompt_len for e in batch], dtype=torch.long)
    lengths = torch.tensor([len(e) for e in batch], dtype=torch.long)
    return input_ids, labels, prompt_lens, lengths


def completion_mask(labels: torch.Tensor, prompt_lens: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Boolean mask over shifted positions: True where position j predicts a
    completion token (label index j+1 in [prompt_len, length))."""
    batch, width = labels.shape
    positions = torch.arange(1, width, device=labels.device)[None, :]
    return (positions >= prompt_lens[:, None]) & (positions < lengths[:, None])


def per_token_losses(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy of each next-token prediction; shape (batch, width-1)."""
    shifted_logits = logits[:, :-1, :]
    shifted_labels = labels[:, 1:]
    return torch.nn.functional.cross_entropy(
        shifted_logits.reshape(-1, shifted_logits.size(-1)),
        shifted_labels.reshape(-1),
        reduction="none",
    ).view(labels.size(0), -1)


def masked_completion_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    prompt_lens: torch.Tensor,
    lengths: torch.Tensor,
) -> torch.Tensor:
    """Mean cross-entropy over completion positions only. Label entries at
    prompt or padding positions never enter the value."""
    losses = per_token_losses(logits, labels)
    mask = completion_mask(labels, prompt_lens, lengths)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("batch has no completion tokens")
    return (losses * mask).sum() / count
