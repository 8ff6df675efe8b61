"""Stage training: fit adapters on one shard (or the cumulative union),
starting from the previous stage's checkpoint, and emit a completion receipt
that makes the run reproducible and chainable.

The receipt records the shard and config hashes, the initializing
checkpoint, and the initial/final loss over the stage data, so a driver can
verify the chain stage by stage.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import collate, load_shard, make_batches, masked_completion_loss, tokenize_example
from .model import (
    DEFAULT_BASE_MODEL,
    TinyCausalLM,
    adapter_parameters,
    adapter_state_dict,
    attach_adapters,
    build_base_model,
    load_adapter_state,
)

CONFIG_FIELDS = (
    "base_model_id",
    "lora_rank",
    "lora_alpha",
    "learning_rate",
    "epochs_per_stage",
    "batch_size",
    "max_seq_len",
    "stage_shard_paths",
    "checkpoint_dir",
    "cumulative",
    "seed",
)


@dataclass(frozen=True)
class TrainConfig:
    stage_shard_paths: tuple[str, ...]
    checkpoint_dir: str
    base_model_id: str = DEFAULT_BASE_MODEL
    lora_rank: int = 16
    lora_alpha: float = 32.0
    learning_rate: float = 1e-4
    epochs_per_stage: int = 1
    batch_size: int = 16
    max_seq_len: int = 512
    cumulative: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.lora_rank <= 0:
            raise ValueError("lora_rank must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_seq_len <= 0:
            raise ValueError("max_seq_len must be positive")
        if self.epochs_per_stage < 1:
            raise ValueError("epochs_per_stage must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.stage_shard_paths:
            raise ValueError("no stage shards configured")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        kwargs = {key: data[key] for key in CONFIG_FIELDS if key in data}
        kwargs["stage_shard_paths"] = tuple(kwargs.get("stage_shard_paths", ()))
        return cls(**kwargs)

    def config_sha256(self) -> str:
        payload = json.dumps({key: getattr(self, key) for key in CONFIG_FIELDS}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StageCheckpoint:
    stage_index: int
    checkpoint_path: Path
    receipt_path: Path
    loss_trajectory: tuple[float, ...]
    receipt: dict = field(repr=False)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _stage_records(cfg: TrainConfig, stage_index: int) -> list[dict]:
    if cfg.cumulative:
        paths = cfg.stage_shard_paths[: stage_index + 1]
    else:
        paths = [cfg.stage_shard_paths[stage_index]]
    records = []
    for path in paths:
        records.extend(load_shard(path))
    return records


def _build_model(cfg: TrainConfig, init_checkpoint: str | None) -> TinyCausalLM:
    model = build_base_model(cfg.base_model_id)
    attach_adapters(model, cfg.lora_rank, cfg.lora_alpha, seed=cfg.seed)
    if init_checkpoint is not None:
        payload = torch.load(init_checkpoint, map_location="cpu", weights_only=True)
        if payload.get("base_model_id") != cfg.base_model_id:
            raise ValueError(
                f"checkpoint was trained on base {payload.get('base_model_id')!r}, "
                f"config wants {cfg.base_model_id!r}"
            )
        if payload.get("lora_rank") != cfg.lora_rank:
            raise ValueError(
                f"checkpoint adapter rank {payload.get('lora_rank')} != configured {cfg.lora_rank}"
            )
        load_adapter_state(model, payload["adapters"])
    return model


@torch.no_grad()
def _dataset_loss(model, batches) -> float:
    model.eval()
    total = 0.0
    count = 0
    for batch in batches:
        input_ids, labels, prompt_lens, lengths = collate(batch)
        loss = masked_completion_loss(model(input_ids), labels, prompt_lens, lengths)
        weight = sum(len(e) - e.prompt_len for e in batch)
        total += float(loss) * weight
        count += weight
    return total / count


def save_checkpoint(model, cfg: TrainConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "base_model_id": cfg.base_model_id,
            "lora_rank": cfg.lora_rank,
            "lora_alpha": cfg.lora_alpha,
            "adapter_seed": cfg.seed,
            "adapters": adapter_state_dict(model),
        },
        path,
    )


def load_refiner(checkpoint_path: str | Path) -> TinyCausalLM:
    """Base model plus trained adapters, ready for generation."""
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    for key in ("base_model_id", "lora_rank", "lora_alpha", "adapters"):
        if key not in payload:
            raise ValueError(f"not an adapter checkpoint (missing {key!r}): {checkpoint_path}")
    model = build_base_model(payload["base_model_id"])
    attach_adapters(model, payload["lora_rank"], payload["lora_alpha"], seed=payload.get("adapter_seed", 0))
    load_adapter_state(model, payload["adapters"])
    model.eval()
    return model


def train_stage(
    cfg: TrainConfig, stage_index: int, init_checkpoint: str | None = None
) -> StageCheckpoint:
    """Fit adapters on one stage. Stage 0 starts from fresh (no-op) adapters;
    later stages must initialize from the previous checkpoint. The loss is
    computed over completion tokens only."""
    if not (0 <= stage_index < len(cfg.stage_shard_paths)):
        raise ValueError(f"stage_index {stage_index} outside the {len(cfg.stage_shard_paths)}-stage plan")
    if stage_index > 0 and init_checkpoint is None:
        raise ValueError(f"stage {stage_index} needs the previous stage's checkpoint")
    records = _stage_records(cfg, stage_index)
    if not records:
        raise ValueError(f"stage {stage_index} shard is empty; nothing to train on")

    examples = [tokenize_example(record, cfg.max_seq_len) for record in records]
    model = _build_model(cfg, init_checkpoint)
    generator = torch.Generator().manual_seed(cfg.seed + stage_index)
    torch.manual_seed(cfg.seed + stage_index)

    eval_batches = make_batches(examples, cfg.batch_size, shuffle=False, generator=generator)
    initial_loss = _dataset_loss(model, eval_batches)

    optimizer = torch.optim.AdamW(adapter_parameters(model), lr=cfg.learning_rate)
    trajectory: list[float] = []
    steps = 0
    model.train()
    for _ in range(cfg.epochs_per_stage):
        for batch in make_batches(examples, cfg.batch_size, shuffle=True, generator=generator):
            input_ids, labels, prompt_lens, lengths = collate(batch)
            loss = masked_completion_loss(model(input_ids), labels, prompt_lens, lengths)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            trajectory.append(float(loss.detach()))
            steps += 1

    final_loss = _dataset_loss(model, eval_batches)

    checkpoint_dir = Path(cfg.checkpoint_dir)
    checkpoint_path = checkpoint_dir / f"stage{stage_index}" / "adapter.pt"
    save_checkpoint(model, cfg, checkpoint_path)
    receipt = {
        "stage": stage_index,
        "shard_sha256": sha256_file(cfg.stage_shard_paths[stage_index]),
        "config_sha256": cfg.config_sha256(),
        "init_checkpoint": init_checkpoint,
        "initial_loss": initial_loss,
        "final_loss": final_loss,
        "steps": steps,
        "examples": len(examples),
        "checkpoint": str(checkpoint_path),
    }
    if cfg.cumulative:
        receipt["cumulative_shards"] = [
            sha256_file(p) for p in cfg.stage_shard_paths[: stage_index + 1]
        ]
    receipt_path = checkpoint_dir / f"receipt_stage{stage_index}.json"
    receipt_path.write_text(json.dumps(receipt, indent=2) + "\n", encoding="utf-8")
    return StageCheckpoint(
        stage_index=stage_index,
        checkpoint_path=checkpoint_path,
        receipt_path=receipt_path,
        loss_trajectory=tuple(trajectory),
        receipt=receipt,
    )


def chain_stages(cfg: TrainConfig) -> StageCheckpoint:
    """Train every stage in plan order, each initialized from the previous
    stage's checkpoint; fails fast on the first broken stage."""
    last: StageCheckpoint | None = None
    for stage_index in range(len(cfg.stage_shard_paths)):
        init = str(last.checkpoint_path) if last is not None else None
        last = train_stage(cfg, stage_index, init)
    assert last is not None
    return last
