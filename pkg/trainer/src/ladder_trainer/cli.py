"""Trainer command line: ``train`` one stage from a JSON config, ``chain``
all stages, ``export`` merged weights, or ``serve`` a checkpoint behind the
chat wire contract."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .serve import RefinerServer, export_merged
from .train import TrainConfig, chain_stages, train_stage


def _load_config(path: str) -> tuple[TrainConfig, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return TrainConfig.from_dict(raw), raw


@click.group()
@click.version_option(__version__)
def main():
    """Staged adapter fine-tuning over emitted training shards."""


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Stage config JSON (shards, hyperparameters, stage_index, init_checkpoint).")
def cmd_train(config_path):
    """Train one stage and write its checkpoint and receipt."""
    try:
        cfg, raw = _load_config(config_path)
        stage_index = int(raw.get("stage_index", 0))
        init_checkpoint = raw.get("init_checkpoint")
        result = train_stage(cfg, stage_index, init_checkpoint)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"stage {result.stage_index}: loss {result.receipt['initial_loss']:.4f} -> "
        f"{result.receipt['final_loss']:.4f} over {result.receipt['steps']} step(s); "
        f"checkpoint {result.checkpoint_path}"
    )


@main.command("chain")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def cmd_chain(config_path):
    """Train every stage in order, chaining checkpoints."""
    try:
        cfg, _ = _load_config(config_path)
        result = chain_stages(cfg)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"chained {result.stage_index + 1} stage(s); final checkpoint {result.checkpoint_path}")


@main.command("export")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_export(checkpoint, out_dir):
    """Merge adapters into the base weights and write a standalone model."""
    try:
        path = export_merged(checkpoint, out_dir)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"exported merged weights to {path}")


@main.command("serve")
@click.option("--checkpoint", required=True, type=click.Path(),
              help="Adapter checkpoint file or merged-export directory.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8399, show_default=True, type=int)
def cmd_serve(checkpoint, host, port):
    """Serve the model over the chat-completions wire contract."""
    try:
        server = RefinerServer(checkpoint, host=host, port=port)
    except (ValueError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"serving {checkpoint} at {server.url}/chat/completions")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
