from __future__ import annotations

import json

from click.testing import CliRunner

from ladder_trainer.cli import main

from trainer_fixtures import write_shard


def stage_config(tmp_path, shards, stage_index=0, init_checkpoint=None, **overrides):
    config = {
        "base_model_id": "tiny:2x64",
        "learning_rate": 3e-3,
        "epochs_per_stage": 2,
        "stage_shard_paths": [str(s) for s in shards],
        "checkpoint_dir": str(tmp_path / "ck"),
        "stage_index": stage_index,
        "init_checkpoint": init_checkpoint,
        "seed": 5,
    }
    config.update(overrides)
    path = tmp_path / f"stage{stage_index}.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


class TestCli:
    def test_train_command_writes_receipt(self, tmp_path):
        shard = write_shard(tmp_path / "s1.jsonl", 4, "a")
        config = stage_config(tmp_path, [shard])
        result = CliRunner().invoke(main, ["train", "--config", str(config)])
        assert result.exit_code == 0, result.output
        receipt = json.loads((tmp_path / "ck" / "receipt_stage0.json").read_text(encoding="utf-8"))
        assert receipt["stage"] == 0

    def test_train_stage_chain_via_cli(self, tmp_path):
        shards = [write_shard(tmp_path / f"s{i}.jsonl", 3, tag) for i, tag in enumerate("ab")]
        runner = CliRunner()
        first = runner.invoke(main, ["train", "--config", str(stage_config(tmp_path, shards, 0))])
        assert first.exit_code == 0, first.output
        checkpoint = json.loads(
            (tmp_path / "ck" / "receipt_stage0.json").read_text(encoding="utf-8")
        )["checkpoint"]
        second = runner.invoke(
            main,
            ["train", "--config", str(stage_config(tmp_path, shards, 1, init_checkpoint=checkpoint))],
        )
        assert second.exit_code == 0, second.output

    def test_train_empty_shard_exits_1(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("", encoding="utf-8")
        config = stage_config(tmp_path, [empty])
        result = CliRunner().invoke(main, ["train", "--config", str(config)])
        assert result.exit_code == 1
        assert "empty" in result.output

    def test_chain_command(self, tmp_path):
        shards = [write_shard(tmp_path / f"c{i}.jsonl", 3, tag) for i, tag in enumerate("xy")]
        config = stage_config(tmp_path, shards)
        result = CliRunner().invoke(main, ["chain", "--config", str(config)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ck" / "receipt_stage1.json").exists()

    def test_export_command(self, tmp_path):
        shard = write_shard(tmp_path / "s.jsonl", 3, "e")
        config = stage_config(tmp_path, [shard])
        runner = CliRunner()
        assert runner.invoke(main, ["train", "--config", str(config)]).exit_code == 0
        checkpoint = str(tmp_path / "ck" / "stage0" / "adapter.pt")
        result = runner.invoke(
            main, ["export", "--checkpoint", checkpoint, "--out", str(tmp_path / "merged")]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "merged" / "model.pt").exists()
        assert (tmp_path / "merged" / "config.json").exists()

    def test_serve_bad_checkpoint_exits_1(self, tmp_path):
        result = CliRunner().invoke(
            main, ["serve", "--checkpoint", str(tmp_path / "nope.pt"), "--port", "0"]
        )
        assert result.exit_code == 1
