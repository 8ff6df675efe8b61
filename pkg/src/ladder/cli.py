"""Command-line pipeline orchestration.

One TOML config drives every stage; each command writes its artifacts under
its own subdirectory of the run's output directory together with a run.json
manifest, refuses to overwrite existing artifacts without --force, and exits
0 on success, 1 on configuration errors, 2 on partial per-item failures.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path

import click

from . import __version__
from .client import generate_batch
from .config import ConfigError, RunConfig, config_snapshot, load_run_config
from .corpus import (
    CorpusError,
    DatasetSplit,
    Direction,
    attach_intermediates,
    load_parallel_corpus,
    read_triplets,
    write_triplets,
)
from .hierarchy import emit_shards, partition, plan_schedule
from .metrics import (
    ScoreCache,
    bleu_corpus,
    bleu_sentence,
    chrf_corpus,
    chrf_sentence,
    default_tokenization,
    score_triplets,
)
from .prompting import parse_completion, render_direct
from .refine import (
    precomputed_refine,
    read_intermediates,
    read_records,
    refine_corpus,
    self_refine,
    write_records,
)
from .report import BreakdownRow, export_scatter, improvement_stats, render_table, write_run_manifest

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


@dataclass
class CliState:
    config_path: str | None
    out: str | None
    force: bool
    seed: int | None

    def load(self) -> RunConfig:
        if not self.config_path:
            raise ConfigError("no config file given; pass --config run.toml")
        return load_run_config(self.config_path, out_override=self.out, seed_override=self.seed)


pass_state = click.make_pass_decorator(CliState)


@click.group()
@click.option("--config", "-c", "config_path", type=click.Path(), help="TOML run config.")
@click.option("--out", type=click.Path(), help="Output directory (overrides [run].out_dir).")
@click.option("--force", is_flag=True, help="Overwrite existing artifacts.")
@click.option("--seed", type=int, default=None, help="Run seed (overrides [run].seed).")
@click.version_option(__version__)
@click.pass_context
def main(ctx, config_path, out, force, seed):
    """Translation-refinement pipeline: build triplets, score them, plan
    staged training data, drive training, and run/evaluate refinement."""
    ctx.obj = CliState(config_path, out, force, seed)


def _fail(message: str, code: int) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return click.exceptions.Exit(code)


def _claim_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"{path} already contains artifacts; rerun with --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(cfg: RunConfig, out_dir: Path, command: str, **extra) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "config": config_snapshot(cfg),
        **extra,
    }
    write_run_manifest(out_dir, payload)


def _load_split(spec) -> DatasetSplit:
    return load_parallel_corpus(spec.path, spec.format, spec.direction, spec.split)


def _cache(cfg: RunConfig) -> ScoreCache | None:
    return ScoreCache(cfg.scorer_cache) if cfg.scorer_cache else None


@main.command("build-triplets")
@pass_state
def cmd_build_triplets(state: CliState):
    """Sample intermediate translations for every train corpus and write
    unscored triplet files, one per direction."""
    try:
        cfg = state.load()
        sampler = cfg.endpoint("sampler")
        corpora = cfg.corpora_for_split("train")
        if not corpora:
            raise ConfigError("no train corpora configured")
        out_dir = _claim_dir(cfg.out_dir / "triplets", state.force)
    except (ConfigError, FileNotFoundError, CorpusError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    failures: dict[str, list[dict]] = {}
    counts: dict[str, int] = {}
    for spec in corpora:
        try:
            split = _load_split(spec)
        except (FileNotFoundError, CorpusError) as exc:
            raise _fail(str(exc), EXIT_CONFIG)
        prompts = [render_direct(cfg.templates.direct, p.source, p.direction) for p in split.pairs]
        results = generate_batch(sampler, prompts, ids=split.ids())
        policy = cfg.policy("sampler")
        intermediates: dict[str, str] = {}
        direction_failures = []
        for pair, result in zip(split.pairs, results):
            if not result.ok:
                direction_failures.append({"id": pair.id, "error": result.error})
                continue
            try:
                intermediates[pair.id] = parse_completion(result.text, policy)
            except ValueError as exc:
                direction_failures.append({"id": pair.id, "error": str(exc)})
        ok_pairs = tuple(p for p in split.pairs if p.id in intermediates)
        if ok_pairs:
            ok_split = DatasetSplit(split.name, ok_pairs)
            triplets = attach_intermediates(ok_split, intermediates, sampler.model_name)
            write_triplets(triplets, out_dir / f"{spec.direction.label}.jsonl")
        counts[spec.direction.label] = len(ok_pairs)
        if direction_failures:
            failures[spec.direction.label] = direction_failures

    if failures:
        (out_dir / "failures.json").write_text(
            json.dumps(failures, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    _manifest(cfg, out_dir, "build-triplets", counts=counts, failures=sum(map(len, failures.values())))
    click.echo(f"wrote triplets for {len(counts)} direction(s) under {out_dir}")
    if failures:
        raise _fail(f"{sum(map(len, failures.values()))} item(s) failed; see failures.json", EXIT_PARTIAL)


@main.command("score")
@click.option("--rescore", is_flag=True, help="Overwrite existing scores.")
@pass_state
def cmd_score(state: CliState, rescore: bool):
    """Score every triplet's intermediate against its reference and write
    scored triplet files."""
    try:
        cfg = state.load()
        in_dir = cfg.out_dir / "triplets"
        triplet_files = sorted(in_dir.glob("*.jsonl"))
        if not triplet_files:
            raise ConfigError(f"no triplet files under {in_dir}; run build-triplets first")
        out_dir = _claim_dir(cfg.out_dir / "scored", state.force)
        cache = _cache(cfg)
    except (ConfigError, FileNotFoundError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    total = 0
    for triplet_file in triplet_files:
        try:
            triplets = read_triplets(triplet_file)
            scored = score_triplets(
                triplets,
                cfg.scorer_kind,
                endpoint=cfg.scorer_endpoint,
                cache=cache,
                rescore=rescore,
            )
        except (CorpusError, ValueError) as exc:
            raise _fail(f"{triplet_file.name}: {exc}", EXIT_CONFIG)
        except RuntimeError as exc:
            raise _fail(f"{triplet_file.name}: {exc}", EXIT_PARTIAL)
        write_triplets(scored, out_dir / triplet_file.name)
        total += len(scored)
    _manifest(cfg, out_dir, "score", scorer=cfg.scorer_kind, triplets=total)
    click.echo(f"scored {total} triplet(s) with {cfg.scorer_kind} under {out_dir}")


@main.command("plan")
@pass_state
def cmd_plan(state: CliState):
    """Partition scored triplets into Easy/Medium/Hard and emit the staged
    training shards plus a plan manifest."""
    try:
        cfg = state.load()
        in_dir = cfg.out_dir / "scored"
        scored_files = sorted(in_dir.glob("*.jsonl"))
        if not scored_files:
            raise ConfigError(f"no scored triplet files under {in_dir}; run score first")
        if cfg.strategy == "mixed" and cfg.schedule_seed is None:
            raise ConfigError("mixed strategy needs [schedule].seed for a reproducible shuffle")
        out_dir = _claim_dir(cfg.out_dir / "plan", state.force)
        triplets = []
        for scored_file in scored_files:
            triplets.extend(read_triplets(scored_file))
        part = partition(triplets, cfg.thresholds)
        plan = plan_schedule(part, cfg.strategy, cfg.schedule_seed)
        shard_paths = emit_shards(plan, cfg.templates, out_dir)
    except (ConfigError, FileNotFoundError, CorpusError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)
    except ValueError as exc:
        raise _fail(f"{exc}; score the triplets first (ladder score)", EXIT_CONFIG)
    _manifest(
        cfg,
        out_dir,
        "plan",
        buckets={"easy": len(part.easy), "medium": len(part.medium), "hard": len(part.hard)},
        strategy=cfg.strategy,
        thresholds={"mu": cfg.thresholds.mu, "nu": cfg.thresholds.nu},
        shards=[p.name for p in shard_paths],
    )
    click.echo(
        f"planned {plan.total()} triplet(s): easy={len(part.easy)} "
        f"medium={len(part.medium)} hard={len(part.hard)} -> {out_dir}"
    )


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@main.command("train")
@pass_state
def cmd_train(state: CliState):
    """Drive the external trainer adapter over the planned stages, chaining
    each stage from the previous stage's checkpoint."""
    try:
        cfg = state.load()
        plan_path = cfg.out_dir / "plan" / "plan.json"
        if not plan_path.is_file():
            raise ConfigError(f"no plan manifest at {plan_path}; run plan first")
        plan = json.loads(plan_path.read_text(encoding="utf-8"))
        out_dir = _claim_dir(cfg.out_dir / "train", state.force)
    except (ConfigError, FileNotFoundError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    shard_paths = [str((cfg.out_dir / "plan" / stage["path"]).resolve()) for stage in plan["stages"]]
    checkpoint_dir = out_dir / "ckpt"
    checkpoint_dir.mkdir(exist_ok=True)
    init_checkpoint: str | None = None
    receipts = []
    for index, stage in enumerate(plan["stages"]):
        if stage["count"] == 0:
            # empty tiers keep their stage number but nothing can be trained
            # on them; the previous checkpoint carries forward
            click.echo(f"stage {index + 1} ({stage['name']}) is empty; skipping")
            continue
        stage_config = {
            **cfg.train_options,
            "stage_shard_paths": shard_paths,
            "checkpoint_dir": str(checkpoint_dir.resolve()),
            "stage_index": index,
            "init_checkpoint": init_checkpoint,
        }
        config_path = out_dir / f"stage{index + 1}.json"
        config_path.write_text(json.dumps(stage_config, indent=2) + "\n", encoding="utf-8")
        command = [*cfg.adapter_cmd, "train", "--config", str(config_path)]
        try:
            completed = subprocess.run(command, capture_output=True, text=True)
        except FileNotFoundError:
            raise _fail(
                f"trainer adapter {cfg.adapter_cmd[0]!r} not found; install the trainer package "
                "(pip install ./trainer) or point [train].adapter_cmd at it",
                EXIT_CONFIG,
            )
        if completed.returncode != 0:
            raise _fail(
                f"stage {index + 1} ({stage['name']}) failed "
                f"(exit {completed.returncode}): {completed.stderr.strip()[-500:]}",
                EXIT_CONFIG,
            )
        receipt_path = checkpoint_dir / f"receipt_stage{index}.json"
        if not receipt_path.is_file():
            raise _fail(f"stage {index + 1}: adapter wrote no receipt at {receipt_path}", EXIT_CONFIG)
        receipt = json.loads(receipt_path.read_text(encoding="utf-8"))
        if receipt.get("stage") != index:
            raise _fail(f"stage {index + 1}: receipt stage mismatch ({receipt.get('stage')})", EXIT_CONFIG)
        if receipt.get("init_checkpoint") != init_checkpoint:
            raise _fail(f"stage {index + 1}: receipt init_checkpoint mismatch", EXIT_CONFIG)
        expected = _sha256_file(Path(shard_paths[index]))
        if receipt.get("shard_sha256") != expected:
            raise _fail(f"stage {index + 1}: receipt shard hash mismatch", EXIT_CONFIG)
        checkpoint = receipt.get("checkpoint") or str(checkpoint_dir / f"stage{index}" / "adapter.pt")
        init_checkpoint = checkpoint
        receipts.append(receipt)
    _manifest(cfg, out_dir, "train", stages=len(receipts), final_checkpoint=init_checkpoint)
    click.echo(f"trained {len(receipts)} stage(s); final checkpoint {init_checkpoint}")


@main.command("refine")
@click.option("--precomputed", type=click.Path(exists=True), default=None,
              help="Refine externally produced intermediates instead of sampling the target model.")
@click.option("--format", "fmt", type=click.Choice(["tsv", "jsonl"]), default="tsv",
              help="Format of the --precomputed file.")
@click.option("--direction", "direction_label", default=None,
              help="Direction (e.g. de-en) for --precomputed input.")
@pass_state
def cmd_refine(state: CliState, precomputed, fmt, direction_label):
    """Run the refinement loop over every test corpus (or a precomputed
    intermediates file) and write record files."""
    try:
        cfg = state.load()
        ladder = cfg.endpoint("ladder")
        out_dir = _claim_dir(cfg.out_dir / "records", state.force)
    except (ConfigError, FileNotFoundError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    failed = 0
    written = {}
    if precomputed:
        if not direction_label:
            raise _fail("--precomputed needs --direction (e.g. de-en)", EXIT_CONFIG)
        try:
            direction = Direction.parse(direction_label)
            items = read_intermediates(precomputed, fmt)
            records = precomputed_refine(items, ladder, cfg.templates, direction, cfg.policy("ladder"))
        except ValueError as exc:
            raise _fail(str(exc), EXIT_CONFIG)
        write_records(records, out_dir / f"{direction.label}.jsonl")
        failed += sum(1 for r in records if not r.ok)
        written[direction.label] = len(records)
    else:
        try:
            target = cfg.endpoint("target")
            corpora = cfg.corpora_for_split("test")
            if not corpora:
                raise ConfigError("no test corpora configured")
        except ConfigError as exc:
            raise _fail(str(exc), EXIT_CONFIG)
        for spec in corpora:
            try:
                split = _load_split(spec)
            except (FileNotFoundError, CorpusError) as exc:
                raise _fail(str(exc), EXIT_CONFIG)
            records = refine_corpus(split, target, ladder, cfg.templates, cfg.policy("ladder"))
            write_records(records, out_dir / f"{spec.direction.label}.jsonl")
            failed += sum(1 for r in records if not r.ok)
            written[spec.direction.label] = len(records)

    _manifest(cfg, out_dir, "refine", records=written, failures=failed)
    click.echo(f"refined {sum(written.values())} item(s) across {len(written)} direction(s)")
    if failed:
        raise _fail(f"{failed} item(s) failed during refinement", EXIT_PARTIAL)


@main.command("self-refine")
@click.option("--iterations", type=int, default=2, show_default=True,
              help="Number of self-refinement passes after the initial translation.")
@pass_state
def cmd_self_refine(state: CliState, iterations: int):
    """Translate with the refiner endpoint itself, then have it iteratively
    refine its own output."""
    try:
        cfg = state.load()
        model = cfg.endpoint("ladder")
        corpora = cfg.corpora_for_split("test")
        if not corpora:
            raise ConfigError("no test corpora configured")
        if iterations < 1:
            raise ConfigError("--iterations must be >= 1")
        out_dir = _claim_dir(cfg.out_dir / "self_refine", state.force)
    except ConfigError as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    failed = 0
    summary = {}
    for spec in corpora:
        try:
            split = _load_split(spec)
        except (FileNotFoundError, CorpusError) as exc:
            raise _fail(str(exc), EXIT_CONFIG)
        traces = self_refine(split, model, iterations, cfg.templates, cfg.policy("ladder"))
        with open(out_dir / f"{spec.direction.label}.jsonl", "w", encoding="utf-8") as handle:
            for trace in traces:
                handle.write(
                    json.dumps(
                        {
                            "id": trace.id,
                            "texts": list(trace.texts),
                            "scores": [s.value for s in trace.scores] if trace.scores else None,
                            "error": trace.error,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        complete = [t for t in traces if t.ok and t.scores]
        if complete:
            per_iteration = [
                sum(t.scores[i].value for t in complete) / len(complete)
                for i in range(iterations + 1)
            ]
            summary[spec.direction.label] = {"mean_chrf_per_iteration": per_iteration}
        failed += sum(1 for t in traces if not t.ok)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _manifest(cfg, out_dir, "self-refine", iterations=iterations, failures=failed)
    click.echo(f"self-refined {len(summary)} direction(s) over {iterations} iteration(s)")
    if failed:
        raise _fail(f"{failed} item(s) failed during self-refinement", EXIT_PARTIAL)


@main.command("eval")
@click.option("--hyp", type=click.Path(exists=True), default=None, help="Hypothesis text file (one segment per line).")
@click.option("--ref", type=click.Path(exists=True), default=None, help="Reference text file (one segment per line).")
@click.option("--tgt-lang", default="en", show_default=True, help="Target language for tokenization in --hyp/--ref mode.")
@pass_state
def cmd_eval(state: CliState, hyp, ref, tgt_lang):
    """Score refinement records (or a plain hypothesis/reference file pair)
    with corpus and per-segment metrics."""
    if (hyp is None) != (ref is None):
        raise _fail("--hyp and --ref must be given together", EXIT_CONFIG)
    if hyp is not None:
        hyp_lines = Path(hyp).read_text(encoding="utf-8").splitlines()
        ref_lines = Path(ref).read_text(encoding="utf-8").splitlines()
        try:
            tokenization = default_tokenization(tgt_lang)
            result = {
                "bleu": bleu_corpus(hyp_lines, ref_lines, tokenization).value,
                "chrf": chrf_corpus(hyp_lines, ref_lines).value,
                "n": len(hyp_lines),
            }
        except ValueError as exc:
            raise _fail(str(exc), EXIT_CONFIG)
        click.echo(json.dumps(result, indent=2))
        return

    try:
        cfg = state.load()
        in_dir = cfg.out_dir / "records"
        record_files = sorted(in_dir.glob("*.jsonl"))
        if not record_files:
            raise ConfigError(f"no record files under {in_dir}; run refine first")
        out_dir = _claim_dir(cfg.out_dir / "eval", state.force)
    except (ConfigError, FileNotFoundError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    corpus_metrics = {}
    skipped: dict[str, list[str]] = {}
    for record_file in record_files:
        records = read_records(record_file)
        direction = records[0].direction if records else None
        tokenization = default_tokenization(direction.tgt_lang) if direction else "intl"
        usable, gaps = [], []
        for record in records:
            if record.ok and record.intermediate and record.reference:
                usable.append(record)
            else:
                gaps.append(record.id)
        if gaps:
            skipped[record_file.stem] = gaps
        if not usable:
            continue
        scored = []
        for record in usable:
            scores = dict(record.scores)
            scores["intermediate"] = chrf_sentence(record.intermediate, record.reference)
            scores["refined"] = chrf_sentence(record.refined, record.reference)
            scores["intermediate_bleu"] = bleu_sentence(record.intermediate, record.reference, tokenization)
            scores["refined_bleu"] = bleu_sentence(record.refined, record.reference, tokenization)
            scored.append(replace(record, scores=scores))
        write_records(scored, out_dir / record_file.name)
        refs = [r.reference for r in usable]
        corpus_metrics[record_file.stem] = {
            "n": len(usable),
            "intermediate": {
                "bleu": bleu_corpus([r.intermediate for r in usable], refs, tokenization).value,
                "chrf": chrf_corpus([r.intermediate for r in usable], refs).value,
            },
            "refined": {
                "bleu": bleu_corpus([r.refined for r in usable], refs, tokenization).value,
                "chrf": chrf_corpus([r.refined for r in usable], refs).value,
            },
        }
    (out_dir / "eval.json").write_text(
        json.dumps({"directions": corpus_metrics, "skipped": skipped}, indent=2) + "\n",
        encoding="utf-8",
    )
    _manifest(cfg, out_dir, "eval", directions=list(corpus_metrics), skipped=sum(map(len, skipped.values())))
    click.echo(f"evaluated {len(corpus_metrics)} direction(s) -> {out_dir / 'eval.json'}")


@main.command("report")
@click.option("--metric", type=click.Choice(["chrf", "bleu"]), default="chrf", show_default=True,
              help="Per-segment metric for delta statistics and the scatter export.")
@click.option("--tie-epsilon", type=float, default=0.0, show_default=True,
              help="Deltas within this magnitude count as unchanged.")
@pass_state
def cmd_report(state: CliState, metric: str, tie_epsilon: float):
    """Compute improvement statistics over evaluated records and export
    table and scatter data."""
    try:
        cfg = state.load()
        in_dir = cfg.out_dir / "eval"
        record_files = sorted(p for p in in_dir.glob("*.jsonl"))
        if not record_files:
            raise ConfigError(f"no evaluated records under {in_dir}; run eval first")
        out_dir = _claim_dir(cfg.out_dir / "report", state.force)
    except (ConfigError, FileNotFoundError) as exc:
        raise _fail(str(exc), EXIT_CONFIG)

    original_key = "intermediate" if metric == "chrf" else "intermediate_bleu"
    refined_key = "refined" if metric == "chrf" else "refined_bleu"
    all_records = []
    rows = []
    for record_file in record_files:
        records = [r for r in read_records(record_file) if original_key in r.scores and refined_key in r.scores]
        if not records:
            continue
        all_records.extend(records)
        originals = [r.scores[original_key].value for r in records]
        refineds = [r.scores[refined_key].value for r in records]
        rows.append(
            BreakdownRow(
                model=records[0].target_tag,
                direction=record_file.stem,
                metric=metric,
                original=sum(originals) / len(originals),
                refined=sum(refineds) / len(refineds),
            )
        )
    if not all_records:
        raise _fail("no scored records found; run eval first", EXIT_CONFIG)

    stats = improvement_stats(
        [r.scores[original_key].value for r in all_records],
        [r.scores[refined_key].value for r in all_records],
        tie_epsilon=tie_epsilon,
        metric=metric,
    )
    (out_dir / "delta_stats.json").write_text(
        json.dumps(stats.to_json(), indent=2) + "\n", encoding="utf-8"
    )
    export_scatter(all_records, out_dir / "scatter.csv", original_key, refined_key, tie_epsilon)
    (out_dir / "table.md").write_text(render_table(rows, "markdown"), encoding="utf-8")
    _manifest(cfg, out_dir, "report", metric=metric, n=stats.n, delta_mean=stats.delta_mean)
    click.echo(
        f"delta mean {stats.delta_mean:+.4f} ({metric}, n={stats.n}); "
        f"improved {stats.improved_frac:.0%} / degraded {stats.degraded_frac:.0%} / "
        f"unchanged {stats.unchanged_frac:.0%}"
    )


if __name__ == "__main__":
    main()
