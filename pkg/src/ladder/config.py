"""Declarative run configuration: one TOML file describes endpoints, corpora,
thresholds, schedule, prompts, and output layout for a whole pipeline run.
Flags can override the output directory and seeds at the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .client import EndpointConfig
from .corpus import CORPUS_FORMATS, Direction
from .hierarchy import DEFAULT_THRESHOLDS, STRATEGIES, THRESHOLD_PRESETS, ThresholdConfig
from .prompting import (
    DEFAULT_POLICY,
    ExtractionPolicy,
    TemplatePair,
    default_template,
    load_template,
)

ENDPOINT_ROLES = ("sampler", "target", "ladder")

SCORER_KINDS = ("chrf", "neural")


class ConfigError(ValueError):
    """Configuration problem; maps to CLI exit code 1."""


@dataclass(frozen=True)
class CorpusSpec:
    direction: Direction
    path: Path
    format: str
    split: str


@dataclass(frozen=True)
class RunConfig:
    out_dir: Path
    seed: int
    endpoints: dict[str, EndpointConfig]
    policies: dict[str, ExtractionPolicy]
    scorer_kind: str
    scorer_endpoint: str | None
    scorer_cache: Path | None
    templates: TemplatePair
    thresholds: ThresholdConfig
    strategy: str
    schedule_seed: int | None
    corpora: tuple[CorpusSpec, ...]
    adapter_cmd: tuple[str, ...]
    train_options: dict = field(default_factory=dict)

    def endpoint(self, role: str) -> EndpointConfig:
        if role not in self.endpoints:
            raise ConfigError(f"no [endpoints.{role}] section configured")
        return self.endpoints[role]

    def policy(self, role: str) -> ExtractionPolicy:
        return self.policies.get(role, DEFAULT_POLICY)

    def corpora_for_split(self, split: str) -> tuple[CorpusSpec, ...]:
        return tuple(spec for spec in self.corpora if spec.split == split)


def _parse_endpoint(role: str, table: dict) -> tuple[EndpointConfig, ExtractionPolicy | None]:
    known = {
        "base_url",
        "model_name",
        "api_key",
        "max_in_flight",
        "timeout",
        "retries",
        "temperature",
        "max_tokens",
        "backoff_base",
        "backoff_cap",
    }
    for key in ("base_url", "model_name"):
        if key not in table:
            raise ConfigError(f"[endpoints.{role}] is missing {key!r}")
    policy = None
    if "label_pattern" in table or "strip_quotes" in table:
        policy = ExtractionPolicy(
            label_pattern=table.get("label_pattern", DEFAULT_POLICY.label_pattern),
            strip_quotes=table.get("strip_quotes", True),
        )
    kwargs = {key: value for key, value in table.items() if key in known}
    unknown = set(table) - known - {"label_pattern", "strip_quotes"}
    if unknown:
        raise ConfigError(f"[endpoints.{role}] has unknown keys: {', '.join(sorted(unknown))}")
    try:
        return EndpointConfig(**kwargs), policy
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[endpoints.{role}]: {exc}") from exc


def _parse_thresholds(table: dict) -> ThresholdConfig:
    if "preset" in table:
        preset = table["preset"]
        if preset not in THRESHOLD_PRESETS:
            raise ConfigError(
                f"unknown threshold preset {preset!r}; expected one of {tuple(THRESHOLD_PRESETS)}"
            )
        return THRESHOLD_PRESETS[preset]
    if "mu" in table or "nu" in table:
        if not ("mu" in table and "nu" in table):
            raise ConfigError("[thresholds] needs both mu and nu (or a preset)")
        try:
            return ThresholdConfig(float(table["mu"]), float(table["nu"]))
        except ValueError as exc:
            raise ConfigError(f"[thresholds]: {exc}") from exc
    return DEFAULT_THRESHOLDS


def load_run_config(
    path: str | Path,
    out_override: str | None = None,
    seed_override: int | None = None,
) -> RunConfig:
    """Parse and validate a TOML run config. Referenced files (corpora,
    template files) must exist; thresholds must satisfy mu < nu."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as handle:
            data = tomli.load(handle)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    run = data.get("run", {})
    out_dir = Path(out_override) if out_override else resolve(run.get("out_dir", "runs/out"))
    seed = int(seed_override if seed_override is not None else run.get("seed", 0))

    endpoints: dict[str, EndpointConfig] = {}
    policies: dict[str, ExtractionPolicy] = {}
    for role, table in data.get("endpoints", {}).items():
        if role not in ENDPOINT_ROLES:
            raise ConfigError(
                f"unknown endpoint role {role!r}; expected one of {ENDPOINT_ROLES}"
            )
        endpoints[role], policy = _parse_endpoint(role, table)
        if policy is not None:
            policies[role] = policy

    scorer = data.get("scorer", {})
    scorer_kind = scorer.get("kind", "chrf")
    if scorer_kind not in SCORER_KINDS:
        raise ConfigError(f"unknown scorer kind {scorer_kind!r}; expected one of {SCORER_KINDS}")
    scorer_endpoint = scorer.get("endpoint")
    if scorer_kind == "neural" and not scorer_endpoint:
        raise ConfigError("[scorer] kind = 'neural' needs an endpoint URL")
    scorer_cache = resolve(scorer["cache"]) if "cache" in scorer else None

    prompt = data.get("prompt", {})
    try:
        direct = (
            load_template(resolve(prompt["direct"]), "direct")
            if "direct" in prompt
            else default_template("direct")
        )
        refine = (
            load_template(resolve(prompt["refine"]), "refine")
            if "refine" in prompt
            else default_template("refine")
        )
        templates = TemplatePair(direct, refine)
    except FileNotFoundError as exc:
        raise ConfigError(f"prompt template not found: {exc.filename}") from exc
    except ValueError as exc:
        raise ConfigError(f"[prompt]: {exc}") from exc

    thresholds = _parse_thresholds(data.get("thresholds", {}))

    schedule = data.get("schedule", {})
    strategy = schedule.get("strategy", "hft")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    schedule_seed = schedule.get("seed")
    if schedule_seed is not None:
        schedule_seed = int(schedule_seed)

    corpora = []
    for index, table in enumerate(data.get("corpora", [])):
        for key in ("direction", "path"):
            if key not in table:
                raise ConfigError(f"[[corpora]] entry {index}: missing {key!r}")
        try:
            direction = Direction.parse(table["direction"])
        except ValueError as exc:
            raise ConfigError(f"[[corpora]] entry {index}: {exc}") from exc
        fmt = table.get("format", "tsv")
        if fmt not in CORPUS_FORMATS:
            raise ConfigError(
                f"[[corpora]] entry {index}: unknown format {fmt!r}; expected one of {CORPUS_FORMATS}"
            )
        corpus_path = resolve(table["path"])
        if fmt == "paired-text":
            missing = [
                p
                for p in (
                    corpus_path.with_name(f"{corpus_path.name}.{direction.src_lang}"),
                    corpus_path.with_name(f"{corpus_path.name}.{direction.tgt_lang}"),
                )
                if not p.is_file()
            ]
            if missing:
                raise ConfigError(f"[[corpora]] entry {index}: file not found: {missing[0]}")
        elif not corpus_path.is_file():
            raise ConfigError(f"[[corpora]] entry {index}: file not found: {corpus_path}")
        split = table.get("split", "train")
        corpora.append(CorpusSpec(direction, corpus_path, fmt, split))

    train = data.get("train", {})
    adapter_cmd = train.get("adapter_cmd", "ladder-train")
    if isinstance(adapter_cmd, str):
        adapter_cmd = (adapter_cmd,)
    else:
        adapter_cmd = tuple(str(part) for part in adapter_cmd)
    train_options = dict(train.get("options", {}))

    return RunConfig(
        out_dir=out_dir,
        seed=seed,
        endpoints=endpoints,
        policies=policies,
        scorer_kind=scorer_kind,
        scorer_endpoint=scorer_endpoint,
        scorer_cache=scorer_cache,
        templates=templates,
        thresholds=thresholds,
        strategy=strategy,
        schedule_seed=schedule_seed,
        corpora=tuple(corpora),
        adapter_cmd=adapter_cmd,
        train_options=train_options,
    )


def config_snapshot(cfg: RunConfig) -> dict:
    """A JSON-safe view of the config for run manifests; api keys excluded."""
    return {
        "out_dir": str(cfg.out_dir),
        "seed": cfg.seed,
        "endpoints": {
            role: {
                "base_url": ep.base_url,
                "model_name": ep.model_name,
                "max_in_flight": ep.max_in_flight,
                "timeout": ep.timeout,
                "retries": ep.retries,
                "temperature": ep.temperature,
                "max_tokens": ep.max_tokens,
            }
            for role, ep in cfg.endpoints.items()
        },
        "scorer": {
            "kind": cfg.scorer_kind,
            "endpoint": cfg.scorer_endpoint,
            "cache": str(cfg.scorer_cache) if cfg.scorer_cache else None,
        },
        "thresholds": {"mu": cfg.thresholds.mu, "nu": cfg.thresholds.nu},
        "schedule": {"strategy": cfg.strategy, "seed": cfg.schedule_seed},
        "corpora": [
            {
                "direction": spec.direction.label,
                "path": str(spec.path),
                "format": spec.format,
                "split": spec.split,
            }
            for spec in cfg.corpora
        ],
    }
