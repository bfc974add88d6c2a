"""Run configuration: YAML tree in, validated dataclasses out.

Every knob defaults to the standard settings (5 learned + 5 failed
in-context examples, 5 few-shot environments, 10 gate comparisons, 5
code repairs, 1 reflection round, temperature 0), so an empty config
file is a valid run. Validation errors always name the offending field.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .data import DEFAULT_ROBOT_DESC


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    temperature: float = 0.0


@dataclass(frozen=True)
class ModelTable:
    task_gen: ModelSpec = ModelSpec("claude-3-opus-20240229")
    env_gen: ModelSpec = ModelSpec("claude-3-opus-20240229")
    env_reflect: ModelSpec = ModelSpec("claude-3-opus-20240229")
    moi: ModelSpec = ModelSpec("gpt-4o-2024-05-13")
    task_reflect: ModelSpec = ModelSpec("gpt-4o-2024-05-13")


@dataclass(frozen=True)
class EmbeddingConfig:
    backend: str = "mock"  # mock | remote
    dim: int = 256
    model_name: str = "text-embedding-3-small"
    mock_seed: int = 0
    base_url: str = ""
    api_key_env: str = "OPENLOOP_EMBED_API_KEY"
    max_attempts: int = 3
    timeout_s: float = 30.0
    max_in_flight: int = 4
    cache: bool = True


@dataclass(frozen=True)
class FmConfig:
    backend: str = "scripted"  # scripted | remote
    script_dir: Optional[str] = None
    base_url: str = ""
    api_key_env: str = "OPENLOOP_FM_API_KEY"
    max_attempts: int = 3
    timeout_s: float = 120.0


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "always_success"  # always_success | skill_model | process
    p_warm: float = 0.8
    p_cold: float = 0.3
    budget_steps: int = 1000
    warm_start: bool = True
    command: tuple[str, ...] = ()
    timeout_s: float = 600.0


@dataclass(frozen=True)
class SandboxConfig:
    kind: str = "acceptall"  # acceptall | syntax | process
    command: tuple[str, ...] = ()
    lang_tag: str = "python"
    timeout_s: float = 30.0
    smoke_steps: int = 10


@dataclass(frozen=True)
class AblationFlags:
    no_archive: bool = False
    learning_progress_only: bool = False
    no_interestingness: bool = False


@dataclass(frozen=True)
class SeedSpec:
    description_file: str
    env_code_file: str
    name: str = ""


@dataclass(frozen=True)
class RunConfig:
    robot_desc: str = DEFAULT_ROBOT_DESC
    seeds: tuple[SeedSpec, ...] = ()  # empty means the shipped seed set
    num_learned_examples: int = 5
    num_failed_examples: int = 5
    envgen_fewshot: int = 5
    moi_similar: int = 10
    codegen_max_repairs: int = 5
    reflection_max: int = 1
    rng_seed: int = 0
    models: ModelTable = field(default_factory=ModelTable)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    fm: FmConfig = field(default_factory=FmConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    ablation: AblationFlags = field(default_factory=AblationFlags)

    def to_dict(self) -> dict:
        # json round-trip turns tuples into lists so the tree is YAML-safe
        import json

        tree = json.loads(json.dumps(asdict(self)))
        if not tree.get("seeds"):
            tree.pop("seeds", None)  # empty means the shipped seed set
        return tree


_COUNT_FIELDS = (
    "num_learned_examples",
    "num_failed_examples",
    "envgen_fewshot",
    "moi_similar",
    "codegen_max_repairs",
    "reflection_max",
)


def _build(cls, data: Any, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    kwargs = {}
    fields = {f.name: f for f in cls.__dataclass_fields__.values()}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"{path}{key}: unknown field")
        kwargs[key] = value
    return cls, kwargs


def from_dict(data: Optional[dict]) -> RunConfig:
    data = dict(data or {})

    def sub(cls, key):
        raw = data.pop(key, None)
        _, kwargs = _build(cls, raw, f"{key}.")
        if cls is ModelTable:
            for name, spec in kwargs.items():
                if not isinstance(spec, dict):
                    raise ConfigError(f"models.{name}: expected a mapping")
                kwargs[name] = ModelSpec(**_build(ModelSpec, spec, f"models.{name}.")[1])
        if "command" in kwargs and isinstance(kwargs["command"], list):
            kwargs["command"] = tuple(kwargs["command"])
        return cls(**kwargs)

    models = sub(ModelTable, "models")
    embedding = sub(EmbeddingConfig, "embedding")
    fm = sub(FmConfig, "fm")
    learner = sub(LearnerConfig, "learner")
    sandbox = sub(SandboxConfig, "sandbox")
    ablation = sub(AblationFlags, "ablation")

    seeds_raw = data.pop("seeds", None)
    seeds: tuple[SeedSpec, ...] = ()
    if seeds_raw is not None:
        if not isinstance(seeds_raw, list):
            raise ConfigError("seeds: expected a list")
        if not seeds_raw:
            raise ConfigError("seeds: at least one seed is required")
        built = []
        for i, item in enumerate(seeds_raw):
            _, kwargs = _build(SeedSpec, item, f"seeds[{i}].")
            if "description_file" not in kwargs or "env_code_file" not in kwargs:
                raise ConfigError(f"seeds[{i}]: needs description_file and env_code_file")
            built.append(SeedSpec(**kwargs))
        seeds = tuple(built)

    _, top_kwargs = _build(RunConfig, data, "")
    config = RunConfig(
        seeds=seeds,
        models=models,
        embedding=embedding,
        fm=fm,
        learner=learner,
        sandbox=sandbox,
        ablation=ablation,
        **top_kwargs,
    )
    validate(config)
    return config


def validate(config: RunConfig) -> None:
    for name in _COUNT_FIELDS:
        value = getattr(config, name)
        if not isinstance(value, int) or value < 0:
            raise ConfigError(f"{name}: must be a non-negative integer")
    if config.embedding.dim < 1:
        raise ConfigError("embedding.dim: must be >= 1")
    if config.embedding.backend not in ("mock", "remote"):
        raise ConfigError("embedding.backend: must be 'mock' or 'remote'")
    if config.embedding.backend == "remote" and not config.embedding.base_url:
        raise ConfigError("embedding.base_url: required for the remote backend")
    if config.fm.backend not in ("scripted", "remote"):
        raise ConfigError("fm.backend: must be 'scripted' or 'remote'")
    if config.fm.backend == "scripted" and config.fm.script_dir is None:
        # Engines built programmatically may inject a backend instead.
        pass
    if config.fm.backend == "remote" and not config.fm.base_url:
        raise ConfigError("fm.base_url: required for the remote backend")
    if config.learner.kind not in ("always_success", "skill_model", "process"):
        raise ConfigError("learner.kind: must be always_success, skill_model, or process")
    if config.learner.kind == "process" and not config.learner.command:
        raise ConfigError("learner.command: required for the process learner")
    if config.learner.budget_steps <= 0:
        raise ConfigError("learner.budget_steps: must be > 0")
    for name in ("p_warm", "p_cold"):
        p = getattr(config.learner, name)
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"learner.{name}: must be in [0, 1]")
    if config.sandbox.kind not in ("acceptall", "syntax", "process"):
        raise ConfigError("sandbox.kind: must be acceptall, syntax, or process")
    if config.sandbox.kind == "process" and not config.sandbox.command:
        raise ConfigError("sandbox.command: required for the process sandbox")
    if config.sandbox.smoke_steps < 0:
        raise ConfigError("sandbox.smoke_steps: must be >= 0")
    for name in ("task_gen", "env_gen", "env_reflect", "moi", "task_reflect"):
        spec = getattr(config.models, name)
        if spec.temperature < 0:
            raise ConfigError(f"models.{name}.temperature: must be >= 0")
    if not config.robot_desc.strip():
        raise ConfigError("robot_desc: must be non-empty")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data)


def save_snapshot(config: RunConfig, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)


def load_snapshot(path: str | Path) -> RunConfig:
    return load_config(path)


def with_learner(config: RunConfig, **kwargs) -> RunConfig:
    return replace(config, learner=replace(config.learner, **kwargs))
