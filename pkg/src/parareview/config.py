"""Run configuration: typed dataclasses loaded from YAML.

Unknown keys are rejected at load time so typos fail fast. String values
may reference environment variables as ``${VAR_NAME}``; a missing variable
is an error rather than a silent empty string.
"""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class ChatBackendConfig:
    kind: str = "mock"  # mock | http
    script_path: str = ""
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0


@dataclass
class EmbeddingBackendConfig:
    kind: str = "mock"  # mock | http
    dim: int = 64
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout: float = 60.0


@dataclass
class SearchBackendConfig:
    kind: str = "mock"  # mock | http | none
    fixtures_path: str = ""
    base_url: str = ""
    api_key_env: str = ""
    timeout: float = 30.0
    blocklist: list[str] = field(default_factory=lambda: [
        "openreview.net", "peerj.com", "f1000research.com"])
    max_fetch_bytes: int = 2_000_000


@dataclass
class RetrievalConfig:
    # sizes are our defaults; the method fixes only top-k = 5
    chunk_chars: int = 1000
    overlap_chars: int = 100
    k: int = 5
    max_web_hits: int = 5


@dataclass
class OrchestrationConfig:
    variant: str = "full"
    n_candidate_plans: int = 4
    planner_temperature: float = 0.7
    controller_retries: int = 3
    reviewer_retries: int = 2
    quote_fuzzy_threshold: float = 0.9


@dataclass
class BudgetConfig:
    max_calls: int = 60
    max_tokens: int = 200_000


@dataclass
class RerankerConfig:
    model_path: str = ""
    # native linear-model rate; an external encoder would use its own
    # fine-tuning rate (on the order of 5e-06) behind the HTTP scorer
    learning_rate: float = 1e-2
    batch_size: int = 8
    max_epochs: int = 10
    patience: int = 3
    holdout_fraction: float = 0.1
    external_scorer_url: str = ""


@dataclass
class RunConfig:
    chat: ChatBackendConfig = field(default_factory=ChatBackendConfig)
    embedding: EmbeddingBackendConfig = field(default_factory=EmbeddingBackendConfig)
    search: SearchBackendConfig = field(default_factory=SearchBackendConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    orchestration: OrchestrationConfig = field(default_factory=OrchestrationConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    reranker: RerankerConfig = field(default_factory=RerankerConfig)
    prompts_dir: str = ""
    trace_path: str = ""
    seed: int = 0


_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value, path: str):
    if isinstance(value, str):
        def repl(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"{path}: environment variable {name!r} is not set")
            return os.environ[name]

        return _ENV_REF.sub(repl, value)
    return value


def _build(cls, payload: dict, path: str = ""):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(payload.keys() - fields.keys())
    if unknown:
        raise ConfigError(f"{path or cls.__name__}: unknown keys {unknown}")
    kwargs = {}
    for name, value in payload.items():
        spec = fields[name]
        key_path = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(spec.type) or (
                isinstance(spec.type, str) and spec.type.endswith("Config")):
            target = spec.type if dataclasses.is_dataclass(spec.type) else _CONFIG_TYPES[spec.type]
            kwargs[name] = _build(target, value, key_path)
        elif isinstance(value, list):
            kwargs[name] = [_interpolate(v, key_path) for v in value]
        else:
            kwargs[name] = _interpolate(value, key_path)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


_CONFIG_TYPES = {cls.__name__: cls for cls in (
    ChatBackendConfig, EmbeddingBackendConfig, SearchBackendConfig, RetrievalConfig,
    OrchestrationConfig, BudgetConfig, RerankerConfig)}


def config_from_dict(payload: dict) -> RunConfig:
    return _build(RunConfig, payload or {})


def load_config(path: str | Path) -> RunConfig:
    try:
        payload = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}")
    if payload is None:
        payload = {}
    return config_from_dict(payload)
