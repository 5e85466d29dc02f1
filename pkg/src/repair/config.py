"""Experiment configuration: one YAML/JSON file plus dotted ``--set`` overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from repair.corpus import DEFAULT_B, DEFAULT_DIM, DEFAULT_K1
from repair.pipeline import ConfigError, PipelineConfig


@dataclass
class Paths:
    corpus: str | None = None
    queries: str | None = None
    qrels: str | None = None
    script: str | None = None
    output_dir: str = "out"
    cache_dir: str = "cache"


@dataclass
class Bm25Settings:
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B


@dataclass
class EmbedderSettings:
    kind: str = "mock"
    dim: int = DEFAULT_DIM
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 30.0
    retries: int = 2
    batch_size: int = 64


@dataclass
class RerankerSettings:
    kind: str = "scripted"
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 120.0
    retries: int = 2
    max_tokens: int = 2048
    max_doc_chars: int | None = None


@dataclass
class ExperimentConfig:
    paths: Paths = field(default_factory=Paths)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    bm25: Bm25Settings = field(default_factory=Bm25Settings)
    embedder: EmbedderSettings = field(default_factory=EmbedderSettings)
    reranker: RerankerSettings = field(default_factory=RerankerSettings)
    seed: int = 0
    workers: int = 1
    run_tag: str = "repair"
    base_dir: str = "."

    def path(self, name: str) -> Path | None:
        value = getattr(self.paths, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def output_dir(self) -> Path:
        return self.path("output_dir")

    @property
    def cache_dir(self) -> Path:
        return self.path("cache_dir")

    def validate(self) -> ExperimentConfig:
        self.pipeline.validate()
        if self.embedder.kind not in ("mock", "remote"):
            raise ConfigError(f"embedder.kind must be 'mock' or 'remote', got {self.embedder.kind!r}")
        if self.reranker.kind not in ("scripted", "remote"):
            raise ConfigError(f"reranker.kind must be 'scripted' or 'remote', got {self.reranker.kind!r}")
        for section in (self.embedder, self.reranker):
            if section.kind == "remote" and not (section.endpoint and section.model):
                raise ConfigError("remote backends need both 'endpoint' and 'model'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known or key == "base_dir":
            raise ConfigError(f"{where}: unknown key {key!r}")
        sub = _SECTIONS.get((cls, key))
        kwargs[key] = _build(sub, value, f"{where}.{key}") if sub else value
    return cls(**kwargs)


_SECTIONS = {
    (ExperimentConfig, "paths"): Paths,
    (ExperimentConfig, "pipeline"): PipelineConfig,
    (ExperimentConfig, "bm25"): Bm25Settings,
    (ExperimentConfig, "embedder"): EmbedderSettings,
    (ExperimentConfig, "reranker"): RerankerSettings,
}


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a nested dict."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {part!r} is not a section")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path: str | Path | None, overrides: list[str] | tuple = ()) -> ExperimentConfig:
    data: dict[str, Any] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        data = loaded or {}
        base = path.resolve().parent
    for item in overrides:
        apply_override(data, item)
    cfg = _build(ExperimentConfig, data, "config")
    cfg.base_dir = str(base)
    return cfg.validate()
