"""Pipeline configuration and job files (YAML or JSON, versioned).

Relative paths are resolved against the directory of the file that names
them.  Secrets never live in these files; HTTP clients read their bearer
token from the environment variable named under ``clients.api_key_env``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import SchemaError, ValidationError
from .orchestrator import JobGraph, TaskSpec, graph_from_dict

CONFIG_SCHEMA_VERSION = 1
JOB_SCHEMA_VERSION = 1
CLIENT_ROLES = ("model", "matcher", "detector")


class ConfigError(ValidationError):
    """Configuration or job file is missing, malformed or inconsistent."""


def load_structured_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _check_version(doc: dict, expected: int, what: str) -> None:
    version = doc.get("schema_version")
    if version != expected:
        raise SchemaError(f"{what}: unsupported schema_version {version!r} (expected {expected})")


@dataclass
class PipelineConfig:
    base_dir: Path = field(default_factory=Path.cwd)
    output_dir: Path = Path("artifacts")
    topo_index: Optional[Path] = None
    topo_rasters: Optional[Path] = None
    template_catalog: Optional[Path] = None
    clients: dict = field(default_factory=dict)
    api_key_env: str = "MAPDIGIT_API_KEY"
    params: dict = field(default_factory=dict)
    workers: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("topo_index", "topo_rasters", "template_catalog"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{name} does not exist: {p}")
        for role, spec in self.clients.items():
            if role not in CLIENT_ROLES:
                raise ConfigError(f"unknown client role {role!r}")
            scheme = str(spec).partition(":")[0]
            if scheme not in ("stub", "http", "https"):
                raise ConfigError(f"client {role}: spec must start with stub:, http: or https:")
            if scheme == "stub" and not self.resolve(str(spec)[5:]).exists():
                raise ConfigError(f"client {role}: stub directory not found")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def client(self, role: str):
        from .clients import client_from_spec

        spec = self.clients.get(role)
        if spec is None:
            return None
        c = client_from_spec(str(spec), role, base_dir=self.base_dir)
        if hasattr(c, "api_key_env"):
            c.api_key_env = self.api_key_env
        return c


def config_from_dict(doc: dict, base_dir=None) -> PipelineConfig:
    _check_version(doc, CONFIG_SCHEMA_VERSION, "config")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    paths = doc.get("paths") or {}
    unknown = set(paths) - {"output_dir", "topo_index", "topo_rasters", "template_catalog"}
    if unknown:
        raise ConfigError(f"unknown paths entries: {sorted(unknown)}")

    def opt(name):
        v = paths.get(name)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base / p

    clients = dict(doc.get("clients") or {})
    api_key_env = clients.pop("api_key_env", "MAPDIGIT_API_KEY")
    try:
        workers, seed = int(doc.get("workers", 1)), int(doc.get("seed", 0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"workers and seed must be integers: {exc}") from exc
    params = doc.get("params") or {}
    if not isinstance(params, dict) or not all(isinstance(v, dict) for v in params.values()):
        raise ConfigError("params must map module names to parameter mappings")
    cfg = PipelineConfig(base, opt("output_dir") or base / "artifacts", opt("topo_index"),
                         opt("topo_rasters"), opt("template_catalog"), clients, api_key_env,
                         params, workers, seed)
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    return config_from_dict(load_structured_file(path), path.parent.resolve())


def load_job(path, config: Optional[PipelineConfig] = None) -> JobGraph:
    """Parse a job file.  Module parameter overrides from ``config`` are
    merged over each task's params so cache keys see the effective values."""
    doc = load_structured_file(path)
    _check_version(doc, JOB_SCHEMA_VERSION, "job")
    if not isinstance(doc.get("tasks"), list) or not doc["tasks"]:
        raise ConfigError(f"{path}: job needs a non-empty task list")
    try:
        graph = graph_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed task ({exc})") from exc
    if config is not None and config.params:
        graph = JobGraph([
            TaskSpec(t.id, t.module, {**t.params, **config.params.get(t.module, {})}, t.deps,
                     t.retry_limit, t.cache_key)
            for t in graph.tasks
        ], graph.name)
    return graph
