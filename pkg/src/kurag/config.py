"""Application configuration: one JSON file covering store, pipeline,
backends, and service settings. Unknown keys are rejected everywhere so
typos fail at load time instead of silently using defaults. Secrets never
live in the file; api_key_env names an environment variable instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .backends.base import BackendConfig
from .errors import ConfigError
from .pipeline import PipelineConfig
from .store import StoreConfig


@dataclass
class AppConfig:
    store_dir: str = "store"
    store: StoreConfig = field(default_factory=StoreConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    encoder: BackendConfig = field(default_factory=BackendConfig)
    detector: BackendConfig = field(default_factory=BackendConfig)
    mllm: BackendConfig = field(default_factory=BackendConfig)
    host: str = "127.0.0.1"
    port: int = 8000
    eval_workers: int = 1
    min_accuracy: float | None = None
    passage_mode: str = "structured"

    def __post_init__(self):
        if self.passage_mode not in ("structured", "raster"):
            raise ConfigError("passage_mode must be 'structured' or 'raster'")
        if self.eval_workers < 1:
            raise ConfigError("eval_workers must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "AppConfig":
        known = {"store_dir", "store", "pipeline", "backends", "service", "eval", "passage_mode"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "store_dir" in raw:
            kwargs["store_dir"] = str(raw["store_dir"])
        if "passage_mode" in raw:
            kwargs["passage_mode"] = str(raw["passage_mode"])
        if "store" in raw:
            kwargs["store"] = StoreConfig.from_dict(raw["store"])
        if "pipeline" in raw:
            kwargs["pipeline"] = _pipeline_from_dict(raw["pipeline"])
        backends = raw.get("backends", {})
        unknown = set(backends) - {"encoder", "detector", "mllm"}
        if unknown:
            raise ConfigError(f"unknown backend slots: {sorted(unknown)}")
        for slot in ("encoder", "detector", "mllm"):
            if slot in backends:
                kwargs[slot] = BackendConfig.from_dict(backends[slot])
        service = raw.get("service", {})
        unknown = set(service) - {"host", "port"}
        if unknown:
            raise ConfigError(f"unknown service keys: {sorted(unknown)}")
        if "host" in service:
            kwargs["host"] = str(service["host"])
        if "port" in service:
            kwargs["port"] = int(service["port"])
        eval_cfg = raw.get("eval", {})
        unknown = set(eval_cfg) - {"workers", "min_accuracy"}
        if unknown:
            raise ConfigError(f"unknown eval keys: {sorted(unknown)}")
        if "workers" in eval_cfg:
            kwargs["eval_workers"] = int(eval_cfg["workers"])
        if eval_cfg.get("min_accuracy") is not None:
            kwargs["min_accuracy"] = float(eval_cfg["min_accuracy"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str) -> "AppConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)


def _pipeline_from_dict(raw: dict) -> PipelineConfig:
    known = {"gamma", "ku_topk", "chunk_topk", "use_raw_query_vector"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
    try:
        return PipelineConfig(**raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
