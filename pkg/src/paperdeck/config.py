"""Application configuration.

A flat JSON file supplies values; PAPERDECK_<FIELD> environment variables
override them; dataclass defaults fill the rest. Command fields accept a
JSON list or a shell-style string.
"""

from __future__ import annotations

import json
import os
import shlex
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import SchemaError
from .ingest import ConverterConfig
from .llm.gateway import CassetteProvider, Gateway, HTTPProvider, Provider
from .planner import PlannerConfig
from .refsearch import (
    DEFAULT_ARXIV_BASE,
    DEFAULT_S2_BASE,
    FetchConfig,
    HTTPClient,
    HttpxClient,
    ReplayHTTPClient,
)
from .texgen.compiler import EngineConfig

ENV_PREFIX = "PAPERDECK_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class AppConfig:
    sessions_root: str = "sessions"
    provider: str = "http"  # http | cassette
    model_id: str = "gpt-4o"
    api_base: str = "https://api.openai.com/v1"
    api_key_env: str = "PAPERDECK_API_KEY"
    cassette_path: str = ""
    record_cassette: bool = False
    max_llm_calls: int = 0  # 0 means unlimited
    pipeline_temperature: float = 0.2
    judge_temperature: float = 0.0
    converter_command: tuple[str, ...] = (
        "marker_single", "{input}", "--output_dir", "{output_dir}",
    )
    converter_timeout: float = 600.0
    engine_command: tuple[str, ...] = (
        "pdflatex", "-interaction=nonstopmode", "-halt-on-error", "{input}",
    )
    engine_timeout: float = 120.0
    max_repair_attempts: int = 3
    theme_name: str = "Madrid"
    min_slides: int = 4
    max_slides: int = 30
    refsearch_cache_dir: str = "refcache"
    arxiv_base: str = DEFAULT_ARXIV_BASE
    s2_base: str = DEFAULT_S2_BASE
    http_cassette_path: str = ""
    offline: bool = False


def _coerce(name: str, raw: Any, target: Any) -> Any:
    if isinstance(target, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise SchemaError(f"config.{name}: {raw!r} is not a boolean")
    if isinstance(target, int):
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise SchemaError(f"config.{name}: {raw!r} is not an integer")
    if isinstance(target, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise SchemaError(f"config.{name}: {raw!r} is not a number")
    if isinstance(target, tuple):
        if isinstance(raw, (list, tuple)):
            return tuple(str(item) for item in raw)
        text = str(raw).strip()
        if text.startswith("["):
            parsed = json.loads(text)
            if not isinstance(parsed, list):
                raise SchemaError(f"config.{name}: expected a list")
            return tuple(str(item) for item in parsed)
        return tuple(shlex.split(text))
    return str(raw)


def load_config(
    path: Optional[str | Path] = None, env: Optional[Mapping[str, str]] = None
) -> AppConfig:
    if env is None:
        env = os.environ
    cfg = AppConfig()
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    updates: dict[str, Any] = {}
    if path is not None:
        payload = json.loads(Path(path).read_text("utf-8"))
        if not isinstance(payload, dict):
            raise SchemaError("config file must hold a JSON object")
        for key, value in payload.items():
            if key not in known:
                raise SchemaError(f"config: unknown key '{key}'")
            updates[key] = _coerce(key, value, known[key])
    for name, default in known.items():
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            updates[name] = _coerce(name, env[env_key], default)
    return replace(cfg, **updates)


def build_provider(cfg: AppConfig) -> Provider:
    if cfg.offline or cfg.provider == "cassette":
        if not cfg.cassette_path:
            raise SchemaError("offline/cassette mode needs cassette_path")
        if cfg.record_cassette and not cfg.offline:
            inner = HTTPProvider(cfg.api_base, cfg.model_id, cfg.api_key_env)
            return CassetteProvider(cfg.cassette_path, mode="record", inner=inner)
        return CassetteProvider(cfg.cassette_path, mode="replay")
    if cfg.provider == "http":
        return HTTPProvider(cfg.api_base, cfg.model_id, cfg.api_key_env)
    raise SchemaError(f"unknown provider kind '{cfg.provider}'")


def build_search_client(cfg: AppConfig) -> Optional[HTTPClient]:
    """Client for reference-search edits, mirroring the LLM provider modes.

    Offline without an HTTP cassette returns None: search edits then fail
    with a clear message instead of reaching the network.
    """
    if cfg.http_cassette_path:
        if cfg.record_cassette and not cfg.offline:
            return ReplayHTTPClient(
                cfg.http_cassette_path, mode="record", inner=HttpxClient()
            )
        return ReplayHTTPClient(cfg.http_cassette_path, mode="replay")
    if cfg.offline:
        return None
    return HttpxClient()


def build_gateway(cfg: AppConfig, provider: Optional[Provider] = None) -> Gateway:
    return Gateway(
        provider if provider is not None else build_provider(cfg),
        model_id=cfg.model_id,
        max_calls=cfg.max_llm_calls or None,
        pipeline_temperature=cfg.pipeline_temperature,
        judge_temperature=cfg.judge_temperature,
    )


def converter_config(cfg: AppConfig, asset_dir: str | Path) -> ConverterConfig:
    return ConverterConfig(
        command=cfg.converter_command,
        asset_dir=str(asset_dir),
        timeout=cfg.converter_timeout,
    )


def engine_config(cfg: AppConfig) -> EngineConfig:
    return EngineConfig(command=cfg.engine_command, timeout=cfg.engine_timeout)


def planner_config(cfg: AppConfig) -> PlannerConfig:
    return PlannerConfig(
        min_slides=cfg.min_slides,
        max_slides=cfg.max_slides,
        theme_name=cfg.theme_name,
    )


def fetch_config(cfg: AppConfig, asset_dir: str | Path) -> FetchConfig:
    return FetchConfig(
        cache_dir=cfg.refsearch_cache_dir,
        converter=converter_config(cfg, asset_dir),
        arxiv_base=cfg.arxiv_base,
        s2_base=cfg.s2_base,
    )
