"""Shared wiring: fake converter/engine commands, the seeded corpus, and a
helper that generates a corpus paper to the ready state inside a tmp dir."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import pytest

from paperdeck.config import AppConfig
from paperdeck.ingest import ConverterConfig
from paperdeck.llm.gateway import Gateway, ScriptedProvider
from paperdeck.pipeline import SessionPaths, SessionRecord, run_generation, session_paths
from paperdeck.texgen.compiler import EngineConfig

from tests import corpus as corpus_mod

TESTS_DIR = Path(__file__).resolve().parent
TOOLS_DIR = TESTS_DIR / "tools"
DATA_DIR = TESTS_DIR / "data"

# -S -E keeps the subprocess interpreter free of site hooks and env leakage.
CONVERTER_COMMAND = (
    sys.executable, "-S", "-E", str(TOOLS_DIR / "fake_converter.py"),
    "{input}", "--output_dir", "{output_dir}",
)
ENGINE_COMMAND = (
    sys.executable, "-S", "-E", str(TOOLS_DIR / "fake_engine.py"), "{input}",
)


@pytest.fixture(scope="session")
def corpus():
    return corpus_mod.build_corpus()


@pytest.fixture
def converter_cfg(tmp_path):
    def make(asset_dir=None, timeout: float = 30.0) -> ConverterConfig:
        target = tmp_path / "assets" if asset_dir is None else Path(asset_dir)
        return ConverterConfig(
            command=CONVERTER_COMMAND, asset_dir=str(target), timeout=timeout
        )

    return make


@pytest.fixture
def engine_cfg() -> EngineConfig:
    return EngineConfig(command=ENGINE_COMMAND, timeout=30.0)


def make_app_config(sessions_root, **overrides) -> AppConfig:
    values = dict(
        sessions_root=str(sessions_root),
        converter_command=CONVERTER_COMMAND,
        converter_timeout=30.0,
        engine_command=ENGINE_COMMAND,
        engine_timeout=30.0,
    )
    values.update(overrides)
    return AppConfig(**values)


@pytest.fixture
def app_cfg(tmp_path):
    def make(**overrides) -> AppConfig:
        return make_app_config(tmp_path / "sessions", **overrides)

    return make


@dataclass
class SessionHandle:
    cfg: AppConfig
    provider: ScriptedProvider
    gateway: Gateway
    record: SessionRecord
    paths: SessionPaths
    pdf: str


def pipeline_provider(corpus, with_editor: bool = False) -> ScriptedProvider:
    provider = ScriptedProvider()
    corpus_mod.register_pipeline_responders(provider, corpus)
    if with_editor:
        corpus_mod.register_editor_responders(provider)
    return provider


def generate_ready_session(
    paper,
    corpus,
    root: Path,
    with_editor: bool = True,
    provider: ScriptedProvider | None = None,
    gateway: Gateway | None = None,
    cfg: AppConfig | None = None,
) -> SessionHandle:
    """Run the whole pipeline for one corpus paper under root/sessions."""
    if provider is None:
        provider = pipeline_provider(corpus, with_editor=with_editor)
    if gateway is None:
        gateway = corpus_mod.make_gateway(provider)
    if cfg is None:
        cfg = make_app_config(Path(root) / "sessions")
    pdf = corpus_mod.write_paper_files(paper, Path(root) / "input" / paper.paper_id)
    record = run_generation(pdf, paper.paper_id, cfg, gateway)
    return SessionHandle(
        cfg=cfg,
        provider=provider,
        gateway=gateway,
        record=record,
        paths=session_paths(cfg.sessions_root, paper.paper_id),
        pdf=pdf,
    )


@pytest.fixture
def ready_session(tmp_path, corpus):
    def make(paper_index: int = 0, **kwargs) -> SessionHandle:
        return generate_ready_session(corpus[paper_index], corpus, tmp_path, **kwargs)

    return make
