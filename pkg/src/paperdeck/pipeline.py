"""Session orchestration: stage sequencing, artifacts, and state records.

A session is a directory of plain files. Generation runs the stages in
order, writing each artifact as soon as its stage finishes, so a crashed or
failed session can be inspected file by file. Edits build in a scratch
subdirectory and only replace the live artifacts on success.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .config import (
    AppConfig,
    converter_config,
    engine_config,
    fetch_config,
    planner_config,
)
from .editor import EditOutcome, EditPlan, EditSession, append_history, apply_plan, plan_edit
from .errors import EditPlanningError, PipelineStageError, SchemaError
from .ingest import ingest_pdf
from .llm.gateway import Gateway
from .model import (
    STATUS_COMPILED,
    DeckSource,
    ParsedDocument,
    SlidePlan,
    parse_document,
    parse_plan,
    serialize_document,
    serialize_flat_deck,
    serialize_plan,
)
from .planner import build_plan
from .qa import serialize_report, verify_and_adjust
from .refsearch import HTTPClient
from .texgen.compiler import compile_and_repair
from .texgen.flatten import flatten_deck
from .texgen.generator import ThemeSpec, generate_latex

logger = logging.getLogger(__name__)

STATE_INGESTING = "ingesting"
STATE_PLANNING = "planning"
STATE_VERIFYING = "verifying"
STATE_GENERATING = "generating"
STATE_READY = "ready"
STATE_EDITING = "editing"
STATE_FAILED = "failed"
ALL_STATES = (
    STATE_INGESTING,
    STATE_PLANNING,
    STATE_VERIFYING,
    STATE_GENERATING,
    STATE_READY,
    STATE_EDITING,
    STATE_FAILED,
)

ARTIFACT_NAMES = (
    "enhanced.json",
    "plan.json",
    "report.json",
    "deck.tex",
    "deck.pdf",
    "slides.json",
)


@dataclass(frozen=True)
class SessionPaths:
    root: Path

    @property
    def enhanced(self) -> Path:
        return self.root / "enhanced.json"

    @property
    def plan(self) -> Path:
        return self.root / "plan.json"

    @property
    def report(self) -> Path:
        return self.root / "report.json"

    @property
    def deck_tex(self) -> Path:
        return self.root / "deck.tex"

    @property
    def deck_pdf(self) -> Path:
        return self.root / "deck.pdf"

    @property
    def deck_log(self) -> Path:
        return self.root / "deck.log"

    @property
    def slides(self) -> Path:
        return self.root / "slides.json"

    @property
    def session(self) -> Path:
        return self.root / "session.json"

    @property
    def history(self) -> Path:
        return self.root / "history.jsonl"

    @property
    def revisions(self) -> Path:
        return self.root / "revisions"

    @property
    def build(self) -> Path:
        return self.root / "build"

    def artifact_status(self) -> dict[str, bool]:
        return {name: (self.root / name).is_file() for name in ARTIFACT_NAMES}

    def revision_dir(self, revision: int) -> Path:
        return self.revisions / str(revision)


def session_paths(sessions_root: str | Path, session_id: str) -> SessionPaths:
    return SessionPaths(root=Path(sessions_root) / session_id)


def new_session_id(sessions_root: str | Path) -> str:
    """Unix-seconds id, bumped past any existing session directory."""
    root = Path(sessions_root)
    candidate = int(time.time())
    while (root / str(candidate)).exists():
        candidate += 1
    return str(candidate)


def _now() -> str:
    return _dt.datetime.now().isoformat(timespec="seconds")


@dataclass
class SessionRecord:
    session_id: str
    state: str
    theme_name: str
    created: str = field(default_factory=_now)
    updated: str = field(default_factory=_now)
    error: str = ""
    revision: int = 0

    def __post_init__(self) -> None:
        if self.state not in ALL_STATES:
            raise SchemaError(f"unknown session state {self.state!r}")

    def to_json_obj(self) -> dict:
        return {
            "session_id": self.session_id,
            "state": self.state,
            "theme_name": self.theme_name,
            "created": self.created,
            "updated": self.updated,
            "error": self.error,
            "revision": self.revision,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SessionRecord":
        keys = ("session_id", "state", "theme_name", "created", "updated", "error", "revision")
        if not isinstance(obj, dict) or set(obj) != set(keys):
            raise SchemaError("session record has wrong key set")
        return cls(**{k: obj[k] for k in keys})


def _replace_file(path: Path, data: str | bytes) -> None:
    """Write-then-rename so service readers never see a half-written file."""
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, "utf-8")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def save_record(paths: SessionPaths, record: SessionRecord) -> None:
    record.updated = _now()
    paths.root.mkdir(parents=True, exist_ok=True)
    _replace_file(
        paths.session,
        json.dumps(record.to_json_obj(), indent=2, ensure_ascii=False) + "\n",
    )


def load_record(paths: SessionPaths) -> SessionRecord:
    return SessionRecord.from_json_obj(json.loads(paths.session.read_text("utf-8")))


def _snapshot_revision(paths: SessionPaths, revision: int) -> None:
    target = paths.revision_dir(revision)
    target.mkdir(parents=True, exist_ok=True)
    for name in ("deck.tex", "deck.pdf", "slides.json"):
        source = paths.root / name
        if source.is_file():
            shutil.copy2(source, target / name)


def _record_initial_history(paths: SessionPaths, session_id: str) -> None:
    entry = {
        "request": "(initial generation)",
        "plan": {"actions": []},
        "ok": True,
        "timestamp": time.time(),
        "revision": 0,
        "error": "",
    }
    with open(paths.history, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(entry, ensure_ascii=False) + "\n")


def run_generation(
    pdf: str | Path,
    session_id: str,
    cfg: AppConfig,
    gateway: Gateway,
    sessions_root: Optional[str | Path] = None,
) -> SessionRecord:
    """Run ingest through compile-repair, writing all six artifacts.

    The theme is validated before any LLM call; each stage transition is
    persisted so a polling client sees progress; any stage error flips the
    record to failed and raises PipelineStageError naming the stage.
    """
    theme = ThemeSpec(name=cfg.theme_name)  # fail fast on unknown themes
    paths = session_paths(sessions_root or cfg.sessions_root, session_id)
    paths.root.mkdir(parents=True, exist_ok=True)
    record = SessionRecord(
        session_id=session_id, state=STATE_INGESTING, theme_name=theme.name
    )
    save_record(paths, record)

    def stage(state: str, fn: Callable[[], None]) -> None:
        record.state = state
        save_record(paths, record)
        try:
            fn()
        except Exception as exc:
            record.state = STATE_FAILED
            record.error = str(exc)
            save_record(paths, record)
            if isinstance(exc, PipelineStageError):
                raise
            log_path = paths.deck_log if paths.deck_log.is_file() else paths.session
            raise PipelineStageError(state, str(exc), log_path=str(log_path)) from exc

    doc_box: dict[str, ParsedDocument] = {}
    plan_box: dict[str, SlidePlan] = {}

    def do_ingest() -> None:
        converter = converter_config(cfg, asset_dir=paths.root / "images")
        doc = ingest_pdf(pdf, converter, gateway, session_id)
        paths.enhanced.write_text(serialize_document(doc), "utf-8")
        doc_box["doc"] = doc

    def do_plan() -> None:
        plan = build_plan(doc_box["doc"], gateway, planner_config(cfg))
        paths.plan.write_text(serialize_plan(plan), "utf-8")
        plan_box["plan"] = plan

    def do_verify() -> None:
        plan, report = verify_and_adjust(plan_box["plan"], doc_box["doc"], gateway)
        paths.report.write_text(serialize_report(report), "utf-8")
        paths.plan.write_text(serialize_plan(plan), "utf-8")
        plan_box["plan"] = plan

    def do_generate() -> None:
        deck = generate_latex(plan_box["plan"], doc_box["doc"], theme, gateway)
        deck = compile_and_repair(
            deck, gateway, engine_config(cfg), paths.root,
            max_attempts=cfg.max_repair_attempts,
        )
        # The tex on disk tracks the last compile attempt; rewrite it from
        # the authoritative deck in case the engine never ran.
        paths.deck_tex.write_text(deck.latex, "utf-8")
        if deck.status != STATUS_COMPILED:
            raise PipelineStageError(
                STATE_GENERATING,
                f"deck did not compile after {deck.attempts} repair attempts: "
                f"{deck.log_excerpt}".strip(),
                log_path=str(paths.deck_log),
            )
        paths.slides.write_text(serialize_flat_deck(flatten_deck(deck.latex)), "utf-8")

    stage(STATE_INGESTING, do_ingest)
    stage(STATE_PLANNING, do_plan)
    stage(STATE_VERIFYING, do_verify)
    stage(STATE_GENERATING, do_generate)

    _snapshot_revision(paths, 0)
    _record_initial_history(paths, session_id)
    record.state = STATE_READY
    save_record(paths, record)
    return record


def load_document(paths: SessionPaths) -> ParsedDocument:
    return parse_document(paths.enhanced.read_text("utf-8"))


def load_plan(paths: SessionPaths) -> SlidePlan:
    return parse_plan(paths.plan.read_text("utf-8"))


def load_edit_session(paths: SessionPaths) -> EditSession:
    record = load_record(paths)
    deck = DeckSource(
        latex=paths.deck_tex.read_text("utf-8"),
        theme_name=record.theme_name,
        status=STATUS_COMPILED,
        pdf_path=str(paths.deck_pdf) if paths.deck_pdf.is_file() else None,
    )
    return EditSession(
        session_id=record.session_id,
        deck=deck,
        doc=load_document(paths),
        plan=load_plan(paths),
        plan_stale=record.revision > 0,
        revision=record.revision,
    )


def run_edit(
    request: str,
    paths: SessionPaths,
    cfg: AppConfig,
    gateway: Gateway,
    search_client: Optional[HTTPClient] = None,
) -> EditOutcome:
    """Plan and apply one edit request against a ready session.

    The compile happens in the session's build directory; live artifacts
    change only when the whole plan succeeded, then a new revision snapshot
    is kept for history browsing.
    """
    record = load_record(paths)
    session = load_edit_session(paths)
    try:
        plan = plan_edit(request, session, gateway)
    except EditPlanningError as exc:
        session.record(request, EditPlan(actions=()), ok=False, error=str(exc))
        append_history(paths.history, session)
        return EditOutcome(
            ok=False, steps=(), deck=session.deck, error=str(exc), rolled_back=False
        )
    paths.build.mkdir(parents=True, exist_ok=True)
    fetch_cfg = fetch_config(cfg, paths.build) if search_client is not None else None
    outcome = apply_plan(
        plan,
        session,
        gateway,
        engine_config(cfg),
        paths.build,
        request=request,
        max_repair_attempts=cfg.max_repair_attempts,
        search_client=search_client,
        fetch_cfg=fetch_cfg,
    )
    append_history(paths.history, session)
    if outcome.ok and session.revision > record.revision:
        _replace_file(paths.deck_tex, session.deck.latex)
        if session.deck.pdf_path and Path(session.deck.pdf_path).is_file():
            _replace_file(paths.deck_pdf, Path(session.deck.pdf_path).read_bytes())
        build_log = paths.build / "deck.log"
        if build_log.is_file():
            shutil.copy2(build_log, paths.deck_log)
        _replace_file(
            paths.slides, serialize_flat_deck(flatten_deck(session.deck.latex))
        )
        record.revision = session.revision
        _snapshot_revision(paths, record.revision)
    save_record(paths, record)
    return outcome


def read_history(paths: SessionPaths) -> list[dict]:
    if not paths.history.is_file():
        return []
    entries = []
    for line in paths.history.read_text("utf-8").splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries
