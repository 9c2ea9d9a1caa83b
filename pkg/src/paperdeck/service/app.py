"""The session HTTP service.

Generation is asynchronous: POST /sessions answers 202 immediately and the
pipeline runs as a background task while clients poll the state endpoint.
Edits are synchronous but serialized per session, so concurrent posts to
one session queue up rather than interleave. All state lives in the
session directory; any client can resume from a session_id alone.
"""

from __future__ import annotations

import json
import logging
import shutil
import threading
from dataclasses import replace
from pathlib import Path
from typing import Optional

from fastapi import BackgroundTasks, FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse

from ..config import AppConfig, build_gateway
from ..errors import SchemaError
from ..llm.gateway import Gateway
from ..pipeline import (
    STATE_EDITING,
    STATE_FAILED,
    STATE_INGESTING,
    STATE_READY,
    SessionPaths,
    load_record,
    new_session_id,
    read_history,
    run_edit,
    run_generation,
    save_record,
    session_paths,
)
from ..refsearch import HTTPClient
from ..texgen.generator import ThemeSpec
from .schemas import (
    EditRequestBody,
    EditResponseBody,
    HistoryActionModel,
    HistoryEntryModel,
    HistoryResponse,
    SessionCreated,
    SessionState,
    StepOutcomeModel,
)

logger = logging.getLogger(__name__)


def create_app(
    cfg: AppConfig,
    gateway: Optional[Gateway] = None,
    search_client: Optional[HTTPClient] = None,
) -> FastAPI:
    app = FastAPI(title="paperdeck", version="1.0")
    # The browser UI is typically served from another port. Sessions are
    # unauthenticated, so open origins without credentials is safe here.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.cfg = cfg
    app.state.gateway = gateway
    app.state.search_client = search_client
    app.state.locks = {}
    app.state.locks_guard = threading.Lock()

    def _gateway() -> Gateway:
        if app.state.gateway is None:
            app.state.gateway = build_gateway(cfg)
        return app.state.gateway

    def _lock_for(session_id: str) -> threading.Lock:
        with app.state.locks_guard:
            return app.state.locks.setdefault(session_id, threading.Lock())

    def _paths(session_id: str) -> SessionPaths:
        paths = session_paths(cfg.sessions_root, session_id)
        if not paths.session.is_file():
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return paths

    def _record(session_id: str):
        return load_record(_paths(session_id))

    def _generate_task(pdf: Path, session_id: str, theme_name: str) -> None:
        session_cfg = replace(cfg, theme_name=theme_name)
        try:
            run_generation(pdf, session_id, session_cfg, _gateway())
        except Exception:
            # run_generation already flipped the record to failed and kept
            # the error; the task must swallow so the server stays up.
            logger.exception("generation failed for session %s", session_id)

    @app.post("/sessions", status_code=202, response_model=SessionCreated)
    def create_session(
        background: BackgroundTasks,
        file: UploadFile = File(...),
        theme: str = Form(""),
    ) -> SessionCreated:
        theme_name = theme or cfg.theme_name
        try:
            ThemeSpec(name=theme_name)
        except SchemaError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session_id = new_session_id(cfg.sessions_root)
        paths = session_paths(cfg.sessions_root, session_id)
        paths.root.mkdir(parents=True, exist_ok=True)
        pdf = paths.root / "paper.pdf"
        with open(pdf, "wb") as handle:
            shutil.copyfileobj(file.file, handle)
        # Visible immediately so polling works before the task starts.
        from ..pipeline import SessionRecord

        save_record(
            paths,
            SessionRecord(
                session_id=session_id, state=STATE_INGESTING, theme_name=theme_name
            ),
        )
        background.add_task(_generate_task, pdf, session_id, theme_name)
        return SessionCreated(session_id=session_id, state=STATE_INGESTING)

    @app.get("/sessions/{session_id}", response_model=SessionState)
    def session_state(session_id: str) -> SessionState:
        paths = _paths(session_id)
        record = load_record(paths)
        return SessionState(
            session_id=record.session_id,
            state=record.state,
            theme_name=record.theme_name,
            created=record.created,
            updated=record.updated,
            error=record.error,
            revision=record.revision,
            artifacts=paths.artifact_status(),
        )

    def _guard_ready(session_id: str, allow_editing: bool = True) -> SessionPaths:
        paths = _paths(session_id)
        record = load_record(paths)
        allowed = {STATE_READY, STATE_EDITING} if allow_editing else {STATE_READY}
        if record.state not in allowed:
            raise HTTPException(
                status_code=409,
                detail={"state": record.state, "error": record.error},
            )
        return paths

    @app.post("/sessions/{session_id}/edits", response_model=EditResponseBody)
    def post_edit(session_id: str, body: EditRequestBody) -> EditResponseBody:
        _guard_ready(session_id)
        lock = _lock_for(session_id)
        with lock:
            paths = _paths(session_id)
            record = load_record(paths)
            if record.state not in (STATE_READY, STATE_EDITING):
                raise HTTPException(
                    status_code=409,
                    detail={"state": record.state, "error": record.error},
                )
            record.state = STATE_EDITING
            save_record(paths, record)
            try:
                outcome = run_edit(
                    body.request,
                    paths,
                    cfg,
                    _gateway(),
                    search_client=app.state.search_client,
                )
            finally:
                record = load_record(paths)
                if record.state == STATE_EDITING:
                    record.state = STATE_READY
                    save_record(paths, record)
        record = load_record(paths)
        return EditResponseBody(
            ok=outcome.ok,
            steps=[
                StepOutcomeModel(
                    action=s.action, description=s.description, ok=s.ok, detail=s.detail
                )
                for s in outcome.steps
            ],
            failed_step=outcome.failed_step,
            error=outcome.error,
            rolled_back=outcome.rolled_back,
            revision=record.revision,
        )

    @app.get("/sessions/{session_id}/deck.pdf")
    def get_deck_pdf(session_id: str) -> FileResponse:
        paths = _guard_ready(session_id)
        if not paths.deck_pdf.is_file():
            raise HTTPException(status_code=404, detail="deck.pdf missing")
        return FileResponse(paths.deck_pdf, media_type="application/pdf")

    @app.get("/sessions/{session_id}/slides.json")
    def get_slides(session_id: str) -> JSONResponse:
        paths = _guard_ready(session_id)
        if not paths.slides.is_file():
            raise HTTPException(status_code=404, detail="slides.json missing")
        return JSONResponse(content=json.loads(paths.slides.read_text("utf-8")))

    @app.get("/sessions/{session_id}/history", response_model=HistoryResponse)
    def get_history(session_id: str) -> HistoryResponse:
        paths = _paths(session_id)
        entries = []
        for obj in read_history(paths):
            actions = [
                HistoryActionModel(
                    action=a.get("action", ""), description=a.get("description", "")
                )
                for a in obj.get("plan", {}).get("actions", [])
            ]
            entries.append(
                HistoryEntryModel(
                    request=obj.get("request", ""),
                    ok=bool(obj.get("ok")),
                    timestamp=float(obj.get("timestamp", 0.0)),
                    revision=int(obj.get("revision", 0)),
                    error=obj.get("error", ""),
                    actions=actions,
                )
            )
        return HistoryResponse(session_id=session_id, entries=entries)

    @app.get("/sessions/{session_id}/revisions/{revision}/deck.pdf")
    def get_revision_pdf(session_id: str, revision: int) -> FileResponse:
        paths = _paths(session_id)
        pdf = paths.revision_dir(revision) / "deck.pdf"
        if not pdf.is_file():
            raise HTTPException(status_code=404, detail=f"no revision {revision}")
        return FileResponse(pdf, media_type="application/pdf")

    @app.get("/sessions/{session_id}/revisions/{revision}/slides.json")
    def get_revision_slides(session_id: str, revision: int) -> JSONResponse:
        paths = _paths(session_id)
        slides = paths.revision_dir(revision) / "slides.json"
        if not slides.is_file():
            raise HTTPException(status_code=404, detail=f"no revision {revision}")
        return JSONResponse(content=json.loads(slides.read_text("utf-8")))

    return app
