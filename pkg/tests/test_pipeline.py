"""Session lifecycle: paths, records, staged generation, and edits on disk."""

import json
import threading
import time
from pathlib import Path

import pytest

from paperdeck.errors import PipelineStageError, SchemaError
from paperdeck.model import parse_document, parse_flat_deck, parse_plan
from paperdeck.pipeline import (
    ARTIFACT_NAMES,
    STATE_FAILED,
    STATE_READY,
    SessionRecord,
    load_record,
    new_session_id,
    read_history,
    run_edit,
    run_generation,
    save_record,
    session_paths,
)

from tests import corpus as corpus_mod
from tests.conftest import make_app_config, pipeline_provider


def _editing_session(ready_session, corpus, paper_index: int = 0):
    provider = pipeline_provider(corpus, with_editor=True)
    provider.add_responder(corpus_mod.edit_plan_responder)
    return ready_session(paper_index, provider=provider)


# ------------------------------------------------------------- plumbing


def test_session_paths_and_artifact_status(tmp_path):
    paths = session_paths(tmp_path, "77")
    assert paths.root == tmp_path / "77"
    assert paths.deck_tex.name == "deck.tex"
    assert paths.history.name == "history.jsonl"
    assert paths.revision_dir(3) == tmp_path / "77" / "revisions" / "3"
    status = paths.artifact_status()
    assert set(status) == set(ARTIFACT_NAMES)
    assert not any(status.values())


def test_new_session_id_skips_existing(tmp_path):
    now = int(time.time())
    taken = {str(now + offset) for offset in range(12)}
    for name in taken:
        (tmp_path / name).mkdir()
    sid = new_session_id(tmp_path)
    assert sid not in taken
    assert not (tmp_path / sid).exists()
    assert sid.isdigit()


def test_record_round_trip_and_validation(tmp_path):
    paths = session_paths(tmp_path, "9")
    record = SessionRecord(session_id="9", state=STATE_READY, theme_name="Madrid")
    save_record(paths, record)
    loaded = load_record(paths)
    assert loaded == record
    with pytest.raises(SchemaError, match="wrong key set"):
        SessionRecord.from_json_obj({"session_id": "9"})
    with pytest.raises(SchemaError, match="unknown session state"):
        SessionRecord(session_id="9", state="daydreaming", theme_name="Madrid")


def test_read_history_missing_file(tmp_path):
    assert read_history(session_paths(tmp_path, "none")) == []


def test_save_record_never_exposes_partial_writes(tmp_path):
    # The service polls session.json from another thread while generation
    # rewrites it; a reader must always see one complete version.
    paths = session_paths(tmp_path, "9")
    save_record(paths, SessionRecord(session_id="9", state=STATE_READY, theme_name="Madrid"))
    failures: list[Exception] = []
    done = threading.Event()

    def reader():
        while not done.is_set():
            try:
                load_record(paths)
            except Exception as exc:
                failures.append(exc)
                return

    thread = threading.Thread(target=reader)
    thread.start()
    record = SessionRecord(session_id="9", state=STATE_READY, theme_name="Madrid")
    for _ in range(300):
        save_record(paths, record)
    done.set()
    thread.join()
    assert failures == []
    assert not list(paths.root.glob("*.tmp"))


# ------------------------------------------------------------- generation


def test_run_generation_produces_all_artifacts(ready_session, corpus):
    handle = ready_session(0)
    paper = corpus[0]
    assert handle.record.state == STATE_READY
    assert handle.record.revision == 0
    status = handle.paths.artifact_status()
    assert all(status.values()), status

    doc = parse_document(handle.paths.enhanced.read_text("utf-8"))
    assert doc.full_text == paper.markdown
    plan = parse_plan(handle.paths.plan.read_text("utf-8"))
    deck = parse_flat_deck(handle.paths.slides.read_text("utf-8"))
    # One frame per planned slide, numbered in order.
    assert len(deck.slides) == len(plan.slides)

    snapshot = handle.paths.revision_dir(0)
    for name in ("deck.tex", "deck.pdf", "slides.json"):
        assert (snapshot / name).is_file()
    history = read_history(handle.paths)
    assert len(history) == 1
    assert history[0]["request"] == "(initial generation)"
    assert history[0]["ok"] is True and history[0]["revision"] == 0


def test_run_generation_stage_failure_marks_record(tmp_path, corpus):
    pdf = tmp_path / "fail_input.pdf"
    pdf.write_bytes(b"%PDF-1.4 broken\n")
    cfg = make_app_config(tmp_path / "sessions")
    gateway = corpus_mod.make_gateway(pipeline_provider(corpus))
    with pytest.raises(PipelineStageError) as err:
        run_generation(pdf, "badsession", cfg, gateway)
    assert err.value.stage == "ingesting"
    record = load_record(session_paths(cfg.sessions_root, "badsession"))
    assert record.state == STATE_FAILED
    assert record.error


def test_run_generation_rejects_unknown_theme_before_work(tmp_path, corpus):
    cfg = make_app_config(tmp_path / "sessions", theme_name="NotATheme")
    gateway = corpus_mod.make_gateway(pipeline_provider(corpus))
    with pytest.raises(SchemaError, match="not a known Beamer theme"):
        run_generation(tmp_path / "absent.pdf", "s1", cfg, gateway)
    assert not (tmp_path / "sessions" / "s1").exists()


# ------------------------------------------------------------- editing


def test_run_edit_modify_advances_revision(ready_session, corpus):
    handle = _editing_session(ready_session, corpus)
    before_tex = handle.paths.deck_tex.read_text("utf-8")
    before_slides = handle.paths.slides.read_text("utf-8")

    outcome = run_edit(
        "Rewrite slide 2 to be punchier", handle.paths, handle.cfg, handle.gateway
    )
    assert outcome.ok, outcome.error
    record = load_record(handle.paths)
    assert record.revision == 1
    assert record.state == STATE_READY

    after_tex = handle.paths.deck_tex.read_text("utf-8")
    assert after_tex != before_tex
    assert "Revised per request: Rewrite slide 2 to be punchier" in after_tex
    deck = parse_flat_deck(handle.paths.slides.read_text("utf-8"))
    assert any("Revised per request" in s.text for s in deck.slides)
    assert handle.paths.slides.read_text("utf-8") != before_slides
    assert (handle.paths.revision_dir(1) / "deck.tex").is_file()
    assert (handle.paths.revision_dir(0) / "deck.tex").read_text("utf-8") == before_tex

    history = read_history(handle.paths)
    assert len(history) == 2
    assert history[1]["ok"] is True and history[1]["revision"] == 1
    actions = [a["action"] for a in history[1]["plan"]["actions"]]
    assert actions == ["modify"]


def test_run_edit_planning_failure_is_recorded(ready_session, corpus):
    handle = _editing_session(ready_session, corpus)
    before_tex = handle.paths.deck_tex.read_text("utf-8")
    outcome = run_edit("unplannable gibberish", handle.paths, handle.cfg, handle.gateway)
    assert outcome.ok is False
    assert outcome.steps == ()
    assert "rephrase or name the slide number" in outcome.error
    assert handle.paths.deck_tex.read_text("utf-8") == before_tex
    assert load_record(handle.paths).revision == 0
    history = read_history(handle.paths)
    assert len(history) == 2
    assert history[1]["ok"] is False and history[1]["error"]
    assert history[1]["plan"]["actions"] == []


def test_run_edit_apply_failure_leaves_deck_alone(ready_session, corpus):
    handle = _editing_session(ready_session, corpus)
    before_tex = handle.paths.deck_tex.read_text("utf-8")
    outcome = run_edit("delete slide 99", handle.paths, handle.cfg, handle.gateway)
    assert outcome.ok is False
    assert outcome.failed_step == 0
    assert "no frame 99" in outcome.error
    assert handle.paths.deck_tex.read_text("utf-8") == before_tex
    assert load_record(handle.paths).revision == 0
    assert not handle.paths.revision_dir(1).exists()


def test_run_edit_delete_removes_one_frame(ready_session, corpus):
    handle = _editing_session(ready_session, corpus)
    before = parse_flat_deck(handle.paths.slides.read_text("utf-8"))
    victim_text = before.slides[3].text

    outcome = run_edit("delete slide 4", handle.paths, handle.cfg, handle.gateway)
    assert outcome.ok, outcome.error
    after = parse_flat_deck(handle.paths.slides.read_text("utf-8"))
    assert len(after.slides) == len(before.slides) - 1
    assert all(s.text != victim_text for s in after.slides)
    # Numbering stays contiguous from 1.
    assert [s.slide_number for s in after.slides] == list(
        range(1, len(after.slides) + 1)
    )


def test_run_edit_search_without_client_fails_cleanly(ready_session, corpus):
    handle = _editing_session(ready_session, corpus)
    outcome = run_edit(
        "cite related work for slide 2", handle.paths, handle.cfg, handle.gateway
    )
    assert outcome.ok is False
    assert "search is unavailable" in outcome.error
    assert load_record(handle.paths).revision == 0
