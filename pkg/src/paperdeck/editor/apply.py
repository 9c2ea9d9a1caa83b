"""Plan execution: run tools in order, recompile, roll back on failure.

The deck is atomic across a plan: either every action lands and the result
compiles (possibly after repair), or the session keeps its exact pre-plan
source. History records both outcomes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Optional

from ..errors import EditApplyError, PaperdeckError, StaleRegionError
from ..llm.gateway import Gateway, strip_code_fences
from ..llm.templates import load_template
from ..model import STATUS_COMPILED, STATUS_UNCOMPILED
from ..refsearch import FetchConfig, HTTPClient
from ..texgen.compiler import DEFAULT_MAX_ATTEMPTS, EngineConfig, compile_and_repair
from ..texgen.flatten import check_balanced, list_frames
from .actions import (
    ACTION_DELETE,
    ACTION_INSERT,
    ACTION_LOCATE,
    ACTION_MODIFY,
    ACTION_SEARCH,
    CodeRegion,
    EditAction,
    EditOutcome,
    EditPlan,
    EditSession,
    StepOutcome,
    deck_digest,
    explicit_frame_number,
)
from .tools import (
    _region_for_frame,
    tool_delete,
    tool_insert,
    tool_locate,
    tool_modify,
    tool_search,
)

logger = logging.getLogger(__name__)

_BEGIN_FRAME = "\\begin{frame}"


def _commit(session: EditSession, new_latex: str) -> None:
    session.deck = replace(
        session.deck,
        latex=new_latex,
        status=STATUS_UNCOMPILED,
        log_excerpt="",
        attempts=0,
        pdf_path=None,
    )


def _consume_region(session: EditSession, action: EditAction) -> CodeRegion:
    """The region a mutating action operates on.

    A fresh located region wins; an explicit frame number re-resolves
    against the current deck; a stale region with no number is an error
    that forces re-locating.
    """
    region = session.located_region
    if region is not None and region.deck_digest == deck_digest(session.deck.latex):
        return region
    number = explicit_frame_number(action.description)
    if number is not None:
        return _region_for_frame(session.deck.latex, number)
    if region is not None:
        raise StaleRegionError(
            "located region predates the last deck change; locate again"
        )
    raise EditApplyError(f"{action.action} has no region to act on")


def _end_boundary(latex: str) -> CodeRegion:
    frames = list_frames(latex)
    if frames:
        offset = frames[-1].end
    else:
        end_doc = latex.find("\\end{document}")
        offset = end_doc if end_doc >= 0 else len(latex)
    return CodeRegion(
        start_offset=offset, end_offset=offset, deck_digest=deck_digest(latex)
    )


def _insert_position(session: EditSession, action: EditAction) -> CodeRegion:
    region = session.located_region
    if region is not None and region.deck_digest == deck_digest(session.deck.latex):
        return region
    number = explicit_frame_number(action.description)
    if number is not None:
        return _region_for_frame(session.deck.latex, number)
    if region is not None:
        raise StaleRegionError(
            "located region predates the last deck change; locate again"
        )
    return _end_boundary(session.deck.latex)


def _generate_insert_content(
    action: EditAction, session: EditSession, gateway: Gateway, snippet: str
) -> str:
    region = session.located_region
    if region is not None and region.deck_digest == deck_digest(session.deck.latex):
        context = region.text(session.deck.latex)[:2000]
    else:
        context = "(inserting at the end of the deck)"
    system = load_template("editor_insert").body
    user = load_template("editor_insert_user").render(
        DESCRIPTION=action.description,
        CONTEXT=context,
        SNIPPET=snippet or "(none)",
    )
    reason = ""
    for attempt in range(2):
        content = strip_code_fences(gateway.complete(system, user))
        balance = check_balanced(content)
        if balance is not None:
            reason = balance
        elif _BEGIN_FRAME not in content:
            reason = "content contains no frame"
        else:
            return content
        if attempt == 0:
            logger.warning("rejected insert content (%s), re-asking", reason)
    raise EditApplyError(f"insert content invalid after retry: {reason}")


def apply_plan(
    plan: EditPlan,
    session: EditSession,
    gateway: Gateway,
    engine: EngineConfig,
    workdir: str | Path,
    request: str = "",
    max_repair_attempts: int = DEFAULT_MAX_ATTEMPTS,
    search_client: Optional[HTTPClient] = None,
    fetch_cfg: Optional[FetchConfig] = None,
) -> EditOutcome:
    pre_deck = session.deck
    pre_region = session.located_region
    steps: list[StepOutcome] = []
    pending_snippet = ""
    mutated = False

    def fail(index: int, action: EditAction, exc: Exception) -> EditOutcome:
        steps.append(
            StepOutcome(
                action=action.action, description=action.description,
                ok=False, detail=str(exc),
            )
        )
        session.deck = pre_deck
        session.located_region = pre_region
        outcome = EditOutcome(
            ok=False,
            steps=tuple(steps),
            deck=session.deck,
            failed_step=index,
            error=str(exc),
            rolled_back=mutated,
        )
        session.record(request, plan, ok=False, error=str(exc))
        return outcome

    for i, action in enumerate(plan.actions):
        try:
            detail = ""
            if action.action == ACTION_LOCATE:
                region = tool_locate(action.description, session, gateway)
                detail = f"frame {region.frame_index}"
            elif action.action == ACTION_SEARCH:
                if search_client is None or fetch_cfg is None:
                    raise EditApplyError(
                        "search is unavailable: no retrieval client configured"
                    )
                result = tool_search(
                    action.description, session, gateway, search_client, fetch_cfg
                )
                pending_snippet = result.latex
                detail = result.citation.display_name()
                if not result.verified:
                    detail += " (full text unavailable; snippet unverified)"
            elif action.action == ACTION_MODIFY:
                region = _consume_region(session, action)
                _commit(session, tool_modify(region, action.description, session, gateway))
                mutated = True
            elif action.action == ACTION_INSERT:
                position = _insert_position(session, action)
                content = _generate_insert_content(action, session, gateway, pending_snippet)
                _commit(session, tool_insert(position, content, session))
                pending_snippet = ""
                mutated = True
            elif action.action == ACTION_DELETE:
                region = _consume_region(session, action)
                _commit(session, tool_delete(region, session))
                mutated = True
            steps.append(
                StepOutcome(
                    action=action.action, description=action.description,
                    ok=True, detail=detail,
                )
            )
        except (PaperdeckError, TimeoutError, EnvironmentError) as exc:
            return fail(i, action, exc)

    if mutated:
        candidate = replace(session.deck, status=STATUS_UNCOMPILED, attempts=0)
        compiled = compile_and_repair(
            candidate, gateway, engine, workdir, max_attempts=max_repair_attempts
        )
        if compiled.status != STATUS_COMPILED:
            error = f"deck failed to compile after edits: {compiled.log_excerpt}".strip()
            session.deck = pre_deck
            session.located_region = pre_region
            outcome = EditOutcome(
                ok=False,
                steps=tuple(steps),
                deck=session.deck,
                failed_step=None,
                error=error,
                rolled_back=True,
            )
            session.record(request, plan, ok=False, error=error)
            return outcome
        session.deck = compiled
        session.plan_stale = True
        session.revision += 1

    outcome = EditOutcome(ok=True, steps=tuple(steps), deck=session.deck)
    session.record(request, plan, ok=True)
    return outcome


def append_history(path: str | Path, session: EditSession) -> None:
    """Persist the newest history entry as one JSON line."""
    if not session.history:
        return
    entry = session.history[-1]
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(entry.to_json_obj(), ensure_ascii=False) + "\n")
