"""The five edit tools: locate, search, modify, insert, delete.

Mutating tools are pure over the deck source: they take the current latex
through the session and return the new latex; apply_plan owns committing
results and rolling back. Every region consumer rejects a region whose
deck digest no longer matches the live deck.
"""

from __future__ import annotations

import json
import logging
import re
from typing import Optional

from ..errors import (
    EditApplyError,
    RegionNotFound,
    SchemaError,
    StaleRegionError,
)
from ..llm.gateway import Gateway, parse_json_payload, strip_code_fences
from ..llm.templates import load_template
from ..refsearch import FetchConfig, HTTPClient, SnippetResult, search_cited_material
from ..texgen.flatten import check_balanced, frame_by_number, list_frames, renumber_headers
from .actions import CodeRegion, EditSession, deck_digest, explicit_frame_number

logger = logging.getLogger(__name__)

_BEGIN_FRAME_RE = re.compile(r"\\begin\{frame\}")
_HEADER_LINE_RE = re.compile(r"^%\s*slide:\d+[ \t]*\n")
_QUOTED_RE = re.compile(r"[\"'\u201c\u2018]([^\"'\u201c\u201d\u2018\u2019]+)[\"'\u201d\u2019]")
_WORD_RE = re.compile(r"[A-Za-z][A-Za-z0-9-]{2,}")
_STOPWORDS = frozenset(
    """the a an and or for of to in on with about from into over under related
    reference references work works paper papers find search add insert that
    this these those slide slides frame frames cite citation citations section
    part explain explanation new page pages please""".split()
)


def _fresh(region: CodeRegion, session: EditSession) -> None:
    if region.deck_digest and region.deck_digest != deck_digest(session.deck.latex):
        raise StaleRegionError(
            "region was located against an older deck revision; locate again"
        )
    if region.end_offset > len(session.deck.latex):
        raise StaleRegionError("region extends past the current deck source")


def _region_for_frame(latex: str, number: int) -> CodeRegion:
    frame = frame_by_number(latex, number)
    if frame is None:
        raise RegionNotFound(f"deck has no frame {number}")
    region = CodeRegion(
        start_offset=frame.start,
        end_offset=frame.end,
        frame_index=number,
        deck_digest=deck_digest(latex),
    )
    reason = check_balanced(region.text(latex))
    if reason is not None:
        raise RegionNotFound(f"frame {number} is not a balanced block: {reason}")
    return region


def _frame_listing(session: EditSession) -> str:
    frames = list_frames(session.deck.latex)
    by_index = {}
    if not session.plan_stale:
        by_index = {slide.index: slide for slide in session.plan.slides}
    lines = []
    for i, frame in enumerate(frames, start=1):
        number = frame.header_number if frame.header_number is not None else i
        title = frame.title or "(untitled)"
        slide = by_index.get(number)
        if slide is not None and slide.central_message:
            lines.append(f"{number}. {title} | {slide.central_message}")
        else:
            lines.append(f"{number}. {title}")
    return "\n".join(lines)


def tool_locate(description: str, session: EditSession, gateway: Gateway) -> CodeRegion:
    """Resolve a description to one frame's region, numerically or semantically."""
    latex = session.deck.latex
    if not latex.strip():
        raise RegionNotFound("deck source is empty")
    number = explicit_frame_number(description)
    if number is not None:
        region = _region_for_frame(latex, number)
        session.located_region = region
        return region
    if not list_frames(latex):
        raise RegionNotFound("deck source contains no frames")
    system = load_template("editor_locate").body
    user = load_template("editor_locate_user").render(
        DESCRIPTION=description, FRAME_LIST=_frame_listing(session)
    )
    frame_number: Optional[int] = None
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            payload = parse_json_payload(response)
            if not isinstance(payload, dict) or "frame_number" not in payload:
                raise SchemaError("locator response missing frame_number")
            value = payload["frame_number"]
            if value is not None and not isinstance(value, int):
                raise SchemaError("frame_number must be an integer or null")
            frame_number = value
            break
        except SchemaError as exc:
            if attempt == 0:
                logger.warning("unusable locate response (%s), re-asking", exc)
                continue
            raise RegionNotFound(f"locator produced no usable answer: {exc}")
    if frame_number is None:
        raise RegionNotFound(f"no frame matches the description: {description!r}")
    region = _region_for_frame(latex, frame_number)
    session.located_region = region
    return region


def extract_keywords(description: str) -> list[str]:
    """Quoted phrases win; otherwise content words minus editing vocabulary."""
    quoted = [q.strip() for q in _QUOTED_RE.findall(description) if q.strip()]
    if quoted:
        return quoted
    words = [w for w in _WORD_RE.findall(description) if w.lower() not in _STOPWORDS]
    return words


def tool_search(
    description: str,
    session: EditSession,
    gateway: Gateway,
    client: HTTPClient,
    fetch_cfg: FetchConfig,
    fetch_count: int = 1,
    allow_unverified: bool = True,
) -> SnippetResult:
    """Build a slide-ready snippet from the paper's cited works."""
    keywords = extract_keywords(description)
    context = ""
    region = session.located_region
    if region is not None and region.deck_digest == deck_digest(session.deck.latex):
        context = region.text(session.deck.latex)[:2000]
    return search_cited_material(
        session.doc,
        keywords,
        context,
        gateway,
        client,
        fetch_cfg,
        fetch_count=fetch_count,
        allow_unverified=allow_unverified,
    )


def _split_header(region_text: str) -> tuple[str, str]:
    match = _HEADER_LINE_RE.match(region_text)
    if match:
        return match.group(0), region_text[match.end() :]
    return "", region_text


def tool_modify(
    region: CodeRegion, description: str, session: EditSession, gateway: Gateway
) -> str:
    """Rewrite the located block in place; everything outside it is untouched."""
    _fresh(region, session)
    latex = session.deck.latex
    original = region.text(latex)
    header, original_body = _split_header(original)
    frame_count = len(_BEGIN_FRAME_RE.findall(original_body))
    system = load_template("editor_modify").body
    user_template = load_template("editor_modify_user")
    reason = ""
    for attempt in range(2):
        response = gateway.complete(
            system,
            user_template.render(DESCRIPTION=description, REGION_TEXT=original),
        )
        rewrite = strip_code_fences(response)
        # The header is ours, not the model's: reattach the original so
        # numbering survives whatever the rewrite did to it.
        _, body = _split_header(rewrite)
        balance = check_balanced(body)
        if balance is not None:
            reason = balance
        elif len(_BEGIN_FRAME_RE.findall(body)) != frame_count:
            reason = "rewrite changed the number of frames"
        elif not body.strip():
            reason = "rewrite is empty"
        else:
            new_region = header + body
            new_latex = latex[: region.start_offset] + new_region + latex[region.end_offset :]
            return renumber_headers(new_latex)
        if attempt == 0:
            logger.warning("rejected rewrite (%s), re-asking", reason)
    raise EditApplyError(f"rewrite remained structurally invalid: {reason}")


def tool_insert(position: CodeRegion, content: str, session: EditSession) -> str:
    """Insert frames at a frame seam; existing frames stay byte-identical."""
    _fresh(position, session)
    latex = session.deck.latex
    offset = position.end_offset
    inserted_frames = len(_BEGIN_FRAME_RE.findall(content))
    if inserted_frames:
        seams = {0, len(latex)}
        for frame in list_frames(latex):
            seams.add(frame.start)
            seams.add(frame.end)
        if offset not in seams:
            raise EditApplyError(
                f"insertion point {offset} is inside a frame body; "
                "new frames go at frame seams"
            )
    reason = check_balanced(content)
    if reason is not None:
        raise EditApplyError(f"inserted content is not balanced: {reason}")
    chunk = content if content.endswith("\n") else content + "\n"
    prefix = latex[:offset]
    if prefix and not prefix.endswith("\n"):
        chunk = "\n" + chunk
    new_latex = prefix + chunk + latex[offset:]
    return renumber_headers(new_latex)


def tool_delete(region: CodeRegion, session: EditSession) -> str:
    """Remove the region's text exactly; the rest of the deck is untouched."""
    _fresh(region, session)
    latex = session.deck.latex
    new_latex = latex[: region.start_offset] + latex[region.end_offset :]
    return renumber_headers(new_latex)
