"""Planner stage: section roles, slide planning, figure matching, drafting.

Four LLM passes, each behind a validation gate with one re-prompt:

1. classify_sections assigns each top-level section a narrative role and an
   importance rank.
2. plan_slides lays out the deck. Slide order is derived from roles, never
   from the order the model or the classification list happened to use: the
   title and outline slides are pinned to the front and content slides are
   stably sorted into problem < motivation < results < conclusion.
3. match_figures pairs figures with slides and rewrites captions to fit a
   character budget; a figure lands on at most one slide, ties going to the
   more important slide.
4. draft_content writes final bullets and speaker notes per content slide.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import ClassificationError, PlanningError, SchemaError
from .ingest import split_sections
from .llm.gateway import Gateway, parse_json_payload
from .llm.templates import load_template
from .model import (
    CONTENT_ROLES,
    ROLE_ORDER,
    ROLE_OUTLINE,
    ROLE_SUPPLEMENTAL,
    ROLE_TITLE,
    FigureRef,
    ParsedDocument,
    PlanMeta,
    SlidePlan,
    SlideSpec,
    validate_plan,
)

logger = logging.getLogger(__name__)

CLASSIFIER_ROLES = frozenset(ROLE_ORDER)
DEFAULT_CAPTION_BUDGET = 140


@dataclass(frozen=True)
class PlannerConfig:
    min_slides: int = 4
    max_slides: int = 30
    caption_budget: int = DEFAULT_CAPTION_BUDGET
    min_bullets: int = 2
    max_bullets: int = 6
    supplemental_max_bullets: int = 4
    section_excerpt_chars: int = 600
    draft_context_chars: int = 8000
    theme_name: str = "Madrid"


@dataclass(frozen=True)
class SectionClassification:
    section_heading: str
    role: str
    importance: int


def classify_sections(
    doc: ParsedDocument, gateway: Gateway, config: PlannerConfig = PlannerConfig()
) -> list[SectionClassification]:
    """Assign each top-level section a role and a unique importance rank."""
    sections = [(h, b) for h, b in split_sections(doc.full_text) if h]
    if not sections:
        raise ClassificationError("document has no top-level headings to classify")
    system = load_template("planner_classify").body
    listing = "\n\n".join(
        f"## {heading}\n{body[: config.section_excerpt_chars]}" for heading, body in sections
    )
    user = load_template("planner_classify_user").render(SECTION_LIST=listing)
    headings = [h for h, _ in sections]
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            return _parse_classifications(response, headings)
        except (SchemaError, ClassificationError) as exc:
            if attempt == 0:
                logger.warning("classification rejected, re-prompting: %s", exc)
                continue
            raise ClassificationError(f"classification failed after retry: {exc}") from exc
    raise AssertionError("unreachable")


def _parse_classifications(response: str, headings: list[str]) -> list[SectionClassification]:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict) or not isinstance(payload.get("sections"), list):
        raise ClassificationError("response is not an object with a 'sections' list")
    out: list[SectionClassification] = []
    seen: set[str] = set()
    for entry in payload["sections"]:
        if not isinstance(entry, dict):
            raise ClassificationError("section entry is not an object")
        heading = entry.get("section_heading")
        role = entry.get("role")
        importance = entry.get("importance")
        if heading not in headings:
            raise ClassificationError(f"unknown section heading {heading!r}")
        if heading in seen:
            raise ClassificationError(f"section {heading!r} classified twice")
        if role not in CLASSIFIER_ROLES:
            raise ClassificationError(f"section {heading!r} has role {role!r}")
        if not isinstance(importance, int):
            raise ClassificationError(f"section {heading!r} has non-integer importance")
        seen.add(heading)
        out.append(SectionClassification(heading, role, importance))
    if seen != set(headings):
        raise ClassificationError(f"unclassified sections: {sorted(set(headings) - seen)}")
    ranks = sorted(c.importance for c in out)
    if ranks != list(range(1, len(out) + 1)):
        raise ClassificationError(f"importance ranks {ranks} are not a permutation of 1..N")
    return out


def _paper_title(doc: ParsedDocument) -> str:
    for heading, _ in split_sections(doc.full_text):
        if heading:
            return heading
    return "Untitled"


def plan_slides(
    doc: ParsedDocument,
    classifications: list[SectionClassification],
    gateway: Gateway,
    config: PlannerConfig = PlannerConfig(),
) -> SlidePlan:
    """Lay out the deck; output order is a pure function of slide roles."""
    meta = PlanMeta(paper_title=_paper_title(doc), authors=(), theme_name=config.theme_name)
    if not classifications:
        return SlidePlan(
            meta=meta,
            slides=(
                SlideSpec(index=1, role=ROLE_TITLE, central_message=meta.paper_title),
                SlideSpec(index=2, role=ROLE_OUTLINE, central_message="Outline"),
            ),
        )
    system = load_template("planner_plan").render(
        MIN_SLIDES=str(config.min_slides), MAX_SLIDES=str(config.max_slides)
    )
    # The classification listing is sorted by role so the prompt itself is
    # independent of input permutation.
    ordered = sorted(classifications, key=lambda c: (ROLE_ORDER[c.role], c.importance))
    listing = "\n".join(
        f"- [{c.role}] rank {c.importance}: {c.section_heading}" for c in ordered
    )
    assets = _asset_summary(doc)
    user = load_template("planner_plan_user").render(
        PAPER_TITLE=meta.paper_title, CLASSIFIED_SECTIONS=listing, ASSET_SUMMARY=assets
    )
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            plan = _parse_planned_slides(response, meta, config)
        except (SchemaError, PlanningError) as exc:
            if attempt == 0:
                logger.warning("slide plan rejected, re-prompting: %s", exc)
                continue
            raise PlanningError(f"slide planning failed after retry: {exc}") from exc
        violations = validate_plan(plan, doc)
        if violations:
            if attempt == 0:
                logger.warning("slide plan has violations, re-prompting: %s", violations[0])
                continue
            raise PlanningError(f"planned deck failed validation: {violations[0].message}")
        return plan
    raise AssertionError("unreachable")


def _parse_planned_slides(
    response: str, meta: PlanMeta, config: PlannerConfig
) -> SlidePlan:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict) or not isinstance(payload.get("slides"), list):
        raise PlanningError("response is not an object with a 'slides' list")
    slides = [
        SlideSpec.from_json_obj(s, f"plan.slides[{i}]") for i, s in enumerate(payload["slides"])
    ]
    titles = [s for s in slides if s.role == ROLE_TITLE]
    outlines = [s for s in slides if s.role == ROLE_OUTLINE]
    content = [s for s in slides if s.role in ROLE_ORDER]
    if len(titles) != 1 or len(outlines) != 1:
        raise PlanningError("plan must contain exactly one title and one outline slide")
    if any(s.role == ROLE_SUPPLEMENTAL for s in slides):
        raise PlanningError("planner output may not contain supplemental slides")
    content.sort(key=lambda s: ROLE_ORDER[s.role])
    ordered = [titles[0], outlines[0], *content]
    if not config.min_slides <= len(ordered) <= config.max_slides:
        raise PlanningError(
            f"plan has {len(ordered)} slides, outside {config.min_slides}..{config.max_slides}"
        )
    return SlidePlan(
        meta=meta,
        slides=tuple(s.with_index(i) for i, s in enumerate(ordered, start=1)),
    )


def _asset_summary(doc: ParsedDocument) -> str:
    lines = [f"- figure {img.id}: {img.caption or img.filename}" for img in doc.images]
    lines += [
        f"- table {t.id}: {t.title or t.description}" for t in doc.enhanced_content.tables
    ]
    lines += [
        f"- equation {i}: {e.description or e.latex[:60]}"
        for i, e in enumerate(doc.enhanced_content.equations)
    ]
    return "\n".join(lines) if lines else "(none)"


@dataclass(frozen=True)
class FigureMatch:
    slide_index: int
    figure_id: str
    short_caption: str


def match_figures(
    plan: SlidePlan,
    doc: ParsedDocument,
    gateway: Gateway,
    config: PlannerConfig = PlannerConfig(),
) -> list[FigureMatch]:
    """Match each figure to at most one slide, with budget-bounded captions."""
    if not doc.images:
        return []
    system = load_template("planner_figures").render(
        CAPTION_BUDGET=str(config.caption_budget)
    )
    figure_list = "\n".join(f"- {img.id}: {img.caption}" for img in doc.images)
    slide_list = "\n".join(
        f"- slide {s.index} [{s.role}] rank {s.importance}: {s.central_message}"
        for s in plan.slides
    )
    user = load_template("planner_figures_user").render(
        FIGURE_LIST=figure_list, SLIDE_LIST=slide_list
    )
    known = doc.figure_ids()
    indices = {s.index for s in plan.slides}
    matches: Optional[list[FigureMatch]] = None
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            candidates = _parse_matches(response)
        except (SchemaError, PlanningError) as exc:
            if attempt == 0:
                logger.warning("figure match response rejected: %s", exc)
                continue
            raise PlanningError(f"figure matching failed after retry: {exc}") from exc
        bad = [
            m
            for m in candidates
            if m.figure_id not in known
            or m.slide_index not in indices
            or len(m.short_caption) > config.caption_budget
        ]
        if not bad:
            matches = candidates
            break
        if attempt == 0:
            logger.warning("figure match rejected (%d invalid), re-prompting", len(bad))
            continue
        # After the retry, salvage what verifies: drop unknown references and
        # clamp over-budget captions so the postcondition still holds.
        salvaged = []
        for m in candidates:
            if m.figure_id not in known or m.slide_index not in indices:
                logger.warning("dropping figure match %s -> %s", m.figure_id, m.slide_index)
                continue
            caption = m.short_caption[: config.caption_budget]
            salvaged.append(FigureMatch(m.slide_index, m.figure_id, caption))
        matches = salvaged
    assert matches is not None
    return _dedupe_matches(matches, plan)


def _parse_matches(response: str) -> list[FigureMatch]:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict) or not isinstance(payload.get("matches"), list):
        raise PlanningError("response is not an object with a 'matches' list")
    out = []
    for entry in payload["matches"]:
        if (
            not isinstance(entry, dict)
            or not isinstance(entry.get("slide_index"), int)
            or not isinstance(entry.get("figure_id"), str)
            or not isinstance(entry.get("short_caption"), str)
        ):
            raise PlanningError(f"malformed figure match: {entry!r}")
        out.append(
            FigureMatch(entry["slide_index"], entry["figure_id"], entry["short_caption"])
        )
    return out


def _dedupe_matches(matches: list[FigureMatch], plan: SlidePlan) -> list[FigureMatch]:
    """One slide per figure; the more important slide (lower rank) wins."""
    rank = {s.index: s.importance for s in plan.slides}
    best: dict[str, FigureMatch] = {}
    for m in matches:
        cur = best.get(m.figure_id)
        if cur is None or (rank[m.slide_index], m.slide_index) < (
            rank[cur.slide_index],
            cur.slide_index,
        ):
            best[m.figure_id] = m
    kept = [m for m in matches if best[m.figure_id] is m]
    return kept


def apply_matches(plan: SlidePlan, matches: Iterable[FigureMatch]) -> SlidePlan:
    """Write figure matches onto their slides; a pure plan transformation."""
    by_slide: dict[int, list[FigureRef]] = {}
    for m in matches:
        by_slide.setdefault(m.slide_index, []).append(
            FigureRef(figure_id=m.figure_id, short_caption=m.short_caption)
        )
    new_plan = plan
    for index, refs in by_slide.items():
        slide = new_plan.slide_at(index)
        new_plan = new_plan.with_replaced_slide(slide.with_figure_refs(refs))
    return new_plan


def draft_content(
    plan: SlidePlan,
    doc: ParsedDocument,
    gateway: Gateway,
    config: PlannerConfig = PlannerConfig(),
) -> SlidePlan:
    """Write final bullets and speaker notes for every content slide."""
    new_plan = plan
    context = doc.full_text[: config.draft_context_chars]
    for slide in plan.slides:
        if slide.role not in CONTENT_ROLES:
            continue
        max_bullets = (
            config.supplemental_max_bullets
            if slide.role == ROLE_SUPPLEMENTAL
            else config.max_bullets
        )
        system = load_template("planner_draft").render(
            MIN_BULLETS=str(config.min_bullets), MAX_BULLETS=str(max_bullets)
        )
        user = load_template("planner_draft_user").render(
            SLIDE_ROLE=slide.role,
            CENTRAL_MESSAGE=slide.central_message,
            SECTION_TEXT=context,
        )
        drafted = None
        for attempt in range(2):
            response = gateway.complete(system, user)
            try:
                drafted = _parse_draft(response, config.min_bullets, max_bullets)
                break
            except PlanningError as exc:
                if attempt == 0:
                    logger.warning("draft for slide %d rejected: %s", slide.index, exc)
                    continue
                raise PlanningError(
                    f"drafting slide {slide.index} failed after retry: {exc}"
                ) from exc
        assert drafted is not None
        bullets, notes = drafted
        new_plan = new_plan.with_replaced_slide(
            slide.with_bullets(bullets).with_speaker_notes(notes)
        )
    return new_plan


def _parse_draft(response: str, min_bullets: int, max_bullets: int) -> tuple[list[str], str]:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict):
        raise PlanningError("draft response is not a JSON object")
    bullets = payload.get("bullets")
    notes = payload.get("speaker_notes")
    if not isinstance(bullets, list) or not all(isinstance(b, str) and b.strip() for b in bullets):
        raise PlanningError("draft bullets must be non-empty strings")
    if not min_bullets <= len(bullets) <= max_bullets:
        raise PlanningError(
            f"draft has {len(bullets)} bullets, outside {min_bullets}..{max_bullets}"
        )
    if not isinstance(notes, str) or not notes.strip():
        raise PlanningError("draft speaker_notes must be a non-empty string")
    return bullets, notes


def build_plan(
    doc: ParsedDocument, gateway: Gateway, config: PlannerConfig = PlannerConfig()
) -> SlidePlan:
    """Full planner stage: classify, plan, match figures, draft."""
    classifications = classify_sections(doc, gateway, config)
    plan = plan_slides(doc, classifications, gateway, config)
    matches = match_figures(plan, doc, gateway, config)
    plan = apply_matches(plan, matches)
    return draft_content(plan, doc, gateway, config)


def classifications_to_json(classifications: list[SectionClassification]) -> str:
    return json.dumps(
        {
            "sections": [
                {
                    "section_heading": c.section_heading,
                    "role": c.role,
                    "importance": c.importance,
                }
                for c in classifications
            ]
        },
        ensure_ascii=False,
        indent=2,
    )
