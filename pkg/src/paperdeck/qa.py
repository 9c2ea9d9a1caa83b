"""Quality-assurance stage: coverage verification and plan repair.

verify compares the slide plan against the source document in exactly three
content areas (methodology, results, conclusions) under a loose semantic
criterion: mentioning a concept's core idea counts as coverage. A plan is
flagged only when an area is insufficient or a high-importance concept is
missing. Every missing item must cite a source excerpt found verbatim in the
document; items failing that provenance check are rejected.

adjust repairs only high-importance omissions, appending 2-4 bullets to an
existing slide or a new supplemental slide placed right after the area it
repairs. It never deletes or reorders slides.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import AdjustmentError, SchemaError, VerificationError
from .llm.gateway import Gateway, parse_json_payload
from .llm.templates import load_template
from .model import (
    ROLE_ORDER,
    ROLE_SUPPLEMENTAL,
    ParsedDocument,
    SlidePlan,
    SlideSpec,
    validate_plan,
)

logger = logging.getLogger(__name__)

AREAS = ("methodology", "results", "conclusions")
COVERAGE_LEVELS = frozenset({"sufficient", "insufficient"})
IMPORTANCE_LEVELS = frozenset({"high", "low"})

# Which slide-role bucket each verification area repairs into.
AREA_ROLE = {"methodology": "motivation", "results": "results", "conclusions": "conclusion"}

DEFAULT_MAX_ROUNDS = 2
ADJUST_MIN_BULLETS = 2
ADJUST_MAX_BULLETS = 4


@dataclass(frozen=True)
class MissingItem:
    concept: str
    importance: str
    source_excerpt: str

    def to_json_obj(self) -> dict:
        return {
            "concept": self.concept,
            "importance": self.importance,
            "source_excerpt": self.source_excerpt,
        }


@dataclass(frozen=True)
class AreaReport:
    coverage: str
    missing: tuple[MissingItem, ...]

    def to_json_obj(self) -> dict:
        return {
            "coverage": self.coverage,
            "missing": [m.to_json_obj() for m in self.missing],
        }


@dataclass(frozen=True)
class VerificationReport:
    areas: dict[str, AreaReport]
    flagged: bool

    @classmethod
    def build(cls, areas: dict[str, AreaReport]) -> "VerificationReport":
        flagged = any(
            area.coverage == "insufficient" or any(m.importance == "high" for m in area.missing)
            for area in areas.values()
        )
        return cls(areas=areas, flagged=flagged)

    def high_items(self) -> list[tuple[str, MissingItem]]:
        out = []
        for name in AREAS:
            for item in self.areas[name].missing:
                if item.importance == "high":
                    out.append((name, item))
        return out

    def to_json_obj(self) -> dict:
        return {
            "areas": {name: self.areas[name].to_json_obj() for name in AREAS},
            "flagged": self.flagged,
        }


def serialize_report(report: VerificationReport) -> str:
    return json.dumps(report.to_json_obj(), ensure_ascii=False, indent=2) + "\n"


def _plan_summary(plan: SlidePlan) -> str:
    lines = []
    for slide in plan.slides:
        lines.append(f"Slide {slide.index} [{slide.role}]: {slide.central_message}")
        lines.extend(f"  - {bullet}" for bullet in slide.bullets)
    return "\n".join(lines)


def verify(plan: SlidePlan, doc: ParsedDocument, gateway: Gateway) -> VerificationReport:
    """Coverage check over the three content areas, with provenance filtering."""
    system = load_template("verifier").body
    user = load_template("verifier_user").render(
        PLAN_SUMMARY=_plan_summary(plan), PAPER_TEXT=doc.full_text
    )
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            return _parse_report(response, doc.full_text)
        except (SchemaError, VerificationError) as exc:
            if attempt == 0:
                logger.warning("verification report rejected, re-prompting: %s", exc)
                continue
            raise VerificationError(f"verification failed after retry: {exc}") from exc
    raise AssertionError("unreachable")


def _parse_report(response: str, full_text: str) -> VerificationReport:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict) or not isinstance(payload.get("areas"), dict):
        raise VerificationError("response is not an object with an 'areas' map")
    raw_areas = payload["areas"]
    if set(raw_areas) != set(AREAS):
        raise VerificationError(
            f"report areas {sorted(raw_areas)} != {sorted(AREAS)}"
        )
    areas: dict[str, AreaReport] = {}
    for name in AREAS:
        entry = raw_areas[name]
        if not isinstance(entry, dict):
            raise VerificationError(f"area '{name}' is not an object")
        coverage = entry.get("coverage")
        if coverage not in COVERAGE_LEVELS:
            raise VerificationError(f"area '{name}' has coverage {coverage!r}")
        missing_raw = entry.get("missing")
        if not isinstance(missing_raw, list):
            raise VerificationError(f"area '{name}' missing list is not a list")
        missing: list[MissingItem] = []
        for item in missing_raw:
            if not isinstance(item, dict):
                raise VerificationError(f"area '{name}' has a non-object missing item")
            concept = item.get("concept")
            importance = item.get("importance")
            excerpt = item.get("source_excerpt")
            if not isinstance(concept, str) or importance not in IMPORTANCE_LEVELS:
                raise VerificationError(f"malformed missing item in '{name}': {item!r}")
            if not isinstance(excerpt, str) or excerpt not in full_text:
                # Provenance check: an excerpt we cannot locate in the paper
                # is no evidence; the item is rejected, not the report.
                logger.warning(
                    "rejecting missing item %r: excerpt not found in document", concept
                )
                continue
            missing.append(MissingItem(concept, importance, excerpt))
        areas[name] = AreaReport(coverage=coverage, missing=tuple(missing))
    return VerificationReport.build(areas)


def adjust(
    plan: SlidePlan,
    report: VerificationReport,
    doc: ParsedDocument,
    gateway: Gateway,
) -> SlidePlan:
    """Repair high-importance omissions; returns the plan unchanged when clean.

    Repairs only ever append: bullets onto an existing slide, or one new
    supplemental slide placed immediately after the last slide of the area's
    role bucket.
    """
    if not report.flagged:
        return plan
    new_plan = plan
    for area, item in report.high_items():
        new_plan = _repair_one(new_plan, area, item, gateway)
    violations = validate_plan(new_plan, doc)
    if violations:
        raise AdjustmentError(f"adjusted plan failed validation: {violations[0].message}")
    return new_plan


def _repair_one(
    plan: SlidePlan, area: str, item: MissingItem, gateway: Gateway
) -> SlidePlan:
    system = load_template("adjuster").body
    slide_list = "\n".join(
        f"- slide {s.index} [{s.role}]: {s.central_message}" for s in plan.slides
    )
    user = load_template("adjuster_user").render(
        AREA=area,
        MISSING_CONCEPT=item.concept,
        SOURCE_EXCERPT=item.source_excerpt,
        SLIDE_LIST=slide_list,
    )
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            return _apply_repair(plan, area, item, response)
        except (SchemaError, AdjustmentError) as exc:
            if attempt == 0:
                logger.warning("repair for %r rejected, re-prompting: %s", item.concept, exc)
                continue
            raise AdjustmentError(
                f"repair for {item.concept!r} failed after retry: {exc}"
            ) from exc
    raise AssertionError("unreachable")


def _apply_repair(plan: SlidePlan, area: str, item: MissingItem, response: str) -> SlidePlan:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict):
        raise AdjustmentError("repair response is not a JSON object")
    bullets = payload.get("bullets")
    if (
        not isinstance(bullets, list)
        or not all(isinstance(b, str) and b.strip() for b in bullets)
        or not ADJUST_MIN_BULLETS <= len(bullets) <= ADJUST_MAX_BULLETS
    ):
        raise AdjustmentError(
            f"repair bullets must be {ADJUST_MIN_BULLETS}-{ADJUST_MAX_BULLETS}"
            f" non-empty strings, got {bullets!r}"
        )
    target = payload.get("target_slide_index")
    if target is not None:
        if not isinstance(target, int):
            raise AdjustmentError(f"target_slide_index {target!r} is not an integer")
        try:
            slide = plan.slide_at(target)
        except SchemaError:
            raise AdjustmentError(f"repair targets unknown slide {target}") from None
        return plan.with_replaced_slide(slide.with_appended_bullets(bullets))
    message = payload.get("central_message")
    if not isinstance(message, str) or not message.strip():
        raise AdjustmentError("new supplemental slide needs a central_message")
    anchor = _last_slide_of_area(plan, area)
    supplemental = SlideSpec(
        index=anchor + 1,
        role=ROLE_SUPPLEMENTAL,
        central_message=message,
        bullets=tuple(bullets),
        importance=max(s.importance for s in plan.slides) + 1,
    )
    return plan.with_slide_inserted_after(anchor, supplemental)


def _last_slide_of_area(plan: SlidePlan, area: str) -> int:
    """Index of the last slide in the area's role bucket, falling back to the
    last content slide, then the deck's end."""
    role = AREA_ROLE[area]
    candidates = [s.index for s in plan.slides if s.role == role]
    if candidates:
        return candidates[-1]
    content = [s.index for s in plan.slides if s.role in ROLE_ORDER or s.role == ROLE_SUPPLEMENTAL]
    if content:
        return content[-1]
    return plan.slides[-1].index


def verify_and_adjust(
    plan: SlidePlan,
    doc: ParsedDocument,
    gateway: Gateway,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> tuple[SlidePlan, VerificationReport]:
    """Bounded verify-adjust loop; at most max_rounds repairs, then best effort."""
    report = verify(plan, doc, gateway)
    rounds = 0
    while report.flagged and rounds < max_rounds:
        plan = adjust(plan, report, doc, gateway)
        rounds += 1
        report = verify(plan, doc, gateway)
    if report.flagged:
        logger.warning(
            "coverage still flagged after %d adjustment rounds; emitting best plan", rounds
        )
    return plan, report
