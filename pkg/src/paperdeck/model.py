"""Core data model: parsed documents, slide plans, deck sources, flat decks.

All types are immutable value objects; mutation helpers return new instances.
JSON layouts are normative and strict in both directions: serializers emit
exactly the documented keys in the documented order, parsers reject unknown
keys and missing keys with a SchemaError naming the offending field path.

Document JSON layout::

    {
      "full_text": str,
      "images": [{"id", "filename", "path", "caption"}],
      "pdf_path": str,
      "extraction_time": ISO-8601 str,
      "conversion_time_seconds": float >= 0,
      "session_id": str,
      "enhanced_content": {
        "tables": [{"id", "title", "markdown_content", "description"}],
        "equations": [{"latex", "description", "context"}]
      }
    }

Plan JSON layout::

    {
      "meta": {"paper_title", "authors": [str], "theme_name"},
      "slides": [{"index", "role", "central_message", "bullets": [str],
                  "figure_refs": [{"figure_id", "short_caption"}],
                  "table_refs": [str], "equation_refs": [int],
                  "speaker_notes", "importance"}]
    }

Flat deck JSON layout::

    {"slides": [{"slide_number": int, "text": str}]}

Equation references are 0-based indices into the document's equation list;
figure and table references are the asset id strings ("fig1", "table1").
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import PurePosixPath
from typing import Any, Iterable, Optional

from .errors import SchemaError

ROLE_TITLE = "title"
ROLE_OUTLINE = "outline"
ROLE_PROBLEM = "problem"
ROLE_MOTIVATION = "motivation"
ROLE_RESULTS = "results"
ROLE_CONCLUSION = "conclusion"
ROLE_SUPPLEMENTAL = "supplemental"

# Narrative ordering for content slides: problem < motivation < results < conclusion.
ROLE_ORDER = {
    ROLE_PROBLEM: 0,
    ROLE_MOTIVATION: 1,
    ROLE_RESULTS: 2,
    ROLE_CONCLUSION: 3,
}
CONTENT_ROLES = frozenset(ROLE_ORDER) | {ROLE_SUPPLEMENTAL}
ALL_ROLES = frozenset({ROLE_TITLE, ROLE_OUTLINE, ROLE_SUPPLEMENTAL}) | frozenset(ROLE_ORDER)

STATUS_UNCOMPILED = "uncompiled"
STATUS_COMPILED = "compiled"
STATUS_FAILED = "failed"
DECK_STATUSES = frozenset({STATUS_UNCOMPILED, STATUS_COMPILED, STATUS_FAILED})

_FIGURE_ID_RE = re.compile(r"^fig[1-9][0-9]*$")
_TABLE_ID_RE = re.compile(r"^table[1-9][0-9]*$")


def _expect(value: Any, kind: type, path: str) -> Any:
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _take(obj: dict, keys: tuple[str, ...], path: str) -> dict:
    """Check a JSON object against an exact key set."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected object, got {type(obj).__name__}")
    for key in obj:
        if key not in keys:
            raise SchemaError(f"{path}: unknown key '{key}'")
    for key in keys:
        if key not in obj:
            raise SchemaError(f"{path}: missing key '{key}'")
    return obj


def _str_items(value: Any, path: str) -> tuple[str, ...]:
    _expect(value, list, path)
    return tuple(_expect(item, str, f"{path}[{i}]") for i, item in enumerate(value))


@dataclass(frozen=True)
class FigureAsset:
    """One image extracted from the source PDF, with its original caption."""

    id: str
    filename: str
    path: str
    caption: str

    def __post_init__(self) -> None:
        if not _FIGURE_ID_RE.match(self.id):
            raise SchemaError(f"figure id '{self.id}' does not match fig<N>")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "filename": self.filename,
            "path": self.path,
            "caption": self.caption,
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "FigureAsset":
        _take(obj, ("id", "filename", "path", "caption"), path)
        return cls(
            id=_expect(obj["id"], str, f"{path}.id"),
            filename=_expect(obj["filename"], str, f"{path}.filename"),
            path=_expect(obj["path"], str, f"{path}.path"),
            caption=_expect(obj["caption"], str, f"{path}.caption"),
        )


@dataclass(frozen=True)
class TableBlock:
    """A Markdown table lifted verbatim from the document text."""

    id: str
    title: str
    markdown_content: str
    description: str

    def __post_init__(self) -> None:
        if not _TABLE_ID_RE.match(self.id):
            raise SchemaError(f"table id '{self.id}' does not match table<N>")

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "markdown_content": self.markdown_content,
            "description": self.description,
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "TableBlock":
        _take(obj, ("id", "title", "markdown_content", "description"), path)
        return cls(
            id=_expect(obj["id"], str, f"{path}.id"),
            title=_expect(obj["title"], str, f"{path}.title"),
            markdown_content=_expect(obj["markdown_content"], str, f"{path}.markdown_content"),
            description=_expect(obj["description"], str, f"{path}.description"),
        )


@dataclass(frozen=True)
class EquationBlock:
    """A display equation lifted verbatim from the document text."""

    latex: str
    description: str
    context: str

    def to_json_obj(self) -> dict:
        return {
            "latex": self.latex,
            "description": self.description,
            "context": self.context,
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "EquationBlock":
        _take(obj, ("latex", "description", "context"), path)
        return cls(
            latex=_expect(obj["latex"], str, f"{path}.latex"),
            description=_expect(obj["description"], str, f"{path}.description"),
            context=_expect(obj["context"], str, f"{path}.context"),
        )


@dataclass(frozen=True)
class EnhancedContent:
    """Structured blocks recovered from the document. Lists may be empty, never absent."""

    tables: tuple[TableBlock, ...] = ()
    equations: tuple[EquationBlock, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "tables": [t.to_json_obj() for t in self.tables],
            "equations": [e.to_json_obj() for e in self.equations],
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "EnhancedContent":
        _take(obj, ("tables", "equations"), path)
        tables = _expect(obj["tables"], list, f"{path}.tables")
        equations = _expect(obj["equations"], list, f"{path}.equations")
        return cls(
            tables=tuple(
                TableBlock.from_json_obj(t, f"{path}.tables[{i}]") for i, t in enumerate(tables)
            ),
            equations=tuple(
                EquationBlock.from_json_obj(e, f"{path}.equations[{i}]")
                for i, e in enumerate(equations)
            ),
        )


@dataclass(frozen=True)
class ParsedDocument:
    """The full intermediate representation of one converted paper."""

    full_text: str
    images: tuple[FigureAsset, ...]
    pdf_path: str
    extraction_time: str
    conversion_time_seconds: float
    session_id: str
    enhanced_content: EnhancedContent = field(default_factory=EnhancedContent)

    def __post_init__(self) -> None:
        try:
            datetime.fromisoformat(self.extraction_time)
        except ValueError:
            raise SchemaError(
                f"extraction_time: '{self.extraction_time}' is not an ISO-8601 timestamp"
            ) from None
        if self.conversion_time_seconds < 0:
            raise SchemaError("conversion_time_seconds: must be >= 0")
        seen: set[str] = set()
        for i, img in enumerate(self.images):
            if img.id in seen:
                raise SchemaError(f"images[{i}].id: duplicate figure id '{img.id}'")
            seen.add(img.id)
            if self.session_id not in PurePosixPath(img.path).parts:
                raise SchemaError(
                    f"images[{i}].path: '{img.path}' is not under the"
                    f" session '{self.session_id}' asset directory"
                )
        for i, table in enumerate(self.enhanced_content.tables):
            if table.markdown_content not in self.full_text:
                raise SchemaError(
                    f"enhanced_content.tables[{i}].markdown_content:"
                    " not a verbatim substring of full_text"
                )
        for i, eq in enumerate(self.enhanced_content.equations):
            if eq.latex not in self.full_text:
                raise SchemaError(
                    f"enhanced_content.equations[{i}].latex:"
                    " not a verbatim substring of full_text"
                )

    def figure_ids(self) -> frozenset[str]:
        return frozenset(img.id for img in self.images)

    def table_ids(self) -> frozenset[str]:
        return frozenset(t.id for t in self.enhanced_content.tables)

    def to_json_obj(self) -> dict:
        return {
            "full_text": self.full_text,
            "images": [img.to_json_obj() for img in self.images],
            "pdf_path": self.pdf_path,
            "extraction_time": self.extraction_time,
            "conversion_time_seconds": self.conversion_time_seconds,
            "session_id": self.session_id,
            "enhanced_content": self.enhanced_content.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: Any) -> "ParsedDocument":
        _take(
            obj,
            (
                "full_text",
                "images",
                "pdf_path",
                "extraction_time",
                "conversion_time_seconds",
                "session_id",
                "enhanced_content",
            ),
            "document",
        )
        images = _expect(obj["images"], list, "document.images")
        return cls(
            full_text=_expect(obj["full_text"], str, "document.full_text"),
            images=tuple(
                FigureAsset.from_json_obj(img, f"document.images[{i}]")
                for i, img in enumerate(images)
            ),
            pdf_path=_expect(obj["pdf_path"], str, "document.pdf_path"),
            extraction_time=_expect(obj["extraction_time"], str, "document.extraction_time"),
            conversion_time_seconds=_expect(
                obj["conversion_time_seconds"], float, "document.conversion_time_seconds"
            ),
            session_id=_expect(obj["session_id"], str, "document.session_id"),
            enhanced_content=EnhancedContent.from_json_obj(
                obj["enhanced_content"], "document.enhanced_content"
            ),
        )


@dataclass(frozen=True)
class FigureRef:
    """A slide's reference to a figure, with a caption rewritten to fit."""

    figure_id: str
    short_caption: str

    def to_json_obj(self) -> dict:
        return {"figure_id": self.figure_id, "short_caption": self.short_caption}

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "FigureRef":
        _take(obj, ("figure_id", "short_caption"), path)
        return cls(
            figure_id=_expect(obj["figure_id"], str, f"{path}.figure_id"),
            short_caption=_expect(obj["short_caption"], str, f"{path}.short_caption"),
        )


@dataclass(frozen=True)
class SlideSpec:
    """One planned slide. index is 1-based and contiguous within a plan."""

    index: int
    role: str
    central_message: str
    bullets: tuple[str, ...] = ()
    figure_refs: tuple[FigureRef, ...] = ()
    table_refs: tuple[str, ...] = ()
    equation_refs: tuple[int, ...] = ()
    speaker_notes: str = ""
    importance: int = 1

    def __post_init__(self) -> None:
        if self.role not in ALL_ROLES:
            raise SchemaError(f"slide {self.index}: unknown role '{self.role}'")
        if self.index < 1:
            raise SchemaError(f"slide index {self.index}: must be >= 1")

    def with_bullets(self, bullets: Iterable[str]) -> "SlideSpec":
        return replace(self, bullets=tuple(bullets))

    def with_appended_bullets(self, extra: Iterable[str]) -> "SlideSpec":
        return replace(self, bullets=self.bullets + tuple(extra))

    def with_index(self, index: int) -> "SlideSpec":
        return replace(self, index=index)

    def with_figure_refs(self, refs: Iterable[FigureRef]) -> "SlideSpec":
        return replace(self, figure_refs=tuple(refs))

    def with_speaker_notes(self, notes: str) -> "SlideSpec":
        return replace(self, speaker_notes=notes)

    def to_json_obj(self) -> dict:
        return {
            "index": self.index,
            "role": self.role,
            "central_message": self.central_message,
            "bullets": list(self.bullets),
            "figure_refs": [r.to_json_obj() for r in self.figure_refs],
            "table_refs": list(self.table_refs),
            "equation_refs": list(self.equation_refs),
            "speaker_notes": self.speaker_notes,
            "importance": self.importance,
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "SlideSpec":
        _take(
            obj,
            (
                "index",
                "role",
                "central_message",
                "bullets",
                "figure_refs",
                "table_refs",
                "equation_refs",
                "speaker_notes",
                "importance",
            ),
            path,
        )
        figure_refs = _expect(obj["figure_refs"], list, f"{path}.figure_refs")
        equation_refs = _expect(obj["equation_refs"], list, f"{path}.equation_refs")
        return cls(
            index=_expect(obj["index"], int, f"{path}.index"),
            role=_expect(obj["role"], str, f"{path}.role"),
            central_message=_expect(obj["central_message"], str, f"{path}.central_message"),
            bullets=_str_items(obj["bullets"], f"{path}.bullets"),
            figure_refs=tuple(
                FigureRef.from_json_obj(r, f"{path}.figure_refs[{i}]")
                for i, r in enumerate(figure_refs)
            ),
            table_refs=_str_items(obj["table_refs"], f"{path}.table_refs"),
            equation_refs=tuple(
                _expect(r, int, f"{path}.equation_refs[{i}]") for i, r in enumerate(equation_refs)
            ),
            speaker_notes=_expect(obj["speaker_notes"], str, f"{path}.speaker_notes"),
            importance=_expect(obj["importance"], int, f"{path}.importance"),
        )


@dataclass(frozen=True)
class PlanMeta:
    paper_title: str
    authors: tuple[str, ...]
    theme_name: str

    def to_json_obj(self) -> dict:
        return {
            "paper_title": self.paper_title,
            "authors": list(self.authors),
            "theme_name": self.theme_name,
        }

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "PlanMeta":
        _take(obj, ("paper_title", "authors", "theme_name"), path)
        return cls(
            paper_title=_expect(obj["paper_title"], str, f"{path}.paper_title"),
            authors=_str_items(obj["authors"], f"{path}.authors"),
            theme_name=_expect(obj["theme_name"], str, f"{path}.theme_name"),
        )


@dataclass(frozen=True)
class SlidePlan:
    """An ordered slide plan for one document."""

    meta: PlanMeta
    slides: tuple[SlideSpec, ...]

    def slide_at(self, index: int) -> SlideSpec:
        for slide in self.slides:
            if slide.index == index:
                return slide
        raise SchemaError(f"plan has no slide with index {index}")

    def with_replaced_slide(self, slide: SlideSpec) -> "SlidePlan":
        """Swap in a slide by index; order and the other slides are untouched."""
        slides = tuple(slide if s.index == slide.index else s for s in self.slides)
        if slide not in slides:
            raise SchemaError(f"plan has no slide with index {slide.index}")
        return replace(self, slides=slides)

    def with_slide_inserted_after(self, after_index: int, slide: SlideSpec) -> "SlidePlan":
        """Insert a slide after position after_index and reindex 1..N."""
        out: list[SlideSpec] = []
        placed = False
        for s in self.slides:
            out.append(s)
            if s.index == after_index:
                out.append(slide)
                placed = True
        if not placed:
            raise SchemaError(f"plan has no slide with index {after_index}")
        return replace(
            self, slides=tuple(s.with_index(i) for i, s in enumerate(out, start=1))
        )

    def to_json_obj(self) -> dict:
        return {
            "meta": self.meta.to_json_obj(),
            "slides": [s.to_json_obj() for s in self.slides],
        }

    @classmethod
    def from_json_obj(cls, obj: Any) -> "SlidePlan":
        _take(obj, ("meta", "slides"), "plan")
        slides = _expect(obj["slides"], list, "plan.slides")
        return cls(
            meta=PlanMeta.from_json_obj(obj["meta"], "plan.meta"),
            slides=tuple(
                SlideSpec.from_json_obj(s, f"plan.slides[{i}]") for i, s in enumerate(slides)
            ),
        )


@dataclass(frozen=True)
class DeckSource:
    """A Beamer source plus its last compile outcome."""

    latex: str
    theme_name: str
    status: str = STATUS_UNCOMPILED
    log_excerpt: str = ""
    attempts: int = 0
    pdf_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.status not in DECK_STATUSES:
            raise SchemaError(f"deck status '{self.status}' not in {sorted(DECK_STATUSES)}")


@dataclass(frozen=True)
class FlatSlide:
    slide_number: int
    text: str

    def to_json_obj(self) -> dict:
        return {"slide_number": self.slide_number, "text": self.text}

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "FlatSlide":
        _take(obj, ("slide_number", "text"), path)
        return cls(
            slide_number=_expect(obj["slide_number"], int, f"{path}.slide_number"),
            text=_expect(obj["text"], str, f"{path}.text"),
        )


@dataclass(frozen=True)
class FlatDeck:
    """Plain-text slide content, used for judging and previews."""

    slides: tuple[FlatSlide, ...]

    def __post_init__(self) -> None:
        for pos, slide in enumerate(self.slides, start=1):
            if slide.slide_number != pos:
                raise SchemaError(
                    f"slides[{pos - 1}].slide_number: expected {pos}, got {slide.slide_number}"
                )

    def to_json_obj(self) -> dict:
        return {"slides": [s.to_json_obj() for s in self.slides]}

    @classmethod
    def from_json_obj(cls, obj: Any) -> "FlatDeck":
        _take(obj, ("slides",), "flat_deck")
        slides = _expect(obj["slides"], list, "flat_deck.slides")
        return cls(
            slides=tuple(
                FlatSlide.from_json_obj(s, f"flat_deck.slides[{i}]")
                for i, s in enumerate(slides)
            )
        )


@dataclass(frozen=True)
class Violation:
    """One plan validation finding. Violations are data, not exceptions."""

    code: str
    message: str
    slide_index: Optional[int] = None

    def to_json_obj(self) -> dict:
        return {"code": self.code, "message": self.message, "slide_index": self.slide_index}


def _dumps(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def _loads(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{what}: invalid JSON: {exc}") from None


def serialize_document(doc: ParsedDocument) -> str:
    return _dumps(doc.to_json_obj())


def parse_document(text: str) -> ParsedDocument:
    return ParsedDocument.from_json_obj(_loads(text, "document"))


def serialize_plan(plan: SlidePlan) -> str:
    return _dumps(plan.to_json_obj())


def parse_plan(text: str) -> SlidePlan:
    return SlidePlan.from_json_obj(_loads(text, "plan"))


def serialize_flat_deck(deck: FlatDeck) -> str:
    return _dumps(deck.to_json_obj())


def parse_flat_deck(text: str) -> FlatDeck:
    return FlatDeck.from_json_obj(_loads(text, "flat_deck"))


def validate_plan(plan: SlidePlan, doc: ParsedDocument) -> list[Violation]:
    """Check a plan against its source document; returns findings, never raises.

    Checks: contiguous 1-based indices, narrative role ordering for content
    slides (supplemental exempt, but supplemental may not precede all content),
    non-empty central messages, non-empty bullets on content slides, and that
    every media reference resolves to an asset of the document.
    """
    violations: list[Violation] = []
    figure_ids = doc.figure_ids()
    table_ids = doc.table_ids()
    n_equations = len(doc.enhanced_content.equations)

    for pos, slide in enumerate(plan.slides, start=1):
        if slide.index != pos:
            violations.append(
                Violation(
                    "index-gap",
                    f"slide at position {pos} has index {slide.index}",
                    slide.index,
                )
            )

    ordered_roles = [s for s in plan.slides if s.role in ROLE_ORDER]
    for prev, cur in zip(ordered_roles, ordered_roles[1:]):
        if ROLE_ORDER[cur.role] < ROLE_ORDER[prev.role]:
            violations.append(
                Violation(
                    "role-order",
                    f"slide {cur.index} ({cur.role}) appears after"
                    f" slide {prev.index} ({prev.role})",
                    cur.index,
                )
            )

    seen_content = False
    for slide in plan.slides:
        if slide.role in ROLE_ORDER:
            seen_content = True
        elif slide.role == ROLE_SUPPLEMENTAL and not seen_content:
            violations.append(
                Violation(
                    "supplemental-position",
                    f"supplemental slide {slide.index} precedes all content slides",
                    slide.index,
                )
            )

    for slide in plan.slides:
        if not slide.central_message.strip():
            violations.append(
                Violation(
                    "central-message",
                    f"slide {slide.index} has an empty central message",
                    slide.index,
                )
            )
        if slide.role in CONTENT_ROLES and not slide.bullets:
            violations.append(
                Violation(
                    "empty-bullets",
                    f"content slide {slide.index} has no bullets",
                    slide.index,
                )
            )
        for ref in slide.figure_refs:
            if ref.figure_id not in figure_ids:
                violations.append(
                    Violation(
                        "unresolved-figure",
                        f"slide {slide.index} references unknown figure '{ref.figure_id}'",
                        slide.index,
                    )
                )
        for table_id in slide.table_refs:
            if table_id not in table_ids:
                violations.append(
                    Violation(
                        "unresolved-table",
                        f"slide {slide.index} references unknown table '{table_id}'",
                        slide.index,
                    )
                )
        for eq_index in slide.equation_refs:
            if not 0 <= eq_index < n_equations:
                violations.append(
                    Violation(
                        "unresolved-equation",
                        f"slide {slide.index} references equation index {eq_index}"
                        f" outside 0..{n_equations - 1}",
                        slide.index,
                    )
                )
    return violations
