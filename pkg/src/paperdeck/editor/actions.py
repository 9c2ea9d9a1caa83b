"""Edit request decomposition: typed actions, plans, and session state.

A revision request becomes an ordered EditPlan of five action kinds. The
plan invariant mirrors how tools consume regions: any mutating action must
be reachable from a locate earlier in the plan or name its frame outright.
"""

from __future__ import annotations

import hashlib
import re
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from ..errors import EditPlanningError, SchemaError
from ..llm.gateway import Gateway, parse_json_payload
from ..llm.templates import load_template
from ..model import DeckSource, ParsedDocument, SlidePlan, _expect, _take
from ..texgen.flatten import list_frames

ACTION_LOCATE = "locate"
ACTION_SEARCH = "search"
ACTION_MODIFY = "modify"
ACTION_INSERT = "insert"
ACTION_DELETE = "delete"
ALL_ACTIONS = (ACTION_LOCATE, ACTION_SEARCH, ACTION_MODIFY, ACTION_INSERT, ACTION_DELETE)
_MUTATING = {ACTION_MODIFY, ACTION_INSERT, ACTION_DELETE}

# "slide 4", "frame #2", "page 3" all count as explicit numbering.
FRAME_NUMBER_RE = re.compile(r"\b(?:slide|frame|page)\s*#?\s*(\d+)", re.IGNORECASE)


def explicit_frame_number(description: str) -> Optional[int]:
    match = FRAME_NUMBER_RE.search(description)
    return int(match.group(1)) if match else None


@dataclass(frozen=True)
class EditAction:
    action: str
    description: str

    def __post_init__(self) -> None:
        if self.action not in ALL_ACTIONS:
            raise SchemaError(f"unknown edit action {self.action!r}")
        if not self.description.strip():
            raise SchemaError("edit action description must be non-empty")

    def to_json_obj(self) -> dict:
        return {"action": self.action, "description": self.description}

    @classmethod
    def from_json_obj(cls, obj: Any, path: str) -> "EditAction":
        _take(obj, ("action", "description"), path)
        return cls(
            action=_expect(obj["action"], str, f"{path}.action"),
            description=_expect(obj["description"], str, f"{path}.description"),
        )


@dataclass(frozen=True)
class EditPlan:
    actions: tuple[EditAction, ...]

    def __post_init__(self) -> None:
        located = False
        for i, action in enumerate(self.actions):
            if action.action == ACTION_LOCATE:
                located = True
            elif action.action in _MUTATING:
                if not located and explicit_frame_number(action.description) is None:
                    raise SchemaError(
                        f"actions[{i}]: {action.action} has no preceding locate "
                        "and no explicit frame number"
                    )

    def to_json_obj(self) -> dict:
        return {"actions": [a.to_json_obj() for a in self.actions]}

    @classmethod
    def from_json_obj(cls, obj: Any) -> "EditPlan":
        _take(obj, ("actions",), "edit_plan")
        items = _expect(obj["actions"], list, "edit_plan.actions")
        return cls(
            actions=tuple(
                EditAction.from_json_obj(item, f"edit_plan.actions[{i}]")
                for i, item in enumerate(items)
            )
        )


@dataclass(frozen=True)
class CodeRegion:
    """A located span of deck.latex, pinned to the deck state it came from.

    deck_digest captures the deck hash at locate time; consuming tools
    compare it against the live deck to refuse stale regions.
    """

    start_offset: int
    end_offset: int
    frame_index: Optional[int] = None
    deck_digest: str = ""

    def __post_init__(self) -> None:
        if self.start_offset < 0 or self.end_offset < self.start_offset:
            raise SchemaError(
                f"bad region offsets [{self.start_offset}, {self.end_offset})"
            )

    def text(self, latex: str) -> str:
        if self.end_offset > len(latex):
            raise SchemaError("region extends past the end of the deck source")
        return latex[self.start_offset : self.end_offset]


def deck_digest(latex: str) -> str:
    return hashlib.sha256(latex.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StepOutcome:
    action: str
    description: str
    ok: bool
    detail: str = ""

    def to_json_obj(self) -> dict:
        return {
            "action": self.action,
            "description": self.description,
            "ok": self.ok,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class EditOutcome:
    ok: bool
    steps: tuple[StepOutcome, ...]
    deck: DeckSource
    failed_step: Optional[int] = None
    error: str = ""
    rolled_back: bool = False

    def to_json_obj(self) -> dict:
        return {
            "ok": self.ok,
            "steps": [s.to_json_obj() for s in self.steps],
            "failed_step": self.failed_step,
            "error": self.error,
            "rolled_back": self.rolled_back,
        }


@dataclass(frozen=True)
class HistoryEntry:
    request: str
    plan: EditPlan
    ok: bool
    timestamp: float
    revision: int
    error: str = ""

    def to_json_obj(self) -> dict:
        return {
            "request": self.request,
            "plan": self.plan.to_json_obj(),
            "ok": self.ok,
            "timestamp": self.timestamp,
            "revision": self.revision,
            "error": self.error,
        }


@dataclass
class EditSession:
    """Mutable state of one interactive editing session."""

    session_id: str
    deck: DeckSource
    doc: ParsedDocument
    plan: SlidePlan
    history: list[HistoryEntry] = field(default_factory=list)
    located_region: Optional[CodeRegion] = None
    # The plan IR stops mirroring the LaTeX after the first edit; LaTeX is
    # the source of truth from then on.
    plan_stale: bool = False
    revision: int = 0

    def record(self, request: str, plan: EditPlan, ok: bool, error: str = "") -> HistoryEntry:
        entry = HistoryEntry(
            request=request,
            plan=plan,
            ok=ok,
            timestamp=time.time(),
            revision=self.revision,
            error=error,
        )
        self.history.append(entry)
        return entry


def deck_outline(latex: str) -> str:
    """Numbered frame titles, the planner's view of the deck."""
    frames = list_frames(latex)
    if not frames:
        return "(deck has no frames)"
    lines = []
    for i, frame in enumerate(frames, start=1):
        number = frame.header_number if frame.header_number is not None else i
        title = frame.title or "(untitled)"
        lines.append(f"{number}. {title}")
    return "\n".join(lines)


def plan_edit(request: str, session: EditSession, gateway: Gateway) -> EditPlan:
    """Decompose a natural-language request into an EditPlan."""
    if not session.deck.latex.strip():
        raise EditPlanningError("session has no deck source to edit")
    system = load_template("editor_plan").body
    user = load_template("editor_plan_user").render(
        USER_REQUEST=request, DECK_OUTLINE=deck_outline(session.deck.latex)
    )
    last = ""
    for attempt in range(2):
        response = gateway.complete(system, user)
        try:
            return EditPlan.from_json_obj(parse_json_payload(response))
        except SchemaError as exc:
            last = str(exc)
            if attempt == 0:
                continue
    raise EditPlanningError(
        f"could not turn the request into a valid action plan ({last}); "
        "please rephrase or name the slide number"
    )
