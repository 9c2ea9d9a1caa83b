from .actions import (
    ACTION_DELETE,
    ACTION_INSERT,
    ACTION_LOCATE,
    ACTION_MODIFY,
    ACTION_SEARCH,
    ALL_ACTIONS,
    CodeRegion,
    EditAction,
    EditOutcome,
    EditPlan,
    EditSession,
    HistoryEntry,
    StepOutcome,
    deck_digest,
    deck_outline,
    explicit_frame_number,
    plan_edit,
)
from .apply import append_history, apply_plan
from .tools import (
    extract_keywords,
    tool_delete,
    tool_insert,
    tool_locate,
    tool_modify,
    tool_search,
)

__all__ = [
    "ACTION_DELETE",
    "ACTION_INSERT",
    "ACTION_LOCATE",
    "ACTION_MODIFY",
    "ACTION_SEARCH",
    "ALL_ACTIONS",
    "CodeRegion",
    "EditAction",
    "EditOutcome",
    "EditPlan",
    "EditSession",
    "HistoryEntry",
    "StepOutcome",
    "append_history",
    "apply_plan",
    "deck_digest",
    "deck_outline",
    "explicit_frame_number",
    "extract_keywords",
    "plan_edit",
    "tool_delete",
    "tool_insert",
    "tool_locate",
    "tool_modify",
    "tool_search",
]
