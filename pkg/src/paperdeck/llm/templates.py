"""Prompt templates stored as versioned package assets, one file per agent role.

A template body marks its slots as {UPPER_SNAKE_CASE} placeholders. Rendering
binds every slot exactly once; a missing or unknown binding raises
TemplateError, and no placeholder may survive rendering. Braces that do not
form an upper-snake placeholder (JSON examples, LaTeX) pass through untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from ..errors import TemplateError

_SLOT_RE = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_slots: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "required_slots", frozenset(_SLOT_RE.findall(self.body))
        )

    def render(self, **bindings: str) -> str:
        """Substitute every slot; unused or missing bindings are errors."""
        unknown = set(bindings) - self.required_slots
        if unknown:
            raise TemplateError(
                f"template '{self.template_id}': unknown slots {sorted(unknown)}"
            )
        missing = self.required_slots - set(bindings)
        if missing:
            raise TemplateError(
                f"template '{self.template_id}': missing slots {sorted(missing)}"
            )
        # One pass over the body only: a binding value that itself looks like
        # a placeholder is caller content and must never be re-substituted.
        return _SLOT_RE.sub(lambda m: str(bindings[m.group(1)]), self.body)


def load_template(name: str) -> PromptTemplate:
    """Load a template asset by name from the packaged prompts directory."""
    try:
        body = (
            resources.files("paperdeck.llm").joinpath("prompts", f"{name}.txt").read_text("utf-8")
        )
    except FileNotFoundError:
        raise TemplateError(f"no prompt template asset named '{name}'") from None
    return PromptTemplate(template_id=name, body=body)
