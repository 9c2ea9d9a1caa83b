"""Exception hierarchy shared across the package.

Every error raised by paperdeck code derives from PaperdeckError so callers
can catch the whole family at the CLI/service boundary.  Stdlib exceptions
(TimeoutError, EnvironmentError) are reused where they already say the right
thing: converter/engine timeouts and missing external binaries.
"""

from __future__ import annotations


class PaperdeckError(Exception):
    """Base class for all package errors."""


class SchemaError(PaperdeckError):
    """A JSON payload or value object violates the data model contract."""


class TemplateError(PaperdeckError):
    """A prompt template is malformed or was rendered with missing slots."""


class ProviderError(PaperdeckError):
    """An LLM provider failed after retries, or a cassette had no entry."""


class BudgetError(PaperdeckError):
    """The configured LLM call budget for a run was exhausted."""


class ConversionError(PaperdeckError):
    """The PDF-to-Markdown converter subprocess failed."""

    def __init__(self, message: str, tool_output: str = "") -> None:
        super().__init__(message)
        self.tool_output = tool_output


class ExtractionFidelityError(PaperdeckError):
    """An extracted block could not be matched verbatim to the source text."""


class ClassificationError(PaperdeckError):
    """Section classification produced unusable output after a retry."""


class PlanningError(PaperdeckError):
    """Slide planning or drafting produced unusable output after a retry."""


class VerificationError(PaperdeckError):
    """The coverage verifier produced unusable output after a retry."""


class AdjustmentError(PaperdeckError):
    """A coverage repair produced an invalid plan after a retry."""


class GenerationError(PaperdeckError):
    """LaTeX generation produced structurally invalid output after a retry."""


class TableShapeError(PaperdeckError):
    """A Markdown table has rows of unequal width.

    Carries the 1-based row number so callers can report the offending row.
    """

    def __init__(self, message: str, row_number: int) -> None:
        super().__init__(message)
        self.row_number = row_number


class FlattenError(PaperdeckError):
    """A LaTeX source contained no frames to flatten."""


class EditPlanningError(PaperdeckError):
    """An edit request could not be planned into a valid action sequence."""


class RegionNotFound(PaperdeckError):
    """A locate step could not resolve a deck region."""


class StaleRegionError(PaperdeckError):
    """A tool received a region captured against an older deck revision."""


class EditApplyError(PaperdeckError):
    """An edit plan failed mid-application; the deck was rolled back."""

    def __init__(self, message: str, failed_step: int | None = None) -> None:
        super().__init__(message)
        self.failed_step = failed_step


class NoCitationFound(PaperdeckError):
    """The source document has no reference entries to search."""


class RetrievalError(PaperdeckError):
    """All full-text retrieval routes failed for a citation."""

    def __init__(self, message: str, attempts: list[str] | None = None) -> None:
        super().__init__(message)
        self.attempts = attempts or []


class SnippetError(PaperdeckError):
    """Snippet extraction produced unbalanced LaTeX after a retry."""


class VerdictParseError(PaperdeckError):
    """A judge response was not one of the five verdict labels."""


class PipelineStageError(PaperdeckError):
    """A generation stage failed; names the stage and any log artifact."""

    def __init__(self, stage: str, message: str, log_path: str | None = None) -> None:
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.log_path = log_path
