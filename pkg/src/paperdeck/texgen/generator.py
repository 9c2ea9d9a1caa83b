"""Beamer source generation from a SlidePlan.

One LLM call per slide produces the frame's textual content. Media never
passes through the model: the frame prompt asks for %%FIGURE:id%%,
%%TABLE:id%% and %%EQUATION:k%% markers, which this module expands
deterministically afterward, so referenced equations land byte-identical and
tables go through markdown_table_to_tabular. A frame whose markers are
missing gets its media blocks appended before \\end{frame} instead.

Every frame is prefixed with a "% slide:<index>" comment header; the editor's
numeric locate resolves against these.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from ..errors import GenerationError, SchemaError, TableShapeError
from ..llm.gateway import Gateway, strip_code_fences
from ..llm.templates import load_template
from ..model import DeckSource, ParsedDocument, SlidePlan, SlideSpec, STATUS_UNCOMPILED
from .flatten import check_balanced
from .tables import escape_latex, markdown_table_to_tabular

logger = logging.getLogger(__name__)

# The stock Beamer themes; a theme name outside this set cannot compile.
KNOWN_THEMES = frozenset(
    {
        "default",
        "AnnArbor",
        "Antibes",
        "Bergen",
        "Berkeley",
        "Berlin",
        "Boadilla",
        "CambridgeUS",
        "Copenhagen",
        "Darmstadt",
        "Dresden",
        "EastLansing",
        "Frankfurt",
        "Goettingen",
        "Hannover",
        "Ilmenau",
        "JuanLesPins",
        "Luebeck",
        "Madrid",
        "Malmoe",
        "Marburg",
        "Montpellier",
        "PaloAlto",
        "Pittsburgh",
        "Rochester",
        "Singapore",
        "Szeged",
        "Warsaw",
    }
)


@dataclass(frozen=True)
class ThemeSpec:
    name: str = "Madrid"
    color_scheme: str = "default"

    def __post_init__(self) -> None:
        if self.name not in KNOWN_THEMES:
            raise SchemaError(
                f"'{self.name}' is not a known Beamer theme"
            )


_MARKER_RE = re.compile(
    r"^[ \t]*%%(FIGURE|TABLE|EQUATION):([A-Za-z0-9_]+)%%[ \t]*$", re.MULTILINE
)
_FRAME_COUNT_RE = re.compile(r"\\begin\{frame\}")


def generate_latex(
    plan: SlidePlan,
    doc: ParsedDocument,
    theme: ThemeSpec,
    gateway: Gateway,
) -> DeckSource:
    """Render the plan into a complete, uncompiled Beamer source."""
    frames = [
        _generate_frame(slide, doc, gateway) for slide in plan.slides
    ]
    parts = [_preamble(plan, theme), "\\begin{document}\n"]
    for index, frame in enumerate(frames, start=1):
        parts.append(f"% slide:{index}\n{frame}\n")
    parts.append("\\end{document}\n")
    return DeckSource(
        latex="\n".join(parts),
        theme_name=theme.name,
        status=STATUS_UNCOMPILED,
    )


def _preamble(plan: SlidePlan, theme: ThemeSpec) -> str:
    lines = [
        "\\documentclass{beamer}",
        f"\\usetheme{{{theme.name}}}",
    ]
    if theme.color_scheme and theme.color_scheme != "default":
        lines.append(f"\\usecolortheme{{{theme.color_scheme}}}")
    lines.append("\\usepackage{graphicx}")
    lines.append(f"\\title{{{escape_latex(plan.meta.paper_title)}}}")
    if plan.meta.authors:
        lines.append(f"\\author{{{escape_latex(', '.join(plan.meta.authors))}}}")
    return "\n".join(lines) + "\n"


def _generate_frame(slide: SlideSpec, doc: ParsedDocument, gateway: Gateway) -> str:
    system = load_template("generator_slide").body
    user = load_template("generator_slide_user").render(
        SLIDE_JSON=json.dumps(slide.to_json_obj(), ensure_ascii=False, indent=2),
        MEDIA_NOTES=_media_notes(slide, doc),
    )
    last_reason = ""
    for attempt in range(2):
        response = strip_code_fences(gateway.complete(system, user))
        reason = _validate_frame(response)
        if reason is None:
            return _expand_markers(response, slide, doc, gateway)
        last_reason = reason
        if attempt == 0:
            logger.warning("frame %d rejected (%s), re-prompting", slide.index, reason)
    raise GenerationError(
        f"slide {slide.index}: generated frame is invalid after retry: {last_reason}"
    )


def _validate_frame(frame_text: str) -> str | None:
    begins = len(_FRAME_COUNT_RE.findall(frame_text))
    ends = frame_text.count("\\end{frame}")
    if begins != 1 or ends != 1:
        return f"expected exactly one frame environment, found {begins} begin/{ends} end"
    stripped = frame_text.strip()
    if not stripped.startswith("\\begin{frame}") or not stripped.endswith("\\end{frame}"):
        return "content outside the frame environment"
    return check_balanced(frame_text)


def _media_notes(slide: SlideSpec, doc: ParsedDocument) -> str:
    lines = []
    figures = {img.id: img for img in doc.images}
    tables = {t.id: t for t in doc.enhanced_content.tables}
    for ref in slide.figure_refs:
        if ref.figure_id in figures:
            lines.append(
                f"- figure {ref.figure_id} (marker %%FIGURE:{ref.figure_id}%%):"
                f" {ref.short_caption}"
            )
    for table_id in slide.table_refs:
        if table_id in tables:
            title = tables[table_id].title or tables[table_id].description
            lines.append(f"- table {table_id} (marker %%TABLE:{table_id}%%): {title}")
    for k in slide.equation_refs:
        if 0 <= k < len(doc.enhanced_content.equations):
            eq = doc.enhanced_content.equations[k]
            lines.append(
                f"- equation {k} (marker %%EQUATION:{k}%%): {eq.description or eq.latex[:60]}"
            )
    return "\n".join(lines) if lines else "(none)"


def _expand_markers(
    frame_text: str, slide: SlideSpec, doc: ParsedDocument, gateway: Gateway
) -> str:
    figures = {img.id: img for img in doc.images}
    tables = {t.id: t for t in doc.enhanced_content.tables}
    equations = doc.enhanced_content.equations
    captions = {ref.figure_id: ref.short_caption for ref in slide.figure_refs}
    expanded: set[tuple[str, str]] = set()

    def _block(kind: str, key: str) -> str | None:
        if kind == "FIGURE" and key in figures and key in captions:
            return _figure_block(figures[key].path, captions[key])
        if kind == "TABLE" and key in tables:
            return _table_block(tables[key].markdown_content, gateway)
        if kind == "EQUATION":
            try:
                k = int(key)
            except ValueError:
                return None
            if 0 <= k < len(equations):
                return _equation_block(equations[k].latex)
        return None

    def _substitute(match: re.Match) -> str:
        kind, key = match.group(1), match.group(2)
        block = _block(kind, key)
        if block is None:
            logger.warning("dropping unknown media marker %%%%%s:%s%%%%", kind, key)
            return ""
        expanded.add((kind, key))
        return block

    out = _MARKER_RE.sub(_substitute, frame_text)

    # Media the model forgot to place is appended before \end{frame} so a
    # referenced asset never silently vanishes from the deck.
    missing: list[str] = []
    for ref in slide.figure_refs:
        if ("FIGURE", ref.figure_id) not in expanded and ref.figure_id in figures:
            missing.append(_figure_block(figures[ref.figure_id].path, ref.short_caption))
    for table_id in slide.table_refs:
        if ("TABLE", table_id) not in expanded and table_id in tables:
            missing.append(_table_block(tables[table_id].markdown_content, gateway))
    for k in slide.equation_refs:
        if ("EQUATION", str(k)) not in expanded and 0 <= k < len(equations):
            missing.append(_equation_block(equations[k].latex))
    if missing:
        insertion = "\n".join(missing) + "\n"
        out = out.replace("\\end{frame}", insertion + "\\end{frame}", 1)
    return out


def _figure_block(path: str, caption: str) -> str:
    return (
        "\\begin{center}\n"
        f"\\includegraphics[width=0.75\\textwidth]{{{path}}}\\\\\n"
        f"{{\\footnotesize {escape_latex(caption)}}}\n"
        "\\end{center}"
    )


def _table_block(markdown_content: str, gateway: Gateway) -> str:
    try:
        tabular = markdown_table_to_tabular(markdown_content)
    except TableShapeError as exc:
        # Fallback for tables the mechanical converter rejects.
        logger.warning("table conversion failed (%s); using LLM fallback", exc)
        system = load_template("table_fallback").body
        tabular = strip_code_fences(gateway.complete(system, markdown_content))
        reason = check_balanced(tabular)
        if reason is not None or "\\begin{tabular}" not in tabular:
            raise GenerationError(
                f"table fallback produced invalid tabular: {reason or 'no tabular env'}"
            ) from exc
    return "\\begin{center}\n" + tabular + "\n\\end{center}"


_DISPLAY_MATH_LEADS = ("$$", "\\[", "\\begin{equation", "\\begin{align")


def _equation_block(latex: str) -> str:
    # The extracted string embeds byte-identically; only add delimiters when
    # the block does not already carry its own.
    if latex.lstrip().startswith(_DISPLAY_MATH_LEADS):
        return latex
    return "\\[\n" + latex + "\n\\]"
