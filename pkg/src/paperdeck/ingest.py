"""Parser stage: PDF to Markdown via an external converter, then LLM-based
extraction of tables and display equations into a ParsedDocument.

The converter is a subprocess described by ConverterConfig.command, an argv
template with {input} and {output_dir} slots. It must emit one Markdown file
plus image files with positional filenames such as _page_0_Figure_1.jpeg into
the output directory.

Extraction never trusts the LLM on content: every returned block must be a
verbatim substring of the Markdown. A block failing that check is re-requested
once and then dropped with a warning. Inline (single-$) math is not extracted;
only display blocks are, controlled by the prompt.
"""

from __future__ import annotations

import datetime as _dt
import logging
import re
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConversionError, ExtractionFidelityError, SchemaError
from .llm.gateway import Gateway, parse_json_payload
from .llm.templates import load_template
from .model import (
    EnhancedContent,
    EquationBlock,
    FigureAsset,
    ParsedDocument,
    TableBlock,
)

logger = logging.getLogger(__name__)

_POSITIONAL_IMAGE_RE = re.compile(
    r"^_page_(\d+)_(?:Figure|Picture)_(\d+)\.(?:jpeg|jpg|png|gif)$", re.IGNORECASE
)
_IMAGE_REF_RE = re.compile(r"!\[(?P<alt>[^\]]*)\]\((?P<target>[^)]+)\)")
_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*)$")
DEFAULT_CHUNK_CHARS = 20000


@dataclass(frozen=True)
class ConverterConfig:
    """How to run the PDF-to-Markdown converter."""

    command: tuple[str, ...]
    asset_dir: str
    timeout: float = 600.0


@dataclass(frozen=True)
class ConversionResult:
    markdown: str
    images: tuple[FigureAsset, ...]
    seconds: float


def convert_pdf(pdf: str | Path, cfg: ConverterConfig) -> ConversionResult:
    """Run the converter subprocess and collect its Markdown and images."""
    pdf_path = Path(pdf)
    if not pdf_path.is_file():
        raise ConversionError(f"input PDF not found: {pdf_path}")
    out_dir = Path(cfg.asset_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    argv = [
        part.replace("{input}", str(pdf_path)).replace("{output_dir}", str(out_dir))
        for part in cfg.command
    ]
    started = time.monotonic()
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=cfg.timeout
        )
    except subprocess.TimeoutExpired:
        raise TimeoutError(
            f"converter timed out after {cfg.timeout}s: {' '.join(argv)}"
        ) from None
    except FileNotFoundError:
        raise ConversionError(f"converter binary not found: {argv[0]}") from None
    seconds = time.monotonic() - started
    if proc.returncode != 0:
        raise ConversionError(
            f"converter exited {proc.returncode}",
            tool_output=(proc.stdout or "") + (proc.stderr or ""),
        )
    markdown = _read_markdown(out_dir)
    if not markdown.strip():
        raise ConversionError(f"converter produced no Markdown in {out_dir}")
    images = _collect_images(out_dir, markdown)
    return ConversionResult(markdown=markdown, images=images, seconds=seconds)


def _read_markdown(out_dir: Path) -> str:
    candidates = sorted(out_dir.glob("*.md"))
    if not candidates:
        raise ConversionError(f"converter produced no .md file in {out_dir}")
    return candidates[0].read_text("utf-8")


def _collect_images(out_dir: Path, markdown: str) -> tuple[FigureAsset, ...]:
    found: list[tuple[int, int, Path]] = []
    for path in out_dir.iterdir():
        match = _POSITIONAL_IMAGE_RE.match(path.name)
        if match:
            found.append((int(match.group(1)), int(match.group(2)), path))
    found.sort(key=lambda item: (item[0], item[1]))
    assets = []
    for n, (_, _, path) in enumerate(found, start=1):
        assets.append(
            FigureAsset(
                id=f"fig{n}",
                filename=path.name,
                path=str(path),
                caption=recover_caption(markdown, path.name),
            )
        )
    return tuple(assets)


def recover_caption(markdown: str, filename: str) -> str:
    """Recover the figure caption adjacent to an image reference.

    The alt text wins when present; otherwise the first non-empty line after
    the reference is taken when it reads like a caption (a "Figure N" lead-in
    or a short plain line). The caption is kept original and unshortened.
    """
    lines = markdown.splitlines()
    for i, line in enumerate(lines):
        ref = _IMAGE_REF_RE.search(line)
        if not ref or filename not in ref.group("target"):
            continue
        alt = ref.group("alt").strip()
        if alt:
            return alt
        for nxt in lines[i + 1 :]:
            text = nxt.strip()
            if not text:
                continue
            if _HEADING_RE.match(text) or _IMAGE_REF_RE.search(text) or text.startswith("|"):
                return ""
            if re.match(r"^(Figure|Fig\.?|Table)\s*\d+", text) or len(text) <= 300:
                return text
            return ""
    return ""


def split_sections(markdown: str) -> list[tuple[str, str]]:
    """Split Markdown into (heading, body) pairs at top-level headings.

    Text before the first heading becomes a section with an empty heading.
    """
    sections: list[tuple[str, list[str]]] = []
    current_heading = ""
    current_body: list[str] = []
    for line in markdown.splitlines():
        match = _HEADING_RE.match(line)
        if match and len(match.group(1)) == 1:
            if current_body or current_heading:
                sections.append((current_heading, current_body))
            current_heading = match.group(2).strip()
            current_body = []
        else:
            current_body.append(line)
    if current_body or current_heading:
        sections.append((current_heading, current_body))
    return [
        (heading, "\n".join(body).strip("\n"))
        for heading, body in sections
        if heading or "\n".join(body).strip()
    ]


def chunk_markdown(markdown: str, max_chars: int = DEFAULT_CHUNK_CHARS) -> list[str]:
    """Chunk the document by top-level heading, further splitting long sections.

    Every chunk is a contiguous substring of the input, so offsets computed
    against the full text stay valid.
    """
    boundaries = [m.start() for m in re.finditer(r"^#\s", markdown, re.MULTILINE)]
    if not boundaries or boundaries[0] != 0:
        boundaries.insert(0, 0)
    boundaries.append(len(markdown))
    chunks: list[str] = []
    for start, end in zip(boundaries, boundaries[1:]):
        piece = markdown[start:end]
        while len(piece) > max_chars:
            cut = piece.rfind("\n\n", 0, max_chars)
            if cut <= 0:
                cut = max_chars
            chunks.append(piece[:cut])
            piece = piece[cut:]
        if piece:
            chunks.append(piece)
    return [c for c in chunks if c.strip()]


def extract_enhanced(
    markdown: str,
    gateway: Gateway,
    max_chunk_chars: int = DEFAULT_CHUNK_CHARS,
) -> EnhancedContent:
    """LLM extraction of tables and display equations with fidelity checks.

    Blocks are gathered per chunk, validated as verbatim substrings of the
    full Markdown, deduplicated by character offset, and returned in document
    order. Table ids are assigned in that order.
    """
    system = load_template("parser_extract").body
    user_template = load_template("parser_extract_user")
    tables: dict[int, dict] = {}
    equations: dict[int, dict] = {}
    for chunk in chunk_markdown(markdown, max_chunk_chars):
        raw = _extract_chunk(chunk, markdown, gateway, system, user_template)
        for entry in raw["tables"]:
            offset = markdown.find(entry["markdown_content"])
            tables.setdefault(offset, entry)
        for entry in raw["equations"]:
            offset = markdown.find(entry["latex"])
            equations.setdefault(offset, entry)
    table_blocks = tuple(
        TableBlock(
            id=f"table{n}",
            title=entry.get("title", ""),
            markdown_content=entry["markdown_content"],
            description=entry.get("description", ""),
        )
        for n, (_, entry) in enumerate(sorted(tables.items()), start=1)
    )
    equation_blocks = tuple(
        EquationBlock(
            latex=entry["latex"],
            description=entry.get("description", ""),
            context=entry.get("context", ""),
        )
        for _, entry in sorted(equations.items())
    )
    return EnhancedContent(tables=table_blocks, equations=equation_blocks)


def _extract_chunk(chunk, markdown, gateway, system, user_template) -> dict:
    user = user_template.render(CHUNK_TEXT=chunk)
    response = gateway.complete(system, user)
    blocks = _parse_blocks(response)
    retried = False
    verified: dict[str, list[dict]] = {"tables": [], "equations": []}
    for kind, content_key in (("tables", "markdown_content"), ("equations", "latex")):
        for entry in blocks[kind]:
            content = entry.get(content_key)
            if isinstance(content, str) and content and content in markdown:
                verified[kind].append(entry)
                continue
            # Fidelity miss: one fresh request for the whole chunk, keeping
            # only blocks that now verify; the offending block may be dropped.
            if not retried:
                retried = True
                logger.warning(
                    "block failed verbatim check, re-requesting chunk: %r",
                    ExtractionFidelityError(str(content)[:80]),
                )
                blocks = _parse_blocks(gateway.complete(system, user))
                return _filter_verbatim(blocks, markdown)
            logger.warning("dropping non-verbatim block: %r", str(content)[:80])
    return verified


def _filter_verbatim(blocks: dict, markdown: str) -> dict:
    out: dict[str, list[dict]] = {"tables": [], "equations": []}
    for kind, content_key in (("tables", "markdown_content"), ("equations", "latex")):
        for entry in blocks[kind]:
            content = entry.get(content_key)
            if isinstance(content, str) and content and content in markdown:
                out[kind].append(entry)
            else:
                logger.warning("dropping non-verbatim block after retry: %r", str(content)[:80])
    return out


def _parse_blocks(response: str) -> dict:
    payload = parse_json_payload(response)
    if not isinstance(payload, dict):
        raise SchemaError("extraction response must be a JSON object")
    out = {"tables": [], "equations": []}
    for kind in ("tables", "equations"):
        entries = payload.get(kind, [])
        if not isinstance(entries, list):
            raise SchemaError(f"extraction response '{kind}' must be a list")
        out[kind] = [e for e in entries if isinstance(e, dict)]
    return out


def assemble_document(
    pdf_path: str,
    markdown: str,
    images: tuple[FigureAsset, ...],
    enhanced: EnhancedContent,
    session_id: str,
    conversion_seconds: float = 0.0,
    extraction_time: Optional[str] = None,
) -> ParsedDocument:
    """Build the final ParsedDocument; model invariants are enforced on construction."""
    return ParsedDocument(
        full_text=markdown,
        images=images,
        pdf_path=pdf_path,
        extraction_time=extraction_time or _dt.datetime.now().isoformat(),
        conversion_time_seconds=conversion_seconds,
        session_id=session_id,
        enhanced_content=enhanced,
    )


def ingest_pdf(
    pdf: str | Path,
    cfg: ConverterConfig,
    gateway: Gateway,
    session_id: str,
    max_chunk_chars: int = DEFAULT_CHUNK_CHARS,
) -> ParsedDocument:
    """Full parser stage: convert, extract, assemble."""
    result = convert_pdf(pdf, cfg)
    enhanced = extract_enhanced(result.markdown, gateway, max_chunk_chars)
    return assemble_document(
        pdf_path=str(pdf),
        markdown=result.markdown,
        images=result.images,
        enhanced=enhanced,
        session_id=session_id,
        conversion_seconds=result.seconds,
    )
