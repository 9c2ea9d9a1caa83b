"""Reference resolution behind the editor's search tool.

Parses the paper's reference list with regexes, ranks entries by keyword hits,
fetches cited full texts (cache, then arXiv by id, then Semantic Scholar by
title), converts fetched PDFs through the ingest converter, and asks the LLM
to distill a slide-ready LaTeX snippet from the retrieved text.

HTTP clients are injected so tests and offline runs use recorded responses;
ReplayHTTPClient provides the cassette, keyed by a URL+params digest.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

from .errors import NoCitationFound, ProviderError, RetrievalError, SnippetError
from .ingest import ConverterConfig, convert_pdf
from .llm.gateway import Gateway, strip_code_fences
from .llm.templates import load_template
from .model import ParsedDocument
from .texgen.flatten import check_balanced

logger = logging.getLogger(__name__)

_REFS_HEADING_RE = re.compile(r"^#{1,3}\s+.*(references|bibliography).*$", re.IGNORECASE)
_ARXIV_ID_RE = re.compile(
    r"(?:arxiv[:\s/]*|arxiv\.org/(?:abs|pdf)/)(\d{4}\.\d{4,5})(?:v\d+)?", re.IGNORECASE
)
_DOI_RE = re.compile(r"\b(10\.\d{4,9}/[^\s,;]+)")
_YEAR_RE = re.compile(r"\b(19|20)\d{2}\b")
_NUMBERED_ENTRY_RE = re.compile(r"^\s*(?:\[\d+\]|\d+\.)\s+")
_QUOTED_TITLE_RE = re.compile(r"[\"“]([^\"”]{8,})[\"”]")

DEFAULT_ARXIV_BASE = "https://arxiv.org"
DEFAULT_S2_BASE = "https://api.semanticscholar.org/graph/v1"


@dataclass(frozen=True)
class CitationEntry:
    raw: str
    title: Optional[str] = None
    authors: tuple[str, ...] = ()
    year: Optional[int] = None
    arxiv_id: Optional[str] = None
    doi: Optional[str] = None

    def fetchable(self) -> bool:
        return bool(self.title or self.arxiv_id or self.doi)

    def digest(self) -> str:
        key = self.arxiv_id or self.doi or self.title or self.raw
        return hashlib.sha256(key.encode("utf-8")).hexdigest()

    def display_name(self) -> str:
        if self.title:
            return self.title
        if self.arxiv_id:
            return f"arXiv:{self.arxiv_id}"
        return self.raw[:80]


@dataclass(frozen=True)
class FetchedPaper:
    citation: CitationEntry
    markdown: str
    source: str  # arxiv | semantic_scholar | cache


@dataclass(frozen=True)
class SnippetResult:
    latex: str
    citation: CitationEntry
    verified: bool  # False when built without retrieved full text


def parse_references(doc: ParsedDocument) -> list[CitationEntry]:
    """Split the references section into entries with extracted metadata.

    The section starts at the last heading matching /references|bibliography/i
    and runs to the next heading of the same or higher level, or the end.
    A document without such a heading has no references: empty list.
    """
    lines = doc.full_text.splitlines()
    heading_index = None
    heading_level = 0
    for i, line in enumerate(lines):
        match = _REFS_HEADING_RE.match(line.strip())
        if match:
            heading_index = i
            heading_level = len(line.strip()) - len(line.strip().lstrip("#"))
    if heading_index is None:
        return []
    section_lines: list[str] = []
    for line in lines[heading_index + 1 :]:
        stripped = line.strip()
        if stripped.startswith("#"):
            level = len(stripped) - len(stripped.lstrip("#"))
            if level <= heading_level:
                break
        section_lines.append(line)
    return [_parse_entry(raw) for raw in _split_entries(section_lines)]


def _split_entries(lines: list[str]) -> list[str]:
    numbered = [line for line in lines if _NUMBERED_ENTRY_RE.match(line)]
    entries: list[str] = []
    if numbered:
        current: list[str] = []
        for line in lines:
            if _NUMBERED_ENTRY_RE.match(line):
                if current:
                    entries.append(" ".join(current).strip())
                current = [line.strip()]
            elif line.strip() and current:
                current.append(line.strip())
        if current:
            entries.append(" ".join(current).strip())
    else:
        block: list[str] = []
        for line in lines:
            if line.strip():
                block.append(line.strip())
            elif block:
                entries.append(" ".join(block))
                block = []
        if block:
            entries.append(" ".join(block))
    return [e for e in entries if e]


def _parse_entry(raw: str) -> CitationEntry:
    arxiv = _ARXIV_ID_RE.search(raw)
    doi = _DOI_RE.search(raw)
    year = _YEAR_RE.search(raw)
    title = None
    quoted = _QUOTED_TITLE_RE.search(raw)
    if quoted:
        title = quoted.group(1).strip().rstrip(".,")
    else:
        body = _NUMBERED_ENTRY_RE.sub("", raw)
        segments = [s.strip() for s in body.split(". ") if len(s.strip()) >= 8]
        # Heuristic: authors come first, the title is the next sentence-like
        # segment without a year or URL in it.
        for segment in segments[1:]:
            if not _YEAR_RE.search(segment) and "http" not in segment.lower():
                title = segment.rstrip(".,")
                break
    return CitationEntry(
        raw=raw,
        title=title,
        year=int(year.group(0)) if year else None,
        arxiv_id=arxiv.group(1) if arxiv else None,
        doi=doi.group(1) if doi else None,
    )


def rank_citations(keywords: list[str], entries: list[CitationEntry]) -> list[CitationEntry]:
    """Order entries by descending keyword hits, source order as tie-break."""
    def score(entry: CitationEntry) -> int:
        haystack = ((entry.title or "") + " " + entry.raw).lower()
        return sum(haystack.count(k.lower()) for k in keywords if k)

    indexed = list(enumerate(entries))
    indexed.sort(key=lambda pair: (-score(pair[1]), pair[0]))
    return [entry for _, entry in indexed]


class HTTPClient(Protocol):
    """The narrow slice of an HTTP client this module needs."""

    def get(self, url: str, params: Optional[dict] = None) -> "HTTPResponse": ...


class HTTPResponse(Protocol):
    status_code: int
    content: bytes

    def json(self) -> dict: ...


class HttpxClient:
    """Default client backed by httpx, with a politeness interval per host."""

    def __init__(self, timeout: float = 60.0, min_interval: float = 1.0) -> None:
        self._timeout = timeout
        self._min_interval = min_interval
        self._last: dict[str, float] = {}

    def get(self, url: str, params: Optional[dict] = None):
        import httpx

        host = url.split("/")[2] if "://" in url else url
        wait = self._last.get(host, 0.0) + self._min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last[host] = time.monotonic()
        return httpx.get(url, params=params, timeout=self._timeout, follow_redirects=True)


def _http_digest(url: str, params: Optional[dict]) -> str:
    payload = json.dumps({"url": url, "params": params or {}}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class _ReplayResponse:
    status_code: int
    content: bytes

    def json(self) -> dict:
        return json.loads(self.content.decode("utf-8"))


class ReplayHTTPClient:
    """Cassette-backed HTTP client for offline runs and tests.

    The cassette maps a URL+params digest to {status, body_b64}. Replay mode
    raises on a miss; record mode delegates to an inner client and appends.
    """

    def __init__(self, path: str | Path, mode: str = "replay", inner=None) -> None:
        if mode not in ("replay", "record"):
            raise ValueError(f"cassette mode '{mode}' must be replay or record")
        if mode == "record" and inner is None:
            raise ValueError("record mode needs an inner client")
        self._path = Path(path)
        self._mode = mode
        self._inner = inner
        self._entries: dict[str, dict] = {}
        if self._path.exists():
            self._entries = json.loads(self._path.read_text("utf-8"))
        elif mode == "replay":
            raise ProviderError(f"HTTP cassette not found: {self._path}")

    def get(self, url: str, params: Optional[dict] = None):
        digest = _http_digest(url, params)
        if digest in self._entries:
            entry = self._entries[digest]
            return _ReplayResponse(
                status_code=entry["status"],
                content=base64.b64decode(entry["body_b64"]),
            )
        if self._mode == "replay":
            raise ProviderError(f"HTTP cassette has no entry for {url}")
        response = self._inner.get(url, params=params)
        self._entries[digest] = {
            "status": response.status_code,
            "body_b64": base64.b64encode(response.content).decode("ascii"),
        }
        self._path.write_text(json.dumps(self._entries, indent=2) + "\n", "utf-8")
        return response


@dataclass(frozen=True)
class FetchConfig:
    cache_dir: str
    converter: ConverterConfig
    arxiv_base: str = DEFAULT_ARXIV_BASE
    s2_base: str = DEFAULT_S2_BASE


def fetch_fulltext(
    entry: CitationEntry, client: HTTPClient, cfg: FetchConfig
) -> FetchedPaper:
    """Retrieve a cited work's full text as Markdown: cache, arXiv, then S2."""
    if not entry.fetchable():
        raise RetrievalError(
            f"citation has no title, arXiv id, or DOI: {entry.raw[:80]!r}", attempts=[]
        )
    cache_dir = Path(cfg.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    cache_file = cache_dir / f"{entry.digest()}.md"
    if cache_file.is_file():
        return FetchedPaper(
            citation=entry, markdown=cache_file.read_text("utf-8"), source="cache"
        )
    attempts: list[str] = []
    pdf_bytes = None
    source = ""
    if entry.arxiv_id:
        url = f"{cfg.arxiv_base}/pdf/{entry.arxiv_id}"
        try:
            response = client.get(url)
            if response.status_code == 200 and response.content:
                pdf_bytes, source = response.content, "arxiv"
            else:
                attempts.append(f"arxiv: HTTP {response.status_code}")
        except Exception as exc:  # noqa: BLE001 - every route failure is recorded
            attempts.append(f"arxiv: {exc}")
    if pdf_bytes is None and entry.title:
        try:
            params = {"query": entry.title, "fields": "title,openAccessPdf,year", "limit": "5"}
            if entry.year:
                params["year"] = str(entry.year)
            response = client.get(f"{cfg.s2_base}/paper/search", params=params)
            if response.status_code != 200:
                attempts.append(f"semantic_scholar: HTTP {response.status_code}")
            else:
                pdf_url = _pick_s2_pdf(response.json(), entry.title)
                if pdf_url is None:
                    attempts.append("semantic_scholar: no open-access match")
                else:
                    pdf_response = client.get(pdf_url)
                    if pdf_response.status_code == 200 and pdf_response.content:
                        pdf_bytes, source = pdf_response.content, "semantic_scholar"
                    else:
                        attempts.append(
                            f"semantic_scholar: pdf HTTP {pdf_response.status_code}"
                        )
        except Exception as exc:  # noqa: BLE001
            attempts.append(f"semantic_scholar: {exc}")
    if pdf_bytes is None:
        raise RetrievalError(
            f"all retrieval routes failed for {entry.display_name()!r}", attempts=attempts
        )
    pdf_path = cache_dir / f"{entry.digest()}.pdf"
    pdf_path.write_bytes(pdf_bytes)
    convert_dir = cache_dir / entry.digest()
    converter = ConverterConfig(
        command=cfg.converter.command,
        asset_dir=str(convert_dir),
        timeout=cfg.converter.timeout,
    )
    result = convert_pdf(pdf_path, converter)
    cache_file.write_text(result.markdown, "utf-8")
    return FetchedPaper(citation=entry, markdown=result.markdown, source=source)


def _pick_s2_pdf(payload: dict, title: str) -> Optional[str]:
    data = payload.get("data")
    if not isinstance(data, list):
        return None
    lowered = title.lower()
    for item in data:
        if not isinstance(item, dict):
            continue
        candidate = (item.get("title") or "").lower()
        pdf = item.get("openAccessPdf") or {}
        url = pdf.get("url") if isinstance(pdf, dict) else None
        if url and (lowered in candidate or candidate in lowered or not candidate):
            return url
    for item in data:
        if isinstance(item, dict):
            pdf = item.get("openAccessPdf") or {}
            url = pdf.get("url") if isinstance(pdf, dict) else None
            if url:
                return url
    return None


def extract_snippet(
    paper: FetchedPaper,
    insertion_context: str,
    gateway: Gateway,
    max_source_chars: int = 12000,
) -> SnippetResult:
    """Distill the fetched text into one balanced, frame-ready LaTeX block."""
    system = load_template("snippet").body
    user = load_template("snippet_user").render(
        SOURCE_TITLE=paper.citation.display_name(),
        INSERTION_CONTEXT=insertion_context or "(none given)",
        SOURCE_TEXT=paper.markdown[:max_source_chars],
    )
    last_reason = ""
    for attempt in range(2):
        snippet = strip_code_fences(gateway.complete(system, user))
        reason = check_balanced(snippet)
        if reason is None and snippet.strip():
            return SnippetResult(
                latex=_ensure_credit(snippet, paper.citation),
                citation=paper.citation,
                verified=True,
            )
        last_reason = reason or "empty snippet"
        if attempt == 0:
            logger.warning("snippet rejected (%s), re-prompting", last_reason)
    raise SnippetError(f"snippet invalid after retry: {last_reason}")


def _ensure_credit(snippet: str, citation: CitationEntry) -> str:
    """Guarantee the snippet credits its source work."""
    name = citation.display_name()
    probe = citation.title or citation.arxiv_id or ""
    if probe and probe.lower() in snippet.lower():
        return snippet
    return snippet.rstrip() + f"\n{{\\scriptsize Source: {name}}}"


def search_cited_material(
    doc: ParsedDocument,
    keywords: list[str],
    insertion_context: str,
    gateway: Gateway,
    client: HTTPClient,
    cfg: FetchConfig,
    fetch_count: int = 1,
    allow_unverified: bool = True,
) -> SnippetResult:
    """End-to-end search: parse references, rank, fetch, extract.

    When every fetch fails the snippet is still produced from the citation
    metadata alone, flagged unverified, so an interactive edit can proceed.
    allow_unverified=False propagates the RetrievalError instead.
    """
    entries = parse_references(doc)
    if not entries:
        raise NoCitationFound("document has no reference entries")
    ranked = [e for e in rank_citations(keywords, entries) if e.fetchable()]
    if not ranked:
        raise NoCitationFound("no fetchable citation matches the request")
    errors: list[str] = []
    last_error: Optional[RetrievalError] = None
    for entry in ranked[: max(1, fetch_count)]:
        try:
            paper = fetch_fulltext(entry, client, cfg)
        except RetrievalError as exc:
            errors.append(str(exc))
            last_error = exc
            continue
        return extract_snippet(paper, insertion_context, gateway)
    if not allow_unverified and last_error is not None:
        raise last_error
    top = ranked[0]
    logger.warning(
        "fetch failed for all candidates (%s); building unverified snippet", "; ".join(errors)
    )
    stub = FetchedPaper(
        citation=top,
        markdown=f"(full text unavailable; cite from general knowledge)\n{top.raw}",
        source="cache",
    )
    result = extract_snippet(stub, insertion_context, gateway)
    return SnippetResult(latex=result.latex, citation=result.citation, verified=False)
