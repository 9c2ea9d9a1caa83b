"""Frame-level structure of a Beamer source, plus flattening to plain text.

Frames are recognized by their \\begin{frame}...\\end{frame} spans together
with the structured comment header "% slide:<N>" the generator writes above
each frame. The header makes numeric locate exact, and renumber_headers keeps
the headers consecutive after frames are inserted or deleted.

The plain-text strip rule for slides.json is normative for this artifact:
comments are removed; \\note blocks are dropped; environment tags, math
delimiters, and commands are stripped while single-brace command arguments
keep their content; escaped specials become their literal characters; the
result carries no LaTeX control sequences.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..errors import FlattenError
from ..model import FlatDeck, FlatSlide

SLIDE_HEADER_RE = re.compile(r"^% slide:(\d+)[ \t]*$", re.MULTILINE)
_BEGIN_FRAME_RE = re.compile(r"\\begin\{frame\}")
_END_FRAME = "\\end{frame}"


@dataclass(frozen=True)
class FrameRegion:
    """One frame's span within a deck source.

    start/end cover the header comment (when present) through the end of
    \\end{frame}; body_start points at \\begin{frame}.
    """

    position: int
    header_number: Optional[int]
    start: int
    body_start: int
    end: int
    title: str


def list_frames(latex: str) -> list[FrameRegion]:
    """Locate every frame block in source order. Frames do not nest."""
    frames: list[FrameRegion] = []
    for position, match in enumerate(_BEGIN_FRAME_RE.finditer(latex), start=1):
        body_start = match.start()
        end_marker = latex.find(_END_FRAME, match.end())
        if end_marker == -1:
            break
        end = end_marker + len(_END_FRAME)
        start = body_start
        header_number = None
        line_start = latex.rfind("\n", 0, body_start) + 1
        preceding = latex[:line_start]
        prev_line_start = preceding.rfind("\n", 0, max(len(preceding) - 1, 0)) + 1
        prev_line = preceding[prev_line_start:].rstrip("\n")
        header_match = re.match(r"^% slide:(\d+)[ \t]*$", prev_line)
        if header_match and latex[line_start:body_start].strip() == "":
            header_number = int(header_match.group(1))
            start = prev_line_start
        frames.append(
            FrameRegion(
                position=position,
                header_number=header_number,
                start=start,
                body_start=body_start,
                end=end,
                title=_frame_title(latex[body_start:end]),
            )
        )
    return frames


def _frame_title(frame_text: str) -> str:
    match = re.search(r"\\begin\{frame\}\{([^{}]*)\}", frame_text)
    if match:
        return match.group(1)
    match = re.search(r"\\frametitle\{([^{}]*)\}", frame_text)
    return match.group(1) if match else ""


def frame_by_number(latex: str, number: int) -> Optional[FrameRegion]:
    """Resolve a frame by its % slide:N header, falling back to position."""
    frames = list_frames(latex)
    for frame in frames:
        if frame.header_number == number:
            return frame
    for frame in frames:
        if frame.header_number is None and frame.position == number:
            return frame
    return None


def renumber_headers(latex: str) -> str:
    """Rewrite every frame's header to its current position, adding missing ones.

    Bytes outside header lines are untouched, so frame bodies survive
    verbatim.
    """
    frames = list_frames(latex)
    out: list[str] = []
    cursor = 0
    for frame in frames:
        header = f"% slide:{frame.position}\n"
        if frame.header_number is None:
            out.append(latex[cursor : frame.body_start])
            if frame.body_start > 0 and latex[frame.body_start - 1] != "\n":
                out.append("\n")
            out.append(header)
            cursor = frame.body_start
        else:
            out.append(latex[cursor : frame.start])
            out.append(header)
            cursor = latex.find("\n", frame.start) + 1
        out.append(latex[cursor : frame.end])
        cursor = frame.end
    out.append(latex[cursor:])
    return "".join(out)


_NOTE_RE = re.compile(r"\\note\s*\{")


def _drop_note_blocks(text: str) -> str:
    """Remove \\note{...} including nested braces."""
    out = []
    pos = 0
    while True:
        match = _NOTE_RE.search(text, pos)
        if not match:
            out.append(text[pos:])
            break
        out.append(text[pos : match.start()])
        depth = 1
        i = match.end()
        while i < len(text) and depth:
            ch = text[i]
            if ch == "\\" and i + 1 < len(text):
                i += 2
                continue
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
            i += 1
        pos = i
    return "".join(out)


_COMMENT_RE = re.compile(r"(?<!\\)%[^\n]*")
_MATH_DELims = [
    (re.compile(r"\\\["), " "),
    (re.compile(r"\\\]"), " "),
    (re.compile(r"\\\("), " "),
    (re.compile(r"\\\)"), " "),
    (re.compile(r"(?<!\\)\$\$?"), " "),
]
_INCLUDEGRAPHICS_RE = re.compile(r"\\includegraphics(\[[^\]]*\])?\{[^{}]*\}")
_ENV_TAG_RE = re.compile(r"\\(begin|end)\{[^{}]*\}")
_CMD_WITH_ARG_RE = re.compile(r"\\[a-zA-Z]+\*?(\[[^\]]*\])?\{([^{}]*)\}")
_CMD_BARE_RE = re.compile(r"\\[a-zA-Z]+\*?(\[[^\]]*\])?")
_ESCAPED_SPECIALS = [
    ("\\%", "%"),
    ("\\&", "&"),
    ("\\_", "_"),
    ("\\#", "#"),
    ("\\$", "$"),
    ("\\{", "{"),
    ("\\}", "}"),
]


def strip_latex(fragment: str) -> str:
    """Reduce a LaTeX fragment to plain text under the normative strip rule."""
    text = _drop_note_blocks(fragment)
    text = _COMMENT_RE.sub("", text)
    for pattern, repl in _MATH_DELims:
        text = pattern.sub(repl, text)
    text = _INCLUDEGRAPHICS_RE.sub(" ", text)
    text = _ENV_TAG_RE.sub(" ", text)
    while True:
        new = _CMD_WITH_ARG_RE.sub(lambda m: " " + m.group(2) + " ", text)
        if new == text:
            break
        text = new
    for escaped, literal in _ESCAPED_SPECIALS:
        text = text.replace(escaped, literal)
    text = text.replace("\\\\", " ")
    text = _CMD_BARE_RE.sub(" ", text)
    text = re.sub(r"\\[^a-zA-Z\s]", " ", text)
    text = text.replace("{", " ").replace("}", " ")
    text = re.sub(r"\s+", " ", text)
    return text.strip()


def check_balanced(fragment: str) -> Optional[str]:
    """Structural balance check for a LaTeX fragment.

    Returns None when every \\begin has its matching \\end in order and
    unescaped braces balance; otherwise a human-readable reason.
    """
    text = _COMMENT_RE.sub("", fragment)
    stack: list[str] = []
    for match in re.finditer(r"\\(begin|end)\{([^{}]*)\}", text):
        kind, env = match.group(1), match.group(2)
        if kind == "begin":
            stack.append(env)
        elif not stack:
            return f"\\end{{{env}}} without matching \\begin"
        elif stack[-1] != env:
            return f"\\end{{{env}}} closes \\begin{{{stack[-1]}}}"
        else:
            stack.pop()
    if stack:
        return f"unclosed environment \\begin{{{stack[-1]}}}"
    depth = 0
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            i += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return "unmatched closing brace"
        i += 1
    if depth != 0:
        return f"{depth} unclosed brace(s)"
    return None


def flatten_deck(latex: str) -> FlatDeck:
    """Flatten a deck to numbered plain-text slides."""
    frames = list_frames(latex)
    if not frames:
        raise FlattenError("source contains no frame environments")
    slides = []
    for number, frame in enumerate(frames, start=1):
        body = latex[frame.body_start : frame.end]
        slides.append(FlatSlide(slide_number=number, text=strip_latex(body)))
    return FlatDeck(slides=tuple(slides))
