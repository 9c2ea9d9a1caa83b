"""Deterministic Markdown pipe-table to LaTeX tabular conversion.

No LLM is involved here: every cell is carried over mechanically with LaTeX
special characters escaped, so the cell multiset of the output provably equals
the input's. Ragged input raises TableShapeError naming the offending row.
"""

from __future__ import annotations

import re

from ..errors import TableShapeError

# Single-pass character map; applying it per character means escape text never
# gets re-escaped.
LATEX_ESCAPES = {
    "\\": r"\textbackslash{}",
    "&": r"\&",
    "%": r"\%",
    "$": r"\$",
    "#": r"\#",
    "_": r"\_",
    "{": r"\{",
    "}": r"\}",
    "~": r"\textasciitilde{}",
    "^": r"\textasciicircum{}",
}

_UNESCAPED_PIPE = re.compile(r"(?<!\\)\|")
_SEPARATOR_CELL = re.compile(r"^:?-+:?$")


def escape_latex(text: str) -> str:
    return "".join(LATEX_ESCAPES.get(ch, ch) for ch in text)


def split_table_row(line: str) -> list[str]:
    """Split one pipe-table row into cell strings.

    Leading/trailing pipes are delimiters, escaped pipes (\\|) are literal
    cell content, and cells are whitespace-trimmed.
    """
    s = line.strip()
    parts = _UNESCAPED_PIPE.split(s)
    if s.startswith("|"):
        parts = parts[1:]
    if s.endswith("|") and not s.endswith("\\|"):
        parts = parts[:-1]
    return [p.strip().replace("\\|", "|") for p in parts]


def _is_separator(cells: list[str]) -> bool:
    return bool(cells) and all(_SEPARATOR_CELL.match(c.replace(" ", "")) for c in cells)


def parse_markdown_table(md: str) -> tuple[list[str], list[list[str]]]:
    """Parse a pipe table into (header cells, data rows).

    Row numbers in errors are 1-based physical lines of the block: header is
    row 1, the separator row 2, data rows follow.
    """
    lines = [line for line in md.splitlines() if line.strip()]
    if not lines:
        raise TableShapeError("table block is empty", row_number=1)
    header = split_table_row(lines[0])
    if len(lines) < 2 or not _is_separator(split_table_row(lines[1])):
        raise TableShapeError("table has no header separator row", row_number=2)
    separator = split_table_row(lines[1])
    if len(separator) != len(header):
        raise TableShapeError(
            f"row 2 has {len(separator)} cells, expected {len(header)}", row_number=2
        )
    rows: list[list[str]] = []
    for line_number, line in enumerate(lines[2:], start=3):
        cells = split_table_row(line)
        if len(cells) != len(header):
            raise TableShapeError(
                f"row {line_number} has {len(cells)} cells, expected {len(header)}",
                row_number=line_number,
            )
        rows.append(cells)
    return header, rows


def markdown_table_to_tabular(md: str) -> str:
    """Render a Markdown pipe table as a LaTeX tabular string."""
    header, rows = parse_markdown_table(md)
    spec = "l" * len(header)
    out = [f"\\begin{{tabular}}{{{spec}}}", "\\hline"]
    out.append(" & ".join(escape_latex(c) for c in header) + " \\\\")
    out.append("\\hline")
    for row in rows:
        out.append(" & ".join(escape_latex(c) for c in row) + " \\\\")
    if rows:
        out.append("\\hline")
    out.append("\\end{tabular}")
    return "\n".join(out)
