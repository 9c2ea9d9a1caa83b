from .compiler import (
    DEFAULT_MAX_ATTEMPTS,
    EngineConfig,
    compile_and_repair,
    compile_deck,
    extract_log_excerpt,
    repair_loop,
)
from .flatten import (
    FrameRegion,
    check_balanced,
    flatten_deck,
    frame_by_number,
    list_frames,
    renumber_headers,
    strip_latex,
)
from .generator import KNOWN_THEMES, ThemeSpec, generate_latex
from .tables import escape_latex, markdown_table_to_tabular, parse_markdown_table

__all__ = [
    "DEFAULT_MAX_ATTEMPTS",
    "EngineConfig",
    "FrameRegion",
    "KNOWN_THEMES",
    "ThemeSpec",
    "check_balanced",
    "compile_and_repair",
    "compile_deck",
    "escape_latex",
    "extract_log_excerpt",
    "flatten_deck",
    "frame_by_number",
    "generate_latex",
    "list_frames",
    "markdown_table_to_tabular",
    "parse_markdown_table",
    "renumber_headers",
    "repair_loop",
    "strip_latex",
]
