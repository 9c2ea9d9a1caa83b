"""LaTeX compilation and the bounded LLM repair loop.

The engine is a configurable subprocess command with an {input} slot, run in
the deck's working directory. A failed compile carries a log excerpt: the
window from the first "!" error marker to the next blank line, since full
logs exceed prompt budgets. repair_loop feeds that excerpt plus the faulty
source to the LLM for a fix, recompiles, and stops at the first success or
at max_attempts.
"""

from __future__ import annotations

import logging
import subprocess
from dataclasses import dataclass, replace
from pathlib import Path

from ..llm.gateway import Gateway, strip_code_fences
from ..llm.templates import load_template
from ..model import DeckSource, STATUS_COMPILED, STATUS_FAILED

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_ENGINE_COMMAND = (
    "pdflatex",
    "-interaction=nonstopmode",
    "-halt-on-error",
    "{input}",
)


@dataclass(frozen=True)
class EngineConfig:
    command: tuple[str, ...] = DEFAULT_ENGINE_COMMAND
    timeout: float = 120.0
    tex_name: str = "deck.tex"


def extract_log_excerpt(log_text: str, fallback_lines: int = 10) -> str:
    """The window from the first "!" error line to the next blank line."""
    lines = log_text.splitlines()
    for i, line in enumerate(lines):
        if line.startswith("!"):
            window = []
            for candidate in lines[i:]:
                if not candidate.strip():
                    break
                window.append(candidate)
            return "\n".join(window)
    return "\n".join(lines[-fallback_lines:])


def compile_deck(deck: DeckSource, engine: EngineConfig, workdir: str | Path) -> DeckSource:
    """Write the source into workdir and run the engine once.

    Deterministic in the source: the same latex yields the same status. The
    attempts counter is owned by repair_loop and passes through untouched.
    """
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    tex_path = work / engine.tex_name
    tex_path.write_text(deck.latex, "utf-8")
    argv = [part.replace("{input}", tex_path.name) for part in engine.command]
    try:
        proc = subprocess.run(
            argv, cwd=work, capture_output=True, text=True, timeout=engine.timeout
        )
    except FileNotFoundError:
        raise EnvironmentError(f"LaTeX engine not found: {argv[0]}") from None
    except subprocess.TimeoutExpired:
        raise TimeoutError(f"LaTeX engine timed out after {engine.timeout}s") from None
    pdf_path = tex_path.with_suffix(".pdf")
    log_path = tex_path.with_suffix(".log")
    if proc.returncode == 0 and pdf_path.is_file():
        return replace(
            deck, status=STATUS_COMPILED, pdf_path=str(pdf_path), log_excerpt=""
        )
    log_text = (
        log_path.read_text("utf-8", errors="replace")
        if log_path.is_file()
        else (proc.stdout or "") + (proc.stderr or "")
    )
    return replace(
        deck,
        status=STATUS_FAILED,
        pdf_path=None,
        log_excerpt=extract_log_excerpt(log_text),
    )


def repair_loop(
    deck: DeckSource,
    gateway: Gateway,
    engine: EngineConfig,
    workdir: str | Path,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> DeckSource:
    """LLM-repair a failed deck until it compiles or the attempt limit hits.

    A deck that is not failed comes back unchanged. attempts counts LLM fix
    rounds and never exceeds max_attempts.
    """
    if deck.status != STATUS_FAILED:
        return deck
    system = load_template("repair").body
    user_template = load_template("repair_user")
    attempts = deck.attempts
    while deck.status == STATUS_FAILED and attempts < max_attempts:
        user = user_template.render(
            LOG_EXCERPT=deck.log_excerpt, LATEX_SOURCE=deck.latex
        )
        fixed = strip_code_fences(gateway.complete(system, user))
        attempts += 1
        deck = compile_deck(
            replace(deck, latex=fixed, attempts=attempts), engine, workdir
        )
        logger.info("repair attempt %d -> %s", attempts, deck.status)
    return deck


def compile_and_repair(
    deck: DeckSource,
    gateway: Gateway,
    engine: EngineConfig,
    workdir: str | Path,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> DeckSource:
    """Compile once, then enter the repair loop on failure."""
    deck = compile_deck(deck, engine, workdir)
    if deck.status == STATUS_FAILED:
        deck = repair_loop(deck, gateway, engine, workdir, max_attempts)
    return deck
