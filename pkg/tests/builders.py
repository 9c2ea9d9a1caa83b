"""Random and minimal builders for model objects, shared across test modules.

random_document/random_plan produce structurally valid objects from a seeded
random.Random, so round-trip sweeps are reproducible without hypothesis.
"""

from __future__ import annotations

import random

from paperdeck.model import (
    EnhancedContent,
    EquationBlock,
    FigureAsset,
    FigureRef,
    ParsedDocument,
    PlanMeta,
    ROLE_CONCLUSION,
    ROLE_MOTIVATION,
    ROLE_OUTLINE,
    ROLE_PROBLEM,
    ROLE_RESULTS,
    ROLE_SUPPLEMENTAL,
    ROLE_TITLE,
    SlidePlan,
    SlideSpec,
    TableBlock,
)

# Deliberately hostile alphabet: JSON metacharacters, LaTeX specials,
# whitespace, and non-ASCII text.
_CHARS = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    " _-.,;:!?()[]<>=+*/|@"
    "\"'\\{}%&$#~^\n\t"
    "éüñßπ∑δ→«»日本語"
)

_CONTENT_ORDER = (ROLE_PROBLEM, ROLE_MOTIVATION, ROLE_RESULTS, ROLE_CONCLUSION)


def text(rng: random.Random, lo: int = 1, hi: int = 40) -> str:
    n = rng.randint(lo, hi)
    # A letter first keeps .strip() non-empty whatever follows.
    return rng.choice("abcdefgXYZ") + "".join(rng.choice(_CHARS) for _ in range(n - 1))


def random_document(rng: random.Random) -> ParsedDocument:
    session_id = str(rng.randrange(10**9, 10**10))
    n_tables = rng.randint(0, 3)
    n_equations = rng.randint(0, 3)
    n_figures = rng.randint(0, 3)

    parts = [f"# {text(rng, 4, 30)}", "", text(rng, 10, 200)]
    tables = []
    for i in range(1, n_tables + 1):
        a, b = rng.randrange(1000), rng.randrange(1000)
        markdown = f"| left{i} | right{i} |\n|---|---|\n| {a} | {b} |"
        parts += ["", markdown, ""]
        tables.append(
            TableBlock(
                id=f"table{i}",
                title=text(rng, 3, 30),
                markdown_content=markdown,
                description=text(rng, 3, 60),
            )
        )
    equations = []
    for k in range(1, n_equations + 1):
        latex = f"y_{{{k}}} = {rng.randrange(100)} x + {rng.randrange(100)}"
        parts += ["", "$$", latex, "$$", ""]
        equations.append(
            EquationBlock(
                latex=latex,
                description=text(rng, 3, 60),
                context=text(rng, 3, 60),
            )
        )
    images = tuple(
        FigureAsset(
            id=f"fig{j}",
            filename=f"_page_{j}_Figure_{j}.jpeg",
            path=f"out/images/{session_id}/_page_{j}_Figure_{j}.jpeg",
            caption=text(rng, 0, 80) if rng.random() > 0.2 else "",
        )
        for j in range(1, n_figures + 1)
    )
    return ParsedDocument(
        full_text="\n".join(parts),
        images=images,
        pdf_path=f"input/{session_id}.pdf",
        extraction_time="2026-04-11T09:30:00",
        conversion_time_seconds=rng.random() * 30,
        session_id=session_id,
        enhanced_content=EnhancedContent(
            tables=tuple(tables), equations=tuple(equations)
        ),
    )


def random_plan(rng: random.Random, doc: ParsedDocument) -> SlidePlan:
    figure_ids = sorted(doc.figure_ids())
    table_ids = sorted(doc.table_ids())
    n_equations = len(doc.enhanced_content.equations)

    roles: list[str] = [ROLE_TITLE, ROLE_OUTLINE]
    for role in _CONTENT_ORDER:
        roles.extend([role] * rng.randint(0, 2))
    if len(roles) == 2:
        roles.append(ROLE_RESULTS)
    roles.extend([ROLE_SUPPLEMENTAL] * rng.randint(0, 2))

    slides = []
    for index, role in enumerate(roles, start=1):
        bullets: tuple[str, ...] = ()
        if role not in (ROLE_TITLE, ROLE_OUTLINE):
            bullets = tuple(text(rng, 2, 60) for _ in range(rng.randint(2, 6)))
        fig_refs = tuple(
            FigureRef(figure_id=f, short_caption=text(rng, 0, 30))
            for f in figure_ids
            if rng.random() < 0.3
        )
        slides.append(
            SlideSpec(
                index=index,
                role=role,
                central_message=text(rng, 4, 80),
                bullets=bullets,
                figure_refs=fig_refs,
                table_refs=tuple(t for t in table_ids if rng.random() < 0.3),
                equation_refs=tuple(
                    k for k in range(n_equations) if rng.random() < 0.3
                ),
                speaker_notes=text(rng, 0, 120) if rng.random() > 0.3 else "",
                importance=rng.randint(1, 9),
            )
        )
    return SlidePlan(
        meta=PlanMeta(
            paper_title=text(rng, 4, 60),
            authors=tuple(text(rng, 3, 25) for _ in range(rng.randint(0, 3))),
            theme_name=rng.choice(("Madrid", "Warsaw", "Berlin", "default")),
        ),
        slides=tuple(slides),
    )


def min_document(
    full_text: str = "# Tiny\n\nBody of the tiny paper.",
    session_id: str = "123456789",
    **overrides,
) -> ParsedDocument:
    values = dict(
        full_text=full_text,
        images=(),
        pdf_path="input/tiny.pdf",
        extraction_time="2026-04-11T09:30:00",
        conversion_time_seconds=0.5,
        session_id=session_id,
        enhanced_content=EnhancedContent(),
    )
    values.update(overrides)
    return ParsedDocument(**values)


def min_plan(n_content: int = 2, theme_name: str = "Madrid") -> SlidePlan:
    roles = [ROLE_TITLE, ROLE_OUTLINE]
    roles += [_CONTENT_ORDER[min(i, 3)] for i in range(n_content)]
    slides = tuple(
        SlideSpec(
            index=i,
            role=role,
            central_message=f"Message {i}",
            bullets=() if role in (ROLE_TITLE, ROLE_OUTLINE) else (f"Point {i}a", f"Point {i}b"),
        )
        for i, role in enumerate(roles, start=1)
    )
    return SlidePlan(
        meta=PlanMeta(paper_title="Tiny", authors=(), theme_name=theme_name),
        slides=slides,
    )
