"""Planner stage: classification gates, role-derived ordering, figures, drafts."""

import dataclasses
import json

import pytest

from paperdeck.errors import ClassificationError, PlanningError
from paperdeck.ingest import ingest_pdf
from paperdeck.llm.gateway import ScriptedProvider
from paperdeck.model import (
    ROLE_OUTLINE,
    ROLE_SUPPLEMENTAL,
    ROLE_TITLE,
    FigureAsset,
    validate_plan,
)
from paperdeck.planner import (
    FigureMatch,
    PlannerConfig,
    SectionClassification,
    _parse_classifications,
    apply_matches,
    build_plan,
    classify_sections,
    draft_content,
    match_figures,
    plan_slides,
)

from tests import corpus as corpus_mod
from tests.builders import min_document, min_plan

_DOC_TEXT = (
    "# Adaptive Batching\n\nAbstract text here.\n\n"
    "# Introduction\n\nWhy batching matters.\n\n"
    "# Evaluation\n\nNumbers and plots.\n\n"
    "# Closing Remarks\n\nWhat it means.\n"
)
_HEADINGS = ["Adaptive Batching", "Introduction", "Evaluation", "Closing Remarks"]


def _doc(**overrides):
    return min_document(full_text=_DOC_TEXT, **overrides)


def _gw(provider):
    return corpus_mod.make_gateway(provider)


def _cls_payload(entries) -> str:
    return json.dumps(
        {
            "sections": [
                {"section_heading": h, "role": r, "importance": i} for h, r, i in entries
            ]
        }
    )


_GOOD_CLS = [
    ("Evaluation", "results", 1),
    ("Adaptive Batching", "problem", 2),
    ("Introduction", "motivation", 3),
    ("Closing Remarks", "conclusion", 4),
]


def _slide_obj(index, role, message, **kw):
    return {
        "index": index,
        "role": role,
        "central_message": message,
        "bullets": kw.get("bullets", [] if role in (ROLE_TITLE, ROLE_OUTLINE) else ["a", "b"]),
        "figure_refs": kw.get("figure_refs", []),
        "table_refs": kw.get("table_refs", []),
        "equation_refs": kw.get("equation_refs", []),
        "speaker_notes": kw.get("speaker_notes", ""),
        "importance": kw.get("importance", 1),
    }


def _plan_payload(slides) -> str:
    return json.dumps({"slides": slides})


def test_classify_sections_happy_path():
    provider = ScriptedProvider()
    provider.add_response("planner reading a research paper", _cls_payload(_GOOD_CLS))
    out = classify_sections(_doc(), _gw(provider))
    assert {(c.section_heading, c.role, c.importance) for c in out} == set(_GOOD_CLS)
    assert len(provider.calls) == 1


def test_classify_sections_retries_once_then_succeeds():
    bad = _cls_payload([("Nowhere", "results", 1)])
    provider = ScriptedProvider()
    provider.add_response(
        "planner reading a research paper", [bad, _cls_payload(_GOOD_CLS)]
    )
    out = classify_sections(_doc(), _gw(provider))
    assert len(out) == 4
    assert len(provider.calls) == 2


def test_classify_sections_gives_up_after_retry():
    provider = ScriptedProvider()
    provider.add_response("planner reading a research paper", "not json at all")
    with pytest.raises(ClassificationError, match="after retry"):
        classify_sections(_doc(), _gw(provider))
    assert len(provider.calls) == 2


def test_classify_sections_needs_headings():
    doc = min_document(full_text="plain body with no markdown headings at all.")
    with pytest.raises(ClassificationError, match="no top-level headings"):
        classify_sections(doc, _gw(ScriptedProvider()))


@pytest.mark.parametrize(
    "payload, message",
    [
        ("[1, 2]", "'sections' list"),
        (_cls_payload([("Nowhere", "results", 1)]), "unknown section heading"),
        (
            _cls_payload([("Evaluation", "results", 1), ("Evaluation", "problem", 2)]),
            "classified twice",
        ),
        (_cls_payload([("Evaluation", "summary", 1)]), "has role"),
        (
            json.dumps(
                {
                    "sections": [
                        {"section_heading": "Evaluation", "role": "results", "importance": "1"}
                    ]
                }
            ),
            "non-integer importance",
        ),
        (
            _cls_payload(
                [
                    ("Evaluation", "results", 1),
                    ("Adaptive Batching", "problem", 1),
                    ("Introduction", "motivation", 2),
                    ("Closing Remarks", "conclusion", 3),
                ]
            ),
            "not a permutation",
        ),
        (_cls_payload(_GOOD_CLS[:3]), "unclassified sections"),
    ],
)
def test_parse_classifications_rejects(payload, message):
    with pytest.raises(ClassificationError, match=message):
        _parse_classifications(payload, _HEADINGS)


def test_plan_slides_empty_classifications_fallback():
    provider = ScriptedProvider()
    plan = plan_slides(_doc(), [], _gw(provider))
    assert [s.role for s in plan.slides] == [ROLE_TITLE, ROLE_OUTLINE]
    assert [s.index for s in plan.slides] == [1, 2]
    assert plan.meta.paper_title == "Adaptive Batching"
    assert provider.calls == []


def test_plan_slides_orders_by_role_not_response_order():
    scrambled = [
        _slide_obj(1, "conclusion", "C last"),
        _slide_obj(2, "title", "T"),
        _slide_obj(3, "results", "R2 second results"),
        _slide_obj(4, "problem", "P"),
        _slide_obj(5, "outline", "O"),
        _slide_obj(6, "results", "R1 first stays first? no: response order kept"),
        _slide_obj(7, "motivation", "M"),
    ]
    provider = ScriptedProvider()
    provider.add_response("Design a slide deck", _plan_payload(scrambled))
    classifications = [SectionClassification(h, r, i) for h, r, i in _GOOD_CLS]
    plan = plan_slides(_doc(), classifications, _gw(provider))
    assert [s.role for s in plan.slides] == [
        "title", "outline", "problem", "motivation", "results", "results", "conclusion",
    ]
    assert [s.index for s in plan.slides] == [1, 2, 3, 4, 5, 6, 7]
    # The sort is stable: the two results slides keep their response order.
    results = [s.central_message for s in plan.slides if s.role == "results"]
    assert results[0].startswith("R2")
    # The prompt listing is role-ordered regardless of classification order.
    user = provider.calls[0].user_prompt
    assert user.index("[problem]") < user.index("[motivation]") < user.index("[results]")


def test_plan_slides_rejects_then_errors():
    two_titles = [
        _slide_obj(1, "title", "T1"),
        _slide_obj(2, "title", "T2"),
        _slide_obj(3, "outline", "O"),
        _slide_obj(4, "results", "R"),
    ]
    provider = ScriptedProvider()
    provider.add_response("Design a slide deck", _plan_payload(two_titles))
    classifications = [SectionClassification(h, r, i) for h, r, i in _GOOD_CLS]
    with pytest.raises(PlanningError, match="after retry"):
        plan_slides(_doc(), classifications, _gw(provider))
    assert len(provider.calls) == 2


def test_plan_slides_rejects_supplemental_and_size_bounds():
    with_supp = [
        _slide_obj(1, "title", "T"),
        _slide_obj(2, "outline", "O"),
        _slide_obj(3, "results", "R"),
        _slide_obj(4, ROLE_SUPPLEMENTAL, "S"),
    ]
    ok = [
        _slide_obj(1, "title", "T"),
        _slide_obj(2, "outline", "O"),
        _slide_obj(3, "problem", "P"),
        _slide_obj(4, "results", "R"),
    ]
    provider = ScriptedProvider()
    provider.add_response(
        "Design a slide deck", [_plan_payload(with_supp), _plan_payload(ok)]
    )
    classifications = [SectionClassification(h, r, i) for h, r, i in _GOOD_CLS]
    plan = plan_slides(_doc(), classifications, _gw(provider))
    assert len(plan.slides) == 4
    assert len(provider.calls) == 2

    small = ScriptedProvider()
    small.add_response("Design a slide deck", _plan_payload(ok[:3]))
    with pytest.raises(PlanningError, match="outside 4..30"):
        plan_slides(_doc(), classifications, _gw(small))


def test_plan_slides_rejects_validation_violations():
    bad_ref = [
        _slide_obj(1, "title", "T"),
        _slide_obj(2, "outline", "O"),
        _slide_obj(3, "problem", "P"),
        _slide_obj(4, "results", "R", figure_refs=[{"figure_id": "fig9", "short_caption": ""}]),
    ]
    provider = ScriptedProvider()
    provider.add_response("Design a slide deck", _plan_payload(bad_ref))
    classifications = [SectionClassification(h, r, i) for h, r, i in _GOOD_CLS]
    with pytest.raises(PlanningError, match="failed validation"):
        plan_slides(_doc(), classifications, _gw(provider))
    assert len(provider.calls) == 2


def _figured_doc(n=2):
    images = tuple(
        FigureAsset(
            id=f"fig{j}",
            filename=f"_page_{j}_Figure_1.jpeg",
            path=f"out/images/123456789/_page_{j}_Figure_1.jpeg",
            caption=f"Figure {j}: panel {j}.",
        )
        for j in range(1, n + 1)
    )
    return _doc(images=images)


def _match_payload(entries) -> str:
    return json.dumps(
        {
            "matches": [
                {"slide_index": s, "figure_id": f, "short_caption": c} for s, f, c in entries
            ]
        }
    )


def test_match_figures_no_images_short_circuits():
    provider = ScriptedProvider()
    assert match_figures(min_plan(), _doc(), _gw(provider)) == []
    assert provider.calls == []


def test_match_figures_dedupes_to_most_important_slide():
    plan = min_plan(n_content=2)
    # Slide 3 carries rank 2, slide 4 rank 1; fig1 must land on slide 4.
    plan = dataclasses.replace(
        plan,
        slides=tuple(
            dataclasses.replace(s, importance={3: 2, 4: 1}.get(s.index, 5))
            for s in plan.slides
        ),
    )
    provider = ScriptedProvider()
    provider.add_response(
        "matching paper figures",
        _match_payload([(3, "fig1", "cap a"), (4, "fig1", "cap b"), (3, "fig2", "cap c")]),
    )
    matches = match_figures(plan, _figured_doc(2), _gw(provider))
    assert {(m.figure_id, m.slide_index) for m in matches} == {("fig1", 4), ("fig2", 3)}


def test_match_figures_salvages_after_failed_retry():
    bad = _match_payload(
        [(3, "fig1", "ok caption"), (99, "fig2", "bad slide"), (4, "fig2", "x" * 500)]
    )
    provider = ScriptedProvider()
    provider.add_response("matching paper figures", bad)
    cfg = PlannerConfig(caption_budget=40)
    matches = match_figures(min_plan(2), _figured_doc(2), _gw(provider), cfg)
    assert len(provider.calls) == 2
    by_id = {m.figure_id: m for m in matches}
    assert by_id["fig1"].short_caption == "ok caption"
    assert by_id["fig2"].slide_index == 4
    assert len(by_id["fig2"].short_caption) == 40


def test_match_figures_unparseable_after_retry_raises():
    provider = ScriptedProvider()
    provider.add_response("matching paper figures", "nonsense")
    with pytest.raises(PlanningError, match="after retry"):
        match_figures(min_plan(2), _figured_doc(1), _gw(provider))


def test_apply_matches_writes_refs():
    plan = min_plan(2)
    matches = [
        FigureMatch(slide_index=3, figure_id="fig1", short_caption="a"),
        FigureMatch(slide_index=3, figure_id="fig2", short_caption="b"),
    ]
    out = apply_matches(plan, matches)
    refs = out.slide_at(3).figure_refs
    assert [(r.figure_id, r.short_caption) for r in refs] == [("fig1", "a"), ("fig2", "b")]
    assert out.slide_at(4).figure_refs == ()
    assert plan.slide_at(3).figure_refs == ()


def _draft_payload(n_bullets, notes="Spoken context.") -> str:
    return json.dumps(
        {"bullets": [f"point {i}" for i in range(n_bullets)], "speaker_notes": notes}
    )


def test_draft_content_bounds_and_supplemental_budget():
    plan = min_plan(2)
    supp = plan.slides[-1]
    plan = dataclasses.replace(
        plan,
        slides=plan.slides
        + (
            dataclasses.replace(
                supp,
                index=len(plan.slides) + 1,
                role=ROLE_SUPPLEMENTAL,
                central_message="Extra",
            ),
        ),
    )
    provider = ScriptedProvider()
    provider.add_response("Central message: Message 3", _draft_payload(6))
    provider.add_response("Central message: Message 4", _draft_payload(2, "Short."))
    # Five bullets exceed the supplemental budget; the retry fits in four.
    provider.add_response(
        "Central message: Extra", [_draft_payload(5), _draft_payload(4)]
    )
    out = draft_content(plan, _doc(), _gw(provider))
    assert len(out.slide_at(3).bullets) == 6
    assert len(out.slide_at(4).bullets) == 2
    assert len(out.slide_at(5).bullets) == 4
    assert out.slide_at(3).speaker_notes == "Spoken context."
    assert out.slide_at(1).bullets == () and out.slide_at(2).bullets == ()
    # One call per content slide plus the single supplemental retry.
    assert len(provider.calls) == 4


def test_draft_content_failure_after_retry():
    provider = ScriptedProvider()
    provider.add_response("drafting one slide", json.dumps({"bullets": [], "speaker_notes": ""}))
    with pytest.raises(PlanningError, match="failed after retry"):
        draft_content(min_plan(1), _doc(), _gw(provider))


def test_build_plan_end_to_end_over_corpus(corpus, tmp_path, converter_cfg):
    paper = corpus[0]
    provider = ScriptedProvider()
    corpus_mod.register_pipeline_responders(provider, corpus)
    pdf = corpus_mod.write_paper_files(paper, tmp_path / "in")
    cfg = converter_cfg(tmp_path / "img" / paper.paper_id)
    doc = ingest_pdf(pdf, cfg, _gw(provider), session_id=paper.paper_id)
    plan = build_plan(doc, _gw(provider))
    assert validate_plan(plan, doc) == []
    assert [s.index for s in plan.slides] == list(range(1, len(plan.slides) + 1))
    assert plan.slides[0].role == ROLE_TITLE and plan.slides[1].role == ROLE_OUTLINE
    assert all(2 <= len(s.bullets) <= 6 for s in plan.slides[2:])
