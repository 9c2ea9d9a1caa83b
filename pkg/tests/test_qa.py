"""Verification and adjustment: provenance gating, append-only repairs, bounded loop."""

import dataclasses
import json

import pytest

from paperdeck.errors import AdjustmentError, VerificationError
from paperdeck.llm.gateway import ScriptedProvider
from paperdeck.model import ROLE_SUPPLEMENTAL, validate_plan
from paperdeck.qa import (
    AreaReport,
    MissingItem,
    VerificationReport,
    adjust,
    serialize_report,
    verify,
    verify_and_adjust,
)

from tests import corpus as corpus_mod
from tests.builders import min_document, min_plan


def _gw(provider):
    return corpus_mod.make_gateway(provider)


def _area(coverage="sufficient", missing=()):
    return {"coverage": coverage, "missing": list(missing)}


def _report_payload(**areas) -> str:
    merged = {
        "methodology": _area(),
        "results": _area(),
        "conclusions": _area(),
    }
    merged.update(areas)
    return json.dumps({"areas": merged})


def _missing(concept, importance, excerpt):
    return {"concept": concept, "importance": importance, "source_excerpt": excerpt}


_DOC = min_document()  # full text contains "Body of the tiny paper."


def test_verify_clean_report():
    provider = ScriptedProvider()
    provider.add_response("verifying that a slide plan", _report_payload())
    report = verify(min_plan(), _DOC, _gw(provider))
    assert not report.flagged
    assert set(report.areas) == {"methodology", "results", "conclusions"}
    assert all(a.coverage == "sufficient" and a.missing == () for a in report.areas.values())


def test_verify_rejects_items_without_provenance():
    payload = _report_payload(
        results=_area(
            missing=[
                _missing("real gap", "high", "tiny paper"),
                _missing("invented gap", "high", "this text is nowhere in the document"),
            ]
        )
    )
    provider = ScriptedProvider()
    provider.add_response("verifying that a slide plan", payload)
    report = verify(min_plan(), _DOC, _gw(provider))
    assert [m.concept for m in report.areas["results"].missing] == ["real gap"]
    assert report.flagged


def test_verify_flag_logic():
    low_only = _report_payload(
        conclusions=_area(missing=[_missing("minor", "low", "tiny paper")])
    )
    insufficient = _report_payload(methodology=_area(coverage="insufficient"))
    for payload, expected in ((low_only, False), (insufficient, True)):
        provider = ScriptedProvider()
        provider.add_response("verifying that a slide plan", payload)
        assert verify(min_plan(), _DOC, _gw(provider)).flagged is expected


def test_verify_retry_then_error():
    provider = ScriptedProvider()
    provider.add_response(
        "verifying that a slide plan",
        [json.dumps({"areas": {"methodology": _area()}}), _report_payload()],
    )
    assert not verify(min_plan(), _DOC, _gw(provider)).flagged
    assert len(provider.calls) == 2

    stuck = ScriptedProvider()
    stuck.add_response(
        "verifying that a slide plan", json.dumps({"areas": {"bogus": _area()}})
    )
    with pytest.raises(VerificationError, match="after retry"):
        verify(min_plan(), _DOC, _gw(stuck))


def test_high_items_follow_area_order():
    report = VerificationReport.build(
        {
            "methodology": AreaReport("sufficient", (MissingItem("m", "high", "x"),)),
            "results": AreaReport("sufficient", (MissingItem("r", "low", "x"),)),
            "conclusions": AreaReport("insufficient", (MissingItem("c", "high", "x"),)),
        }
    )
    assert [(a, i.concept) for a, i in report.high_items()] == [
        ("methodology", "m"),
        ("conclusions", "c"),
    ]
    round_tripped = json.loads(serialize_report(report))
    assert round_tripped["flagged"] is True
    assert list(round_tripped["areas"]) == ["methodology", "results", "conclusions"]


def _flagged_report(area="results", excerpt="tiny paper"):
    areas = {
        name: AreaReport("sufficient", ()) for name in ("methodology", "results", "conclusions")
    }
    areas[area] = AreaReport(
        "sufficient", (MissingItem("held-out protocol", "high", excerpt),)
    )
    return VerificationReport.build(areas)


def test_adjust_unflagged_is_identity():
    provider = ScriptedProvider()
    plan = min_plan()
    clean = VerificationReport.build(
        {n: AreaReport("sufficient", ()) for n in ("methodology", "results", "conclusions")}
    )
    assert adjust(plan, clean, _DOC, _gw(provider)) is plan
    assert provider.calls == []


def test_adjust_appends_bullets_to_target_slide():
    provider = ScriptedProvider()
    provider.add_response(
        "repairing a slide plan",
        json.dumps({"bullets": ["extra a", "extra b"], "target_slide_index": 3}),
    )
    plan = min_plan(2)
    out = adjust(plan, _flagged_report(), _DOC, _gw(provider))
    assert out.slide_at(3).bullets == ("Point 3a", "Point 3b", "extra a", "extra b")
    assert len(out.slides) == len(plan.slides)


def test_adjust_inserts_supplemental_after_area_bucket():
    provider = ScriptedProvider()
    provider.add_response(
        "repairing a slide plan",
        json.dumps(
            {"bullets": ["s1", "s2", "s3"], "central_message": "Recovered findings"}
        ),
    )
    # Roles: 1 title, 2 outline, 3 problem, 4 motivation, 5 results, 6 conclusion.
    plan = min_plan(4)
    out = adjust(plan, _flagged_report("methodology"), _DOC, _gw(provider))
    assert len(out.slides) == 7
    supp = out.slide_at(5)
    assert supp.role == ROLE_SUPPLEMENTAL
    assert supp.central_message == "Recovered findings"
    assert supp.bullets == ("s1", "s2", "s3")
    assert supp.importance == 2  # one past the existing maximum
    assert [s.index for s in out.slides] == list(range(1, 8))
    assert out.slide_at(6).central_message == plan.slide_at(5).central_message
    assert validate_plan(out, _DOC) == []


def test_adjust_supplemental_falls_back_to_last_content_slide():
    provider = ScriptedProvider()
    provider.add_response(
        "repairing a slide plan",
        json.dumps({"bullets": ["s1", "s2"], "central_message": "Filled"}),
    )
    # No results slide exists; the repair lands after the last content slide.
    plan = min_plan(2)
    out = adjust(plan, _flagged_report("results"), _DOC, _gw(provider))
    assert out.slides[-1].role == ROLE_SUPPLEMENTAL
    assert out.slides[-1].index == 5


@pytest.mark.parametrize(
    "payload, message",
    [
        (json.dumps({"bullets": ["only one"]}), "failed after retry"),
        (
            json.dumps({"bullets": ["a", "b"], "target_slide_index": 99}),
            "failed after retry",
        ),
        (json.dumps({"bullets": ["a", "b"]}), "failed after retry"),
    ],
)
def test_adjust_bad_repairs_raise(payload, message):
    provider = ScriptedProvider()
    provider.add_response("repairing a slide plan", payload)
    with pytest.raises(AdjustmentError, match=message):
        adjust(min_plan(2), _flagged_report(), _DOC, _gw(provider))
    assert len(provider.calls) == 2


def test_verify_and_adjust_bounded_rounds():
    always_flagged = _report_payload(
        results=_area(
            coverage="insufficient",
            missing=[_missing("stubborn gap", "high", "tiny paper")],
        )
    )
    provider = ScriptedProvider()
    provider.add_response("verifying that a slide plan", always_flagged)
    provider.add_response(
        "repairing a slide plan",
        json.dumps({"bullets": ["fix a", "fix b"], "target_slide_index": 3}),
    )
    plan, report = verify_and_adjust(min_plan(2), _DOC, _gw(provider), max_rounds=2)
    assert report.flagged
    # verify, adjust, verify, adjust, verify: the loop stops at two repairs.
    assert len(provider.calls) == 5
    assert plan.slide_at(3).bullets == (
        "Point 3a", "Point 3b", "fix a", "fix b", "fix a", "fix b",
    )


def test_omission_repair_round_trip_over_corpus(corpus):
    paper = corpus[3]
    provider = ScriptedProvider()
    provider.add_responder(corpus_mod.omission_verifier(paper))
    provider.add_responder(corpus_mod.adjuster_responder)
    gateway = _gw(provider)
    doc = min_document(full_text=paper.markdown, session_id=paper.paper_id)

    plan_provider = ScriptedProvider()
    corpus_mod.register_pipeline_responders(plan_provider, corpus)
    from paperdeck.planner import build_plan

    plan = build_plan(doc, _gw(plan_provider))
    # Remove the results slide to seed the omission.
    kept = tuple(s for s in plan.slides if s.role != "results")
    broken = dataclasses.replace(
        plan, slides=tuple(s.with_index(i) for i, s in enumerate(kept, start=1))
    )

    first = verify(broken, doc, gateway)
    assert first.flagged
    assert first.areas["results"].coverage == "insufficient"

    repaired, final = verify_and_adjust(broken, doc, gateway)
    assert not final.flagged
    supplemental = [s for s in repaired.slides if s.role == ROLE_SUPPLEMENTAL]
    assert len(supplemental) == 1
    assert paper.omission_concept in supplemental[0].central_message
    assert 2 <= len(supplemental[0].bullets) <= 4
    assert validate_plan(repaired, doc) == []
