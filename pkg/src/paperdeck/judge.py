"""Pairwise deck comparison harness.

Two flattened decks are shown to a judge model as "Presentation A" and
"Presentation B" with no system identity, in both orders to control for
position bias. Five-point verdicts collapse to win/tie/loss from the full
system's perspective; aggregates count both directions and the
forward-reverse agreement rate (FRA) counts pairs with matching outcomes.

Verdict parsing is exact-string after trimming. The prompt commands exact
output; fuzzy matching would mask judge noncompliance.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import SchemaError, VerdictParseError
from .llm.gateway import Gateway
from .llm.templates import load_template
from .model import FlatDeck, _expect

logger = logging.getLogger(__name__)

VERDICT_A_SIG = "A is significantly better"
VERDICT_A_SLIGHT = "A is slightly better"
VERDICT_TIE = "Tie"
VERDICT_B_SLIGHT = "B is slightly better"
VERDICT_B_SIG = "B is significantly better"
VERDICT_LABELS = (
    VERDICT_A_SIG,
    VERDICT_A_SLIGHT,
    VERDICT_TIE,
    VERDICT_B_SLIGHT,
    VERDICT_B_SIG,
)

OUTCOME_WIN = "win"
OUTCOME_TIE = "tie"
OUTCOME_LOSS = "loss"

POSITION_A = "A"
POSITION_B = "B"

_MIRROR = {
    VERDICT_A_SIG: VERDICT_B_SIG,
    VERDICT_A_SLIGHT: VERDICT_B_SLIGHT,
    VERDICT_TIE: VERDICT_TIE,
    VERDICT_B_SLIGHT: VERDICT_A_SLIGHT,
    VERDICT_B_SIG: VERDICT_A_SIG,
}


@dataclass(frozen=True)
class Criteria:
    name: str
    description: str
    focus_areas: tuple[str, ...]
    needs_original_paper: bool
    # Which ablated variant this criteria compares the full system against.
    baseline_variant: str = ""

    @staticmethod
    def from_json_obj(obj: dict) -> "Criteria":
        if not isinstance(obj, dict):
            raise SchemaError("criteria: expected object")
        allowed = {
            "name", "description", "focus_areas", "needs_original_paper",
            "baseline_variant",
        }
        for key in obj:
            if key not in allowed:
                raise SchemaError(f"criteria: unknown key '{key}'")
        for key in allowed - {"baseline_variant"}:
            if key not in obj:
                raise SchemaError(f"criteria: missing key '{key}'")
        areas = obj["focus_areas"]
        if not isinstance(areas, list) or not all(isinstance(a, str) for a in areas):
            raise SchemaError("criteria.focus_areas must be a list of strings")
        return Criteria(
            name=_expect(obj["name"], str, "criteria.name"),
            description=_expect(obj["description"], str, "criteria.description"),
            focus_areas=tuple(areas),
            needs_original_paper=_expect(
                obj["needs_original_paper"], bool, "criteria.needs_original_paper"
            ),
            baseline_variant=str(obj.get("baseline_variant", "")),
        )


@dataclass(frozen=True)
class JudgeVerdict:
    label: str
    raw: str

    def __post_init__(self) -> None:
        if self.label not in VERDICT_LABELS:
            raise SchemaError(f"unknown verdict label {self.label!r}")


@dataclass(frozen=True)
class PairResult:
    paper_id: str
    forward: JudgeVerdict
    reverse: JudgeVerdict
    forward_outcome: str
    reverse_outcome: str
    consensus: bool

    def __post_init__(self) -> None:
        if self.consensus != (self.forward_outcome == self.reverse_outcome):
            raise SchemaError("consensus must equal outcome agreement")


@dataclass(frozen=True)
class AggregateStats:
    wins: int
    ties: int
    losses: int
    win_rate: float
    tie_rate: float
    fra: float


def load_builtin_criteria() -> list[Criteria]:
    text = resources.files("paperdeck").joinpath("data/judge_criteria.json").read_text("utf-8")
    return [Criteria.from_json_obj(obj) for obj in json.loads(text)]


def load_criteria_file(path: str | Path) -> list[Criteria]:
    payload = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(payload, list):
        raise SchemaError("criteria file must hold a JSON list")
    return [Criteria.from_json_obj(obj) for obj in payload]


def parse_verdict(raw: str) -> JudgeVerdict:
    trimmed = raw.strip().strip('"')
    if trimmed not in VERDICT_LABELS:
        raise VerdictParseError(f"response matches no verdict label: {raw!r}")
    return JudgeVerdict(label=trimmed, raw=raw)


def mirror_label(label: str) -> str:
    """Swap the A and B sides of a verdict label."""
    return _MIRROR[label]


def render_deck_text(deck: FlatDeck) -> str:
    return "\n\n".join(
        f"Slide {slide.slide_number}: {slide.text}".rstrip() for slide in deck.slides
    )


def judge_pair(
    a: FlatDeck,
    b: FlatDeck,
    criteria: Criteria,
    gateway: Gateway,
    original: Optional[str] = None,
) -> JudgeVerdict:
    """One anonymized comparison; the decks appear only as A and B."""
    if criteria.needs_original_paper:
        if original is None:
            raise ValueError(
                f"criteria {criteria.name!r} requires the original paper text"
            )
        system = load_template("judge_content_system").body
        user = load_template("judge_content_user").render(
            ORIGINAL_PAPER_TEXT=original,
            SLIDES_CONTENT_A=render_deck_text(a),
            SLIDES_CONTENT_B=render_deck_text(b),
        )
    else:
        focus = "\n".join(f"- {area}" for area in criteria.focus_areas)
        system = load_template("judge_system").render(
            CRITERIA_NAME=criteria.name, FOCUS_AREAS_LIST=focus
        )
        user = load_template("judge_user").render(
            CRITERIA_NAME=criteria.name,
            SLIDES_CONTENT_A=render_deck_text(a),
            SLIDES_CONTENT_B=render_deck_text(b),
            CRITERIA_DESCRIPTION=criteria.description,
        )
    last: Optional[VerdictParseError] = None
    for attempt in range(2):
        response = gateway.complete(system, user, kind="judge")
        try:
            return parse_verdict(response)
        except VerdictParseError as exc:
            last = exc
            if attempt == 0:
                logger.warning("unparseable verdict %r, re-asking", response[:80])
    raise last  # type: ignore[misc]


def collapse(verdict: JudgeVerdict | str, full_position: str) -> str:
    """Map a verdict to win/tie/loss from the full system's perspective."""
    label = verdict.label if isinstance(verdict, JudgeVerdict) else verdict
    if label not in VERDICT_LABELS:
        raise SchemaError(f"unknown verdict label {label!r}")
    if full_position not in (POSITION_A, POSITION_B):
        raise ValueError(f"full_position must be A or B, got {full_position!r}")
    if label == VERDICT_TIE:
        return OUTCOME_TIE
    favored = POSITION_A if label.startswith("A") else POSITION_B
    return OUTCOME_WIN if favored == full_position else OUTCOME_LOSS


def evaluate_bidirectional(
    full: FlatDeck,
    ablated: FlatDeck,
    criteria: Criteria,
    gateway: Gateway,
    original: Optional[str] = None,
    paper_id: str = "",
) -> PairResult:
    if not full.slides or not ablated.slides:
        raise ValueError("both decks must contain at least one slide")
    forward = judge_pair(full, ablated, criteria, gateway, original=original)
    reverse = judge_pair(ablated, full, criteria, gateway, original=original)
    forward_outcome = collapse(forward, POSITION_A)
    reverse_outcome = collapse(reverse, POSITION_B)
    return PairResult(
        paper_id=paper_id,
        forward=forward,
        reverse=reverse,
        forward_outcome=forward_outcome,
        reverse_outcome=reverse_outcome,
        consensus=forward_outcome == reverse_outcome,
    )


def aggregate(results: list[PairResult]) -> AggregateStats:
    if not results:
        raise ValueError("aggregate needs at least one pair result")
    outcomes = [r.forward_outcome for r in results] + [r.reverse_outcome for r in results]
    wins = outcomes.count(OUTCOME_WIN)
    ties = outcomes.count(OUTCOME_TIE)
    losses = outcomes.count(OUTCOME_LOSS)
    total = len(outcomes)
    consensus = sum(1 for r in results if r.consensus)
    return AggregateStats(
        wins=wins,
        ties=ties,
        losses=losses,
        win_rate=wins / total,
        tie_rate=ties / total,
        fra=consensus / len(results),
    )


@dataclass(frozen=True)
class TranscriptRow:
    """One per-paper row as printed in a published comparison table.

    The printed outcome/consensus columns are kept alongside the verdict
    labels so reconciliation can flag rows where the printed collapse
    disagrees with the recomputed one.
    """

    paper_id: str
    forward_label: str
    reverse_label: str
    printed_forward_outcome: Optional[str] = None
    printed_reverse_outcome: Optional[str] = None
    printed_consensus: Optional[bool] = None


@dataclass
class TranscriptReport:
    results: list[PairResult]
    stats: AggregateStats
    discrepancies: list[str]


def reconcile_transcript(rows: list[TranscriptRow]) -> TranscriptReport:
    """Recompute outcomes from verdict labels and flag printed disagreements.

    Arithmetic over the raw verdicts is the ground truth; where a printed
    outcome or consensus mark disagrees with the recomputation, the
    recomputed value stands and the row is flagged.
    """
    results: list[PairResult] = []
    discrepancies: list[str] = []
    for row in rows:
        forward = parse_verdict(row.forward_label)
        reverse = parse_verdict(row.reverse_label)
        forward_outcome = collapse(forward, POSITION_A)
        reverse_outcome = collapse(reverse, POSITION_B)
        consensus = forward_outcome == reverse_outcome
        results.append(
            PairResult(
                paper_id=row.paper_id,
                forward=forward,
                reverse=reverse,
                forward_outcome=forward_outcome,
                reverse_outcome=reverse_outcome,
                consensus=consensus,
            )
        )
        for side, printed, computed in (
            ("forward", row.printed_forward_outcome, forward_outcome),
            ("reverse", row.printed_reverse_outcome, reverse_outcome),
        ):
            if printed is not None and printed.lower() != computed:
                discrepancies.append(
                    f"paper {row.paper_id}: printed {side} outcome "
                    f"{printed!r} but collapse gives {computed!r}"
                )
        if row.printed_consensus is not None and row.printed_consensus != consensus:
            discrepancies.append(
                f"paper {row.paper_id}: printed consensus {row.printed_consensus} "
                f"but recomputed {consensus}"
            )
    return TranscriptReport(
        results=results, stats=aggregate(results), discrepancies=discrepancies
    )


@dataclass
class CriteriaReport:
    criteria_name: str
    baseline_variant: str
    results: list[PairResult]
    stats: Optional[AggregateStats]
    skipped: list[str] = field(default_factory=list)


@dataclass
class SuiteReport:
    reports: list[CriteriaReport]


def _load_flat_deck(path: Path) -> FlatDeck:
    from .model import parse_flat_deck

    return parse_flat_deck(path.read_text("utf-8"))


def run_ablation_suite(
    papers: list[str],
    variant_dirs: dict[str, str | Path],
    criteria_list: list[Criteria],
    gateway: Gateway,
    full_variant: str = "full",
    originals: Optional[dict[str, str]] = None,
) -> SuiteReport:
    """Judge full-vs-ablated decks for every paper and criteria.

    variant_dirs maps variant name to a directory holding one
    <paper_id>/slides.json per paper. A paper missing either deck is
    recorded in the report and skipped, never silently dropped.
    """
    if full_variant not in variant_dirs:
        raise ValueError(f"variant_dirs has no entry for {full_variant!r}")
    reports: list[CriteriaReport] = []
    for criteria in criteria_list:
        baseline = criteria.baseline_variant
        report = CriteriaReport(
            criteria_name=criteria.name,
            baseline_variant=baseline,
            results=[],
            stats=None,
        )
        reports.append(report)
        if baseline not in variant_dirs:
            report.skipped.append(f"no directory for variant {baseline!r}")
            continue
        for paper_id in papers:
            full_path = Path(variant_dirs[full_variant]) / paper_id / "slides.json"
            ablated_path = Path(variant_dirs[baseline]) / paper_id / "slides.json"
            missing = [p for p in (full_path, ablated_path) if not p.is_file()]
            if missing:
                names = ", ".join(str(p) for p in missing)
                logger.warning("skipping paper %s: missing %s", paper_id, names)
                report.skipped.append(f"paper {paper_id}: missing {names}")
                continue
            original = None
            if criteria.needs_original_paper:
                original = (originals or {}).get(paper_id)
                if original is None:
                    report.skipped.append(
                        f"paper {paper_id}: criteria needs original text, none given"
                    )
                    continue
            report.results.append(
                evaluate_bidirectional(
                    _load_flat_deck(full_path),
                    _load_flat_deck(ablated_path),
                    criteria,
                    gateway,
                    original=original,
                    paper_id=paper_id,
                )
            )
        if report.results:
            report.stats = aggregate(report.results)
    return SuiteReport(reports=reports)


def suite_report_to_json(report: SuiteReport) -> str:
    def pair_obj(r: PairResult) -> dict:
        return {
            "paper_id": r.paper_id,
            "forward": r.forward.label,
            "reverse": r.reverse.label,
            "forward_outcome": r.forward_outcome,
            "reverse_outcome": r.reverse_outcome,
            "consensus": r.consensus,
        }

    payload = []
    for item in report.reports:
        stats = None
        if item.stats is not None:
            stats = {
                "wins": item.stats.wins,
                "ties": item.stats.ties,
                "losses": item.stats.losses,
                "win_rate": item.stats.win_rate,
                "tie_rate": item.stats.tie_rate,
                "fra": item.stats.fra,
            }
        payload.append(
            {
                "criteria": item.criteria_name,
                "baseline_variant": item.baseline_variant,
                "pairs": [pair_obj(r) for r in item.results],
                "stats": stats,
                "skipped": item.skipped,
            }
        )
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def format_report_table(report: CriteriaReport) -> str:
    """Human-readable per-paper table: forward eval, reverse eval, consensus."""
    lines = [
        f"Criteria: {report.criteria_name} (full vs {report.baseline_variant})",
        f"{'Paper':<8}{'Forward Eval':<28}{'Reverse Eval':<28}"
        f"{'Fwd':<6}{'Rev':<6}Consensus",
    ]
    for r in report.results:
        mark = "yes" if r.consensus else "no"
        lines.append(
            f"{r.paper_id:<8}{r.forward.label:<28}{r.reverse.label:<28}"
            f"{r.forward_outcome:<6}{r.reverse_outcome:<6}{mark}"
        )
    if report.stats is not None:
        s = report.stats
        lines.append(
            f"Aggregated: win {s.win_rate:.1%} ({s.wins}/{s.wins + s.ties + s.losses}), "
            f"tie {s.tie_rate:.1%} ({s.ties}/{s.wins + s.ties + s.losses}), "
            f"FRA {s.fra:.1%}"
        )
    for note in report.skipped:
        lines.append(f"skipped: {note}")
    return "\n".join(lines) + "\n"
