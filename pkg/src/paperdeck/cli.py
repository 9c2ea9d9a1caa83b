"""Command-line front end.

generate runs the whole pipeline in-process and fails fast on bad inputs;
judge runs the comparison harness over variant directories; serve starts
the HTTP session service. Exit codes: 0 success, 1 execution failure,
2 usage errors caught before any work starts.
"""

from __future__ import annotations

import json
import shutil
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click

from .config import AppConfig, build_gateway, build_search_client, load_config
from .errors import PaperdeckError, PipelineStageError, SchemaError
from .judge import (
    format_report_table,
    load_builtin_criteria,
    load_criteria_file,
    run_ablation_suite,
    suite_report_to_json,
)
from .pipeline import new_session_id, run_generation, session_paths
from .texgen.generator import KNOWN_THEMES, ThemeSpec


def _load_cfg(
    config: Optional[str],
    model: Optional[str],
    offline: bool,
    cassette: Optional[str],
    sessions_root: Optional[str],
) -> AppConfig:
    try:
        cfg = load_config(config)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"bad config file: {exc}")
    updates = {}
    if model:
        updates["model_id"] = model
    if offline:
        updates["offline"] = True
    if cassette:
        updates["cassette_path"] = cassette
    if sessions_root:
        updates["sessions_root"] = sessions_root
    return replace(cfg, **updates) if updates else cfg


@click.group()
def main() -> None:
    """Turn research PDFs into editable Beamer slide decks."""


@main.command()
@click.argument("pdf", type=click.Path(exists=True, dir_okay=False))
@click.option("--theme", default=None, help="Beamer theme name.")
@click.option("--model", default=None, help="Model id for LLM calls.")
@click.option("--temperature", type=float, default=None, help="Pipeline sampling temperature.")
@click.option("--max-repair-attempts", type=int, default=None, help="Compile repair bound.")
@click.option("--offline", is_flag=True, help="Answer all LLM calls from the cassette.")
@click.option("--cassette", default=None, type=click.Path(), help="Cassette file path.")
@click.option("--config", default=None, type=click.Path(exists=True), help="Config JSON file.")
@click.option("--sessions-root", default=None, type=click.Path(), help="Where sessions live.")
@click.option("--session-id", default=None, help="Explicit session id.")
@click.option("--force", is_flag=True, help="Replace an existing session with the same id.")
def generate(
    pdf: str,
    theme: Optional[str],
    model: Optional[str],
    temperature: Optional[float],
    max_repair_attempts: Optional[int],
    offline: bool,
    cassette: Optional[str],
    config: Optional[str],
    sessions_root: Optional[str],
    session_id: Optional[str],
    force: bool,
) -> None:
    """Generate a slide deck session from a paper PDF."""
    cfg = _load_cfg(config, model, offline, cassette, sessions_root)
    if theme:
        cfg = replace(cfg, theme_name=theme)
    if temperature is not None:
        cfg = replace(cfg, pipeline_temperature=temperature)
    if max_repair_attempts is not None:
        cfg = replace(cfg, max_repair_attempts=max_repair_attempts)
    # Everything checkable without the model is checked here, before any
    # LLM call: theme, session collision, cassette presence.
    if cfg.theme_name not in KNOWN_THEMES:
        click.echo(
            f"error: unknown Beamer theme '{cfg.theme_name}' "
            f"(known: {', '.join(sorted(KNOWN_THEMES))})",
            err=True,
        )
        sys.exit(2)
    ThemeSpec(name=cfg.theme_name)
    sid = session_id or new_session_id(cfg.sessions_root)
    paths = session_paths(cfg.sessions_root, sid)
    if paths.session.is_file():
        if not force:
            click.echo(
                f"error: session '{sid}' already exists at {paths.root}; "
                "pass --force to regenerate it",
                err=True,
            )
            sys.exit(2)
        shutil.rmtree(paths.root)
    try:
        gateway = build_gateway(cfg)
    except (SchemaError, PaperdeckError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    try:
        record = run_generation(pdf, sid, cfg, gateway)
    except PipelineStageError as exc:
        click.echo(
            f"error: stage '{exc.stage}' failed: {exc}\nlog: {exc.log_path}", err=True
        )
        sys.exit(1)
    click.echo(f"session {record.session_id} ready: {paths.root}")
    for name, present in paths.artifact_status().items():
        click.echo(f"  {name}: {'ok' if present else 'MISSING'}")


def _parse_variant(value: str) -> tuple[str, str]:
    if "=" not in value:
        raise click.BadParameter(f"expected NAME=DIR, got {value!r}")
    name, _, directory = value.partition("=")
    return name.strip(), directory.strip()


@main.command()
@click.option("--full", "full_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of full-system decks (<paper_id>/slides.json).")
@click.option("--variant", "variants", multiple=True,
              help="Ablated variant as NAME=DIR; repeatable.")
@click.option("--criteria", "criteria_path", default=None, type=click.Path(exists=True),
              help="Criteria JSON file (defaults to the built-in pair).")
@click.option("--paper", "papers", multiple=True,
              help="Paper id to judge; repeatable. Defaults to every subdirectory of --full.")
@click.option("--originals-dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="Directory of <paper_id>.md or .txt full texts for criteria that need them.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Write the JSON report here.")
@click.option("--model", default=None)
@click.option("--offline", is_flag=True)
@click.option("--cassette", default=None, type=click.Path())
@click.option("--config", default=None, type=click.Path(exists=True))
def judge(
    full_dir: str,
    variants: tuple[str, ...],
    criteria_path: Optional[str],
    papers: tuple[str, ...],
    originals_dir: Optional[str],
    out_path: Optional[str],
    model: Optional[str],
    offline: bool,
    cassette: Optional[str],
    config: Optional[str],
) -> None:
    """Judge full-system decks against ablated variants."""
    cfg = _load_cfg(config, model, offline, cassette, None)
    variant_dirs: dict[str, str] = {"full": full_dir}
    for item in variants:
        name, directory = _parse_variant(item)
        variant_dirs[name] = directory
    criteria_list = (
        load_criteria_file(criteria_path) if criteria_path else load_builtin_criteria()
    )
    paper_ids = list(papers) or sorted(
        p.name for p in Path(full_dir).iterdir() if p.is_dir()
    )
    if not paper_ids:
        click.echo("error: no papers found to judge", err=True)
        sys.exit(2)
    originals: dict[str, str] = {}
    if originals_dir:
        for paper_id in paper_ids:
            for suffix in (".md", ".txt"):
                candidate = Path(originals_dir) / f"{paper_id}{suffix}"
                if candidate.is_file():
                    originals[paper_id] = candidate.read_text("utf-8")
                    break
    try:
        gateway = build_gateway(cfg)
        report = run_ablation_suite(
            paper_ids, variant_dirs, criteria_list, gateway, originals=originals
        )
    except (SchemaError, PaperdeckError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for item in report.reports:
        click.echo(format_report_table(item))
    if out_path:
        Path(out_path).write_text(suite_report_to_json(report), "utf-8")
        click.echo(f"report written to {out_path}")
    judged = sum(len(item.results) for item in report.reports)
    if judged == 0:
        click.echo("error: no pairs could be judged", err=True)
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--sessions-root", default=None, type=click.Path())
@click.option("--offline", is_flag=True)
@click.option("--cassette", default=None, type=click.Path())
@click.option("--model", default=None)
def serve(
    host: str,
    port: int,
    config: Optional[str],
    sessions_root: Optional[str],
    offline: bool,
    cassette: Optional[str],
    model: Optional[str],
) -> None:
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    cfg = _load_cfg(config, model, offline, cassette, sessions_root)
    Path(cfg.sessions_root).mkdir(parents=True, exist_ok=True)
    app = create_app(cfg, search_client=build_search_client(cfg))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
