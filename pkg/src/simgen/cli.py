"""Command-line entry point: generate, resume, inspect, report.

Exit codes: 0 full success, 1 configuration or I/O error, 2 a step failed
after retries (partial report written). Option precedence is flags > env
vars > config file > defaults.
"""

from __future__ import annotations

import json
import os
import shlex
import sys
from pathlib import Path

import click

from . import prompts, validator
from .backend import HttpBackend, ScriptedBackend, load_scenario
from .errors import SimgenError, UnknownSession
from .pipeline import (GameSpec, PipelineResult, RunConfig, resume_pipeline,
                       run_pipeline)
from .store import SessionStore

ENV_API_KEY = "SIMGEN_API_KEY"
ENV_BASE_URL = "SIMGEN_BASE_URL"
ENV_MODEL = "SIMGEN_MODEL"

_CONFIG_KEYS = ("tau", "n_max", "retries", "max_steps", "frames", "timeout",
                "base_url", "model", "api_key", "harness")


def _read_config_file(path: str | None) -> dict[str, str]:
    """Flat key=value file; blank lines and # comments ignored."""
    if not path:
        return {}
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise click.ClickException(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _resolve(flag, cfg: dict[str, str], key: str, default):
    if flag is not None:
        return flag
    if key in cfg:
        return type(default)(cfg[key]) if default is not None else cfg[key]
    return default


def _build_backend(backend_name: str, scenario: str | None,
                   cfg: dict[str, str]):
    if backend_name == "scripted":
        if not scenario:
            raise click.ClickException(
                "--backend scripted requires --scenario")
        return ScriptedBackend(load_scenario(scenario))
    api_key = os.environ.get(ENV_API_KEY) or cfg.get("api_key")
    if not api_key:
        raise click.ClickException(
            f"HTTP backend needs an API key; set {ENV_API_KEY}")
    base_url = (os.environ.get(ENV_BASE_URL) or cfg.get("base_url")
                or "https://api.openai.com/v1")
    model = os.environ.get(ENV_MODEL) or cfg.get("model") or "gpt-4o"
    return HttpBackend(base_url=base_url, api_key=api_key, model=model)


def _sanity_fn(harness: str | None, skip: bool, frames: int, timeout: float):
    if skip:
        return None
    cmd = tuple(shlex.split(harness)) if harness else ("game-harness",)
    return lambda code: validator.sanity_check(code, frames=frames,
                                               timeout=timeout,
                                               harness_cmd=cmd)


def _write_outputs(result: PipelineResult, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{result.session_id}.py").write_text(result.code,
                                                 encoding="utf-8")
    (out / f"{result.session_id}_report.json").write_text(
        result.report_json(), encoding="utf-8")


def _run_options(fn):
    for option in reversed([
        click.option("--backend", "backend_name",
                     type=click.Choice(["http", "scripted"]),
                     default="http", show_default=True),
        click.option("--scenario", type=click.Path(exists=True),
                     help="Scripted-backend scenario file."),
        click.option("--tau", type=int, default=None,
                     help="Per-category accept threshold (0-10)."),
        click.option("--n-max", type=int, default=None,
                     help="Max refinement rounds per trio."),
        click.option("--retries", type=int, default=None,
                     help="Max attempts per step."),
        click.option("--max-steps", type=int, default=None,
                     help="Cap on decomposition length."),
        click.option("--frames", type=int, default=None,
                     help="Sanity-check frame budget."),
        click.option("--timeout", type=float, default=None,
                     help="Sanity-check wall-clock timeout (s)."),
        click.option("--out", "out_dir", default="out", show_default=True,
                     help="Output directory."),
        click.option("--db", "db_path", default="out/session.db",
                     show_default=True, help="Session store file."),
        click.option("--prompts", "prompts_dir", type=click.Path(),
                     default=None, help="Template directory override."),
        click.option("--harness", default=None,
                     help="Harness command for sanity checks."),
        click.option("--skip-sanity", is_flag=True,
                     help="Skip the post-step sanity check."),
        click.option("--config", "config_path", type=click.Path(exists=True),
                     default=None, help="Flat key=value config file."),
    ]):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Generate executable 2D games from natural-language specs."""


def _make_run_config(cfg, tau, n_max, retries, max_steps, frames,
                     timeout) -> RunConfig:
    try:
        return RunConfig(
            tau=_resolve(tau, cfg, "tau", 8),
            n_max=_resolve(n_max, cfg, "n_max", 3),
            max_retries=_resolve(retries, cfg, "retries", 3),
            max_steps=_resolve(max_steps, cfg, "max_steps", 12),
            frames=_resolve(frames, cfg, "frames", 300),
            timeout=_resolve(timeout, cfg, "timeout", 30.0),
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))


def _finish(result: PipelineResult, out_dir: str) -> None:
    _write_outputs(result, out_dir)
    if result.success:
        click.echo(f"done: {result.report['steps_completed']} steps, "
                   f"code in {out_dir}/{result.session_id}.py")
        sys.exit(0)
    click.echo(f"step {result.report['failed_step']} failed; partial "
               f"report written to {out_dir}", err=True)
    sys.exit(2)


@main.command()
@click.argument("spec_path", type=click.Path(exists=True))
@click.option("--title", default=None, help="Session id / output basename.")
@_run_options
def generate(spec_path, title, backend_name, scenario, tau, n_max, retries,
             max_steps, frames, timeout, out_dir, db_path, prompts_dir,
             harness, skip_sanity, config_path):
    """Generate a game from a natural-language spec file."""
    cfg = _read_config_file(config_path)
    run_config = _make_run_config(cfg, tau, n_max, retries, max_steps,
                                  frames, timeout)
    spec_text = Path(spec_path).read_text(encoding="utf-8")
    spec = GameSpec(text=spec_text, title=title or Path(spec_path).stem)
    try:
        registry = prompts.load_registry(prompts_dir)
        backend = _build_backend(backend_name, scenario, cfg)
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        store = SessionStore(db_path)
        sanity = _sanity_fn(harness or cfg.get("harness"), skip_sanity,
                            run_config.frames, run_config.timeout)
        result = run_pipeline(spec, run_config, backend, registry, store,
                              sanity=sanity)
    except SimgenError as exc:
        raise click.ClickException(str(exc))
    _finish(result, out_dir)


@main.command()
@click.argument("session_id")
@_run_options
def resume(session_id, backend_name, scenario, tau, n_max, retries,
           max_steps, frames, timeout, out_dir, db_path, prompts_dir,
           harness, skip_sanity, config_path):
    """Continue an interrupted run from its last committed step."""
    cfg = _read_config_file(config_path)
    run_config = _make_run_config(cfg, tau, n_max, retries, max_steps,
                                  frames, timeout)
    try:
        registry = prompts.load_registry(prompts_dir)
        backend = _build_backend(backend_name, scenario, cfg)
        store = SessionStore(db_path)
        sanity = _sanity_fn(harness or cfg.get("harness"), skip_sanity,
                            run_config.frames, run_config.timeout)
        result = resume_pipeline(session_id, run_config, backend, registry,
                                 store, sanity=sanity)
    except UnknownSession:
        raise click.ClickException(f"unknown session: {session_id}")
    except SimgenError as exc:
        raise click.ClickException(str(exc))
    _finish(result, out_dir)


@main.command()
@click.argument("session_id")
@click.option("--db", "db_path", default="out/session.db", show_default=True)
def inspect(session_id, db_path):
    """Dump a session's variables, functions, and queries. Read-only."""
    try:
        store = SessionStore(db_path, read_only=True)
        model = store.load(session_id)
    except UnknownSession:
        raise click.ClickException(f"unknown session: {session_id}")
    except SimgenError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"session: {session_id}")
    click.echo(f"state variables ({len(model.state_variables)}):")
    for var in model.state_variables:
        flag = " [protected]" if var.dont_clean else ""
        click.echo(f"  {var.name} ({var.value_type}) = {var.value}{flag}"
                   f"  # {var.description}")
    click.echo(f"functions ({len(model.functions)}):")
    for fn in model.functions:
        click.echo(f"  {fn.name} [{fn.kind}] uses "
                   f"{', '.join(fn.relevant_state) or '(none)'}")
    click.echo(f"queries ({len(model.queries)}):")
    for i, query in enumerate(model.queries):
        click.echo(f"  {i}: {query}")


@main.command()
@click.argument("session_id")
@click.option("--db", "db_path", default="out/session.db", show_default=True)
def report(session_id, db_path):
    """Print the stored run report as JSON. Read-only."""
    from .pipeline import _build_report
    try:
        store = SessionStore(db_path, read_only=True)
        model = store.load(session_id)
    except UnknownSession:
        raise click.ClickException(f"unknown session: {session_id}")
    except SimgenError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(_build_report(model, session_id, None, None),
                          indent=2, sort_keys=True))
