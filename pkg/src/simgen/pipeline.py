"""Three-phase orchestration: decompose the spec, execute each step with
agentic refinement under snapshot-based retry, then assemble and validate.

A step is atomic: after run_step the persisted session is either the
successful end-state or the pre-step snapshot, never anything in between.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable

from . import prompts
from .agents import (FunctionPayload, StepDecomposition, TrioConfig,
                     run_state_change, run_trio)
from .assembler import export_code
from .backend import Backend, ChatMessage, ChatRequest, MeteredBackend
from .errors import (DecompositionFailure, InvalidArtifact, SchemaViolation,
                     SimgenError, StepFailure)
from .model import (FunctionArtifact, ScopeSet, SessionModel, clean_states,
                    context_reduction_ratio, new_initial_session,
                    project_context)
from .scoring import ComponentKind
from .store import SessionStore
from .validator import SanityReport

#: Injected sanity checker; None skips validation (tests and dry runs).
SanityFn = Callable[[str], SanityReport]


@dataclass(frozen=True)
class GameSpec:
    text: str
    title: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("spec text must be non-empty")


@dataclass(frozen=True)
class StepPlan:
    steps: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps or any(not s.strip() for s in self.steps):
            raise ValueError("plan needs at least one non-empty step")


@dataclass
class RunConfig:
    tau: int = 8
    n_max: int = 3
    max_retries: int = 3
    max_steps: int = 12
    screen_width: int = 800
    screen_height: int = 600
    fps: int = 60
    frames: int = 300
    timeout: float = 30.0

    def __post_init__(self):
        if not 0 <= self.tau <= 10:
            raise ValueError("tau must be in [0, 10]")
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    def trio(self) -> TrioConfig:
        return TrioConfig(tau=self.tau, n_max=self.n_max)


@dataclass
class PipelineResult:
    session_id: str
    model: SessionModel
    code: str
    report: dict[str, Any]
    success: bool
    error: str | None = None

    def report_json(self) -> str:
        return json.dumps(self.report, indent=2, sort_keys=True) + "\n"


def decompose_spec(spec: GameSpec, backend: Backend,
                   registry: prompts.PromptRegistry,
                   max_steps: int = 12) -> StepPlan:
    """Split the spec into ordered step instructions, re-asking once on an
    oversized plan."""
    role_prompt = prompts.render(registry, "pipeline/decompose_spec",
                                 {"max_steps": str(max_steps)})
    for attempt in range(2):
        request = ChatRequest(
            role_prompt=role_prompt,
            messages=[ChatMessage("user", spec.text)] if attempt == 0 else [
                ChatMessage("user", spec.text),
                ChatMessage("user",
                            f"Your plan had too many steps; use at most "
                            f"{max_steps}.")],
            required_schema="step_plan",
            tags={"role": "pipeline.decompose_spec", "step": 0,
                  "round": attempt})
        try:
            response = backend.complete(request)
        except SchemaViolation as exc:
            raise DecompositionFailure(str(exc)) from exc
        steps = response.content["steps"]
        if len(steps) <= max_steps:
            return StepPlan(tuple(steps))
    raise DecompositionFailure(
        f"plan exceeds the {max_steps}-step cap after re-ask")


_SLOTS = (
    ("input_logic", ComponentKind.INPUT_LOGIC, "input_logic"),
    ("state_transition", ComponentKind.STATE_TRANSITION, "logic"),
    ("ui_rendering", ComponentKind.UI_RENDERING, "render"),
)


def _overlapping_functions(model: SessionModel,
                           variable_names: frozenset[str]) -> frozenset[str]:
    return frozenset(fn.name for fn in model.functions
                     if variable_names & set(fn.relevant_state))


def _attempt_step(model: SessionModel, query: str, step_index: int,
                  config: RunConfig, backend: Backend,
                  registry: prompts.PromptRegistry,
                  sanity: SanityFn | None) -> dict[str, Any]:
    """One full step attempt. Returns the new model plus report fields."""
    trio_cfg = config.trio()
    scope, new_vars, sc_trace = run_state_change(
        model, query, trio_cfg, backend, registry, step_index)
    model = model.with_variables(new_vars)
    scoped_text = project_context(model, scope)
    rho = context_reduction_ratio(model, scope)
    traces = [sc_trace]

    dec_trace = run_trio(ComponentKind.DECOMPOSE, scoped_text, query,
                         trio_cfg, backend, registry, step_index)
    traces.append(dec_trace)
    decomposition = dec_trace.checkpoint_artifact.payload
    assert isinstance(decomposition, StepDecomposition)

    live = set(model.variable_names())
    for slot, kind, fn_kind in _SLOTS:
        spec_item = getattr(decomposition, slot)
        if spec_item is None:
            continue
        instruction = (f"{query}\n\nSub-function to implement: "
                       f"{spec_item.name} - {spec_item.description}")
        trace = run_trio(kind, scoped_text, instruction, trio_cfg, backend,
                         registry, step_index)
        traces.append(trace)
        payload = trace.checkpoint_artifact.payload
        assert isinstance(payload, FunctionPayload)
        for name in payload.relevant_state:
            if name not in live:
                raise InvalidArtifact(
                    f"{kind.value} references unknown variable {name!r}")
        model = model.with_function(FunctionArtifact(
            name=payload.function_name, kind=fn_kind,
            code=payload.implementation,
            relevant_state=payload.relevant_state,
            description=payload.description))
        # Later trios in this step see newly integrated overlapping functions.
        scope = ScopeSet(scope.variable_names,
                         _overlapping_functions(model, scope.variable_names))
        scoped_text = project_context(model, scope)

    model = clean_states(model)
    live = set(model.variable_names())
    for fn in model.functions:
        for name in fn.relevant_state:
            if name not in live:
                raise InvalidArtifact(
                    f"function {fn.name!r} references cleaned variable "
                    f"{name!r}")

    code = export_code(model)
    report = sanity(code) if sanity is not None else None
    return {"model": model, "code": code, "rho": rho, "traces": traces,
            "sanity": report}


def run_step(session_id: str, query: str, step_index: int, config: RunConfig,
             backend: Backend, registry: prompts.PromptRegistry,
             store: SessionStore, sanity: SanityFn | None = None,
             meter: MeteredBackend | None = None,
             ) -> tuple[SessionModel, dict[str, Any]]:
    """Execute one step with snapshot-based retry.

    On success the session is persisted with the query appended; on
    exhaustion the pre-step snapshot is restored and StepFailure raised.
    """
    snap = store.snapshot(session_id)
    diagnostics: list[str] = []
    for attempt in range(1, config.max_retries + 1):
        model = store.restore(snap)
        try:
            outcome = _attempt_step(model, query, step_index, config,
                                    backend, registry, sanity)
        except SimgenError as exc:
            diagnostics.append(f"attempt {attempt}: {type(exc).__name__}: {exc}")
            continue
        report: SanityReport | None = outcome["sanity"]
        if report is not None and not report.ok:
            diagnostics.append(
                f"attempt {attempt}: sanity failed "
                f"(compiled={report.compiled}, crashed={report.crashed}, "
                f"message={report.crash_message})")
            continue

        model = outcome["model"].with_query(query)
        meta: dict[str, str] = {"current_query_index": str(step_index + 1)}
        if meter is not None:
            meta["tokens_input"] = str(meter.input_tokens)
            meta["tokens_output"] = str(meter.output_tokens)
        step_report = {
            "step": step_index,
            "query": query,
            "attempts": attempt,
            "rho": outcome["rho"],
            "trios": [t.summary() for t in outcome["traces"]],
            "sanity": None if report is None else {
                "compiled": report.compiled,
                "ran_frames": report.ran_frames,
                "crashed": report.crashed,
                "crash_message": report.crash_message,
            },
        }
        reports = json.loads(model.metadata.get("step_reports", "[]"))
        reports.append(step_report)
        meta["step_reports"] = json.dumps(reports, sort_keys=True)
        model = model.with_metadata(**meta)
        store.save(session_id, model)
        for trace in outcome["traces"]:
            store.append_transcript(session_id, trace.kind.value, step_index,
                                    trace.summary())
        return model, step_report

    store.restore(snap)
    raise StepFailure(
        f"step {step_index} failed after {config.max_retries} attempts",
        attempts=diagnostics)


def _build_report(model: SessionModel, session_id: str,
                  failed_step: int | None, error: str | None,
                  ) -> dict[str, Any]:
    step_reports = json.loads(model.metadata.get("step_reports", "[]"))
    plan = json.loads(model.metadata.get("plan", "[]"))
    trio_totals = [trio["checkpoint_total"]
                   for step in step_reports for trio in step["trios"]]
    return {
        "session_id": session_id,
        "title": model.metadata.get("spec_title", session_id),
        "steps_total": len(plan),
        "steps_completed": len(model.queries),
        "steps": step_reports,
        "tokens": {
            "input": int(model.metadata.get("tokens_input", "0")),
            "output": int(model.metadata.get("tokens_output", "0")),
        },
        "metrics": {
            "mean_trio_score": (sum(trio_totals) / len(trio_totals)
                                if trio_totals else None),
            "system_test_pass_rate": "unavailable",
        },
        "failed_step": failed_step,
        "error": error,
    }


def _run_steps(session_id: str, model: SessionModel, plan: list[str],
               start: int, config: RunConfig, meter: MeteredBackend,
               registry: prompts.PromptRegistry, store: SessionStore,
               sanity: SanityFn | None) -> PipelineResult:
    for k in range(start, len(plan)):
        try:
            model, _ = run_step(session_id, plan[k], k, config, meter,
                                registry, store, sanity, meter)
        except StepFailure as exc:
            model = store.load(session_id)
            report = _build_report(model, session_id, failed_step=k,
                                   error="; ".join(exc.attempts) or str(exc))
            return PipelineResult(session_id, model, export_code(model),
                                  report, success=False, error=str(exc))
    report = _build_report(model, session_id, failed_step=None, error=None)
    return PipelineResult(session_id, model, export_code(model), report,
                          success=True)


def run_pipeline(spec: GameSpec, config: RunConfig, backend: Backend,
                 registry: prompts.PromptRegistry, store: SessionStore,
                 session_id: str | None = None,
                 sanity: SanityFn | None = None) -> PipelineResult:
    """Full generation: init session, decompose, fold steps, export."""
    session_id = session_id or spec.title
    meter = MeteredBackend(backend)
    model = new_initial_session(config.screen_width, config.screen_height,
                                config.fps)
    store.save(session_id, model)
    plan = decompose_spec(spec, meter, registry, config.max_steps)
    model = model.with_metadata(
        plan=json.dumps(list(plan.steps)),
        spec_title=spec.title,
        current_query_index="0",
        tokens_input=str(meter.input_tokens),
        tokens_output=str(meter.output_tokens))
    store.save(session_id, model)
    return _run_steps(session_id, model, list(plan.steps), 0, config, meter,
                      registry, store, sanity)


def resume_pipeline(session_id: str, config: RunConfig, backend: Backend,
                    registry: prompts.PromptRegistry, store: SessionStore,
                    sanity: SanityFn | None = None) -> PipelineResult:
    """Continue an interrupted run from the last committed step."""
    model = store.load(session_id)  # raises UnknownSession
    plan = json.loads(model.metadata.get("plan", "[]"))
    meter = MeteredBackend(backend)
    # Resume token accounting from the persisted totals.
    meter.input_tokens = int(model.metadata.get("tokens_input", "0"))
    meter.output_tokens = int(model.metadata.get("tokens_output", "0"))
    start = len(model.queries)
    if start >= len(plan):
        report = _build_report(model, session_id, None, None)
        return PipelineResult(session_id, model, export_code(model), report,
                              success=True)
    return _run_steps(session_id, model, plan, start, config, meter, registry,
                      store, sanity)
