"""Planner-designer-critic refinement loop with checkpoint rollback.

One generic loop drives every component kind: the designer proposes an
artifact, the critic scores it, and the deterministic planner policy decides
accept / rollback / refine. The checkpoint always holds the best-scoring
artifact so far, so checkpoint totals are non-decreasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .backend import Backend, ChatMessage, ChatRequest
from .errors import (CritiqueFailure, DesignFailure, InvalidArtifact,
                     SchemaViolation, ToolOrderViolation)
from .model import ScopeSet, SessionModel, StateVariable
from .schemas import parse_critique
from .scoring import (Critique, ComponentKind, PlannerDecision, deltas,
                      format_deltas, planner_policy, total)


@dataclass(frozen=True)
class SubFunctionSpec:
    name: str
    description: str


@dataclass(frozen=True)
class StepDecomposition:
    """At most one sub-function per MVC slot; at least one present."""

    input_logic: SubFunctionSpec | None = None
    state_transition: SubFunctionSpec | None = None
    ui_rendering: SubFunctionSpec | None = None

    def __post_init__(self):
        if (self.input_logic is None and self.state_transition is None
                and self.ui_rendering is None):
            raise ValueError("decomposition needs at least one sub-function")


@dataclass(frozen=True)
class StateChangePayload:
    relevant_variables: tuple[str, ...]
    new_variables: tuple[StateVariable, ...]


@dataclass(frozen=True)
class FunctionPayload:
    function_name: str
    description: str
    implementation: str
    relevant_state: tuple[str, ...]


@dataclass(frozen=True)
class DesignerArtifact:
    kind: ComponentKind
    payload: StateChangePayload | StepDecomposition | FunctionPayload
    raw: dict[str, Any] = field(default_factory=dict, compare=False)


@dataclass
class TrioRound:
    artifact: DesignerArtifact
    critique: Critique
    decision: PlannerDecision


@dataclass
class RefinementTrace:
    """Full record of one trio run, including the checkpoint trajectory."""

    kind: ComponentKind
    rounds: list[TrioRound]
    checkpoint_artifact: DesignerArtifact
    checkpoint_critique: Critique
    checkpoint_totals: list[int]
    accepted: bool
    rounds_used: int

    def summary(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "accepted": self.accepted,
            "rounds_used": self.rounds_used,
            "decisions": [r.decision.value for r in self.rounds],
            "totals": [total(r.critique) for r in self.rounds],
            "checkpoint_totals": list(self.checkpoint_totals),
            "checkpoint_total": total(self.checkpoint_critique),
        }


@dataclass
class TrioConfig:
    tau: int = 8
    n_max: int = 3


def _parse_artifact(kind: ComponentKind, data: dict[str, Any]) -> DesignerArtifact:
    """Turn a schema-valid designer response into a typed artifact."""
    try:
        if kind is ComponentKind.STATE_CHANGE:
            payload: Any = StateChangePayload(
                relevant_variables=tuple(data["relevant_variables"]),
                new_variables=tuple(
                    StateVariable(name=v["name"], value=v["value"],
                                  value_type=v["value_type"],
                                  description=v.get("description", ""),
                                  dont_clean=v.get("dont_clean", False))
                    for v in data["new_variables"]))
        elif kind is ComponentKind.DECOMPOSE:
            def spec(slot):
                item = data[slot]
                return None if item is None else SubFunctionSpec(
                    item["name"], item["description"])
            payload = StepDecomposition(input_logic=spec("input_logic"),
                                        state_transition=spec("state_transition"),
                                        ui_rendering=spec("ui_rendering"))
        else:
            payload = FunctionPayload(
                function_name=data["function_name"],
                description=data["description"],
                implementation=data["implementation"],
                relevant_state=tuple(data["relevant_state"]))
            if not payload.function_name.isidentifier():
                raise ValueError(
                    f"not a legal identifier: {payload.function_name!r}")
    except ValueError as exc:
        raise InvalidArtifact(f"{kind.value}: {exc}") from exc
    return DesignerArtifact(kind=kind, payload=payload, raw=data)


def _artifact_text(artifact: DesignerArtifact) -> str:
    """Serialize an artifact for critic and revision messages."""
    p = artifact.payload
    if isinstance(p, StateChangePayload):
        lines = ["Relevant existing variables: "
                 + (", ".join(p.relevant_variables) or "(none)")]
        lines.append("New variables:")
        for v in p.new_variables:
            lines.append(f"  {v.name} ({v.value_type}) = {v.value}"
                         f"  # {v.description}")
        if not p.new_variables:
            lines.append("  (none)")
        return "\n".join(lines)
    if isinstance(p, StepDecomposition):
        lines = []
        for slot in ("input_logic", "state_transition", "ui_rendering"):
            spec = getattr(p, slot)
            lines.append(f"{slot}: " + ("(none)" if spec is None
                                        else f"{spec.name} - {spec.description}"))
        return "\n".join(lines)
    return (f"Function: {p.function_name}\n{p.description}\n\n"
            f"{p.implementation}")


class PlannerToolbox:
    """The planner's tools, with their legal invocation order enforced.

    Order: request_initial_design before any critique; a critique before any
    design change or rollback. Each tool delegates to the designer or critic
    backend and appends to the trace.
    """

    def __init__(self, kind: ComponentKind, scoped_context: str,
                 instruction: str, backend: Backend,
                 registry: prompts.PromptRegistry, step_index: int = 0):
        self.kind = kind
        self.scoped_context = scoped_context
        self.instruction = instruction
        self.backend = backend
        self.registry = registry
        self.step_index = step_index
        self.round = 0
        self.artifacts: list[DesignerArtifact] = []
        self.critiques: list[Critique] = []
        self.checkpoint: tuple[DesignerArtifact, Critique] | None = None
        self._revision_base: DesignerArtifact | None = None

    # -- request composition -------------------------------------------------

    def _designer_prompt(self) -> str:
        return prompts.render(self.registry, f"{self.kind.value}/designer")

    def _critic_prompt(self) -> str:
        return prompts.render(self.registry, f"{self.kind.value}/critic")

    def _context_block(self) -> str:
        return (f"Step instruction:\n{self.instruction}\n\n"
                f"Scoped context:\n{self.scoped_context}")

    def _call_designer(self, message: str) -> DesignerArtifact:
        request = ChatRequest(
            role_prompt=self._designer_prompt(),
            messages=[ChatMessage("user", message)],
            required_schema=f"artifact:{self.kind.value}",
            tags={"role": f"{self.kind.value}.designer",
                  "step": self.step_index, "round": self.round})
        try:
            response = self.backend.complete(request)
        except SchemaViolation as exc:
            raise DesignFailure(f"{self.kind.value}: {exc}") from exc
        artifact = _parse_artifact(self.kind, response.content)
        self.artifacts.append(artifact)
        return artifact

    # -- planner tools -------------------------------------------------------

    def request_initial_design(self) -> DesignerArtifact:
        if self.artifacts:
            raise ToolOrderViolation("initial design already requested")
        return self._call_designer(self._context_block())

    def request_critique(self) -> Critique:
        if not self.artifacts:
            raise ToolOrderViolation("critique requested before any design")
        if len(self.critiques) >= len(self.artifacts):
            raise ToolOrderViolation("artifact already critiqued")
        artifact = self.artifacts[-1]
        request = ChatRequest(
            role_prompt=self._critic_prompt(),
            messages=[ChatMessage("user",
                                  self._context_block() + "\n\nDesigner output:\n"
                                  + _artifact_text(artifact))],
            required_schema=f"critique:{self.kind.value}",
            tags={"role": f"{self.kind.value}.critic",
                  "step": self.step_index, "round": self.round})
        try:
            response = self.backend.complete(request)
        except SchemaViolation as exc:
            raise CritiqueFailure(f"{self.kind.value}: {exc}") from exc
        critique = parse_critique(self.kind, response.content)
        self.critiques.append(critique)
        return critique

    def request_design_change(self, instruction: str) -> DesignerArtifact:
        if not self.critiques:
            raise ToolOrderViolation("design change requested before critique")
        self.round += 1
        base = self._revision_base or self.artifacts[-1]
        self._revision_base = None
        message = (self._context_block()
                   + "\n\nCurrent design:\n" + _artifact_text(base)
                   + "\n\n" + instruction)
        return self._call_designer(message)

    def reset_to_previous_checkpoint(self) -> DesignerArtifact:
        if self.checkpoint is None:
            raise ToolOrderViolation("no checkpoint to reset to")
        self._revision_base = self.checkpoint[0]
        return self.checkpoint[0]


def _revision_instruction(critiques: list[Critique]) -> str:
    """Compose the design-change message from the critique history."""
    latest = critiques[-1]
    parts = ["Revise the design to address this critique:",
             latest.feedback]
    if latest.suggestions:
        parts.append("Prioritized suggestions:")
        parts.extend(f"- {s}" for s in latest.suggestions)
    if len(critiques) >= 2:
        parts.append("Category score changes in the last round:")
        parts.append(format_deltas(deltas(critiques[-2], critiques[-1])))
    return "\n".join(parts)


def run_trio(kind: ComponentKind, scoped_context: str, instruction: str,
             config: TrioConfig, backend: Backend,
             registry: prompts.PromptRegistry,
             step_index: int = 0) -> RefinementTrace:
    """Run the refinement loop for one component kind.

    Exits on accept (every latest category score >= tau) or after n_max
    refinement rounds. Always returns the checkpoint artifact; `accepted`
    records whether the threshold was met.
    """
    toolbox = PlannerToolbox(kind, scoped_context, instruction, backend,
                             registry, step_index)
    artifact = toolbox.request_initial_design()
    critique = toolbox.request_critique()
    toolbox.checkpoint = (artifact, critique)
    checkpoint_totals = [total(critique)]
    decision = planner_policy(toolbox.critiques, config.tau)
    rounds = [TrioRound(artifact, critique, decision)]

    refinements = 0
    while decision is not PlannerDecision.ACCEPT and refinements < config.n_max:
        refinements += 1
        if decision is PlannerDecision.ROLLBACK:
            # Revise from the checkpoint, informed by the regressed round.
            toolbox.reset_to_previous_checkpoint()
        artifact = toolbox.request_design_change(
            _revision_instruction(toolbox.critiques))
        critique = toolbox.request_critique()
        decision = planner_policy(toolbox.critiques, config.tau)
        if total(critique) >= total(toolbox.checkpoint[1]):
            toolbox.checkpoint = (artifact, critique)
        checkpoint_totals.append(total(toolbox.checkpoint[1]))
        rounds.append(TrioRound(artifact, critique, decision))

    checkpoint_artifact, checkpoint_critique = toolbox.checkpoint
    return RefinementTrace(
        kind=kind,
        rounds=rounds,
        checkpoint_artifact=checkpoint_artifact,
        checkpoint_critique=checkpoint_critique,
        checkpoint_totals=checkpoint_totals,
        accepted=decision is PlannerDecision.ACCEPT,
        rounds_used=len(rounds),
    )


def run_state_change(session: SessionModel, instruction: str,
                     config: TrioConfig, backend: Backend,
                     registry: prompts.PromptRegistry, step_index: int = 0,
                     ) -> tuple[ScopeSet, tuple[StateVariable, ...],
                                RefinementTrace]:
    """Identify relevant existing variables and define new ones for a step.

    This trio performs scope selection itself, so it sees the full variable
    list; every later trio in the step sees only the resulting scope.
    """
    from .model import full_scope, project_context

    context = project_context(session, full_scope(session))
    trace = run_trio(ComponentKind.STATE_CHANGE, context, instruction, config,
                     backend, registry, step_index)
    payload = trace.checkpoint_artifact.payload
    assert isinstance(payload, StateChangePayload)

    live = set(session.variable_names())
    for name in payload.relevant_variables:
        if name not in live:
            raise InvalidArtifact(
                f"state_change names unknown variable {name!r} as relevant")
    if not payload.relevant_variables and not payload.new_variables:
        raise InvalidArtifact(
            "state_change produced neither relevant nor new variables")
    new_names = [v.name for v in payload.new_variables]
    if len(new_names) != len(set(new_names)):
        raise InvalidArtifact("duplicate names among new variables")
    for name in new_names:
        if name in live:
            raise InvalidArtifact(
                f"new variable {name!r} collides with an existing one")

    scope_vars = frozenset(payload.relevant_variables) | frozenset(new_names)
    overlapping = frozenset(
        fn.name for fn in session.functions
        if scope_vars & set(fn.relevant_state))
    scope = ScopeSet(variable_names=scope_vars, function_names=overlapping)
    return scope, payload.new_variables, trace
