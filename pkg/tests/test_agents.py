"""The refinement trio: loop behavior, tools, rollback, state-change step."""

import pytest

from simgen import prompts
from simgen.agents import (PlannerToolbox, StateChangePayload,
                           StepDecomposition, SubFunctionSpec, TrioConfig,
                           run_state_change, run_trio)
from simgen.backend import Scenario, ScenarioEntry, ScriptedBackend
from simgen.errors import (CritiqueFailure, InvalidArtifact,
                           ToolOrderViolation)
from simgen.model import new_initial_session
from simgen.scoring import ComponentKind, PlannerDecision, total

from conftest import critique_content, designer_content, trio_scenario

REGISTRY = prompts.load_registry()
KIND = ComponentKind.STATE_TRANSITION


def run(score_vectors, tau=8, n_max=3, kind=KIND):
    backend = trio_scenario(kind, score_vectors)
    trace = run_trio(kind, "state.score = 0", "do the thing",
                     TrioConfig(tau=tau, n_max=n_max), backend, REGISTRY)
    return trace, backend


class TestRunTrio:
    def test_immediate_accept(self):
        trace, _ = run([(9, 9, 9)])
        assert trace.accepted
        assert trace.rounds_used == 1
        assert trace.rounds[0].decision is PlannerDecision.ACCEPT
        assert trace.checkpoint_totals == [27]

    def test_rollback_then_recovery(self):
        # Hand-traced: totals 15 -> 14 (rollback) -> 21 (checkpoint moves),
        # then the round budget of 2 refinements is exhausted.
        trace, _ = run([(5, 5, 5), (4, 5, 5), (7, 7, 7)], n_max=2)
        assert [r.decision for r in trace.rounds] == [
            PlannerDecision.REFINE, PlannerDecision.ROLLBACK,
            PlannerDecision.REFINE]
        assert trace.checkpoint_totals == [15, 15, 21]
        assert total(trace.checkpoint_critique) == 21
        assert not trace.accepted
        assert trace.rounds_used == 3

    def test_exhaustion_keeps_first_checkpoint(self):
        trace, _ = run([(5, 5, 5)] * 4, n_max=3)
        assert trace.rounds_used == 4
        assert not trace.accepted
        # Ties never regress, so the checkpoint walks forward; totals stay 15.
        assert trace.checkpoint_totals == [15, 15, 15, 15]
        assert total(trace.checkpoint_critique) == 15

    def test_round_bound(self):
        trace, _ = run([(1, 1, 1)] * 10, n_max=2)
        assert trace.rounds_used == 3  # initial + n_max refinements

    def test_n_max_zero_is_single_shot(self):
        trace, _ = run([(2, 2, 2)], n_max=0)
        assert trace.rounds_used == 1
        assert not trace.accepted

    def test_rollback_restores_checkpoint_as_revision_base(self):
        _, backend = run([(6, 6, 6), (5, 5, 5), (9, 9, 9)])
        # Round 2's designer request revises from the round-0 artifact.
        designer_requests = [r for r in backend.request_log
                             if r.tags["role"].endswith(".designer")]
        round2 = next(r for r in designer_requests if r.tags["round"] == 2)
        body = round2.messages[-1].content
        assert "fn_r0" in body and "fn_r1" not in body

    def test_design_change_includes_formatted_deltas(self):
        _, backend = run([(6, 6, 6), (5, 7, 6), (9, 9, 9)])
        designer_requests = [r for r in backend.request_log
                             if r.tags["role"].endswith(".designer")]
        round2 = next(r for r in designer_requests if r.tags["round"] == 2)
        body = round2.messages[-1].content
        assert "Correctness: 6 → 5 (-1)" in body
        assert "State Usage: 6 → 7 (+1)" in body

    def test_policy_conformance_recorded_per_round(self):
        from simgen.scoring import planner_policy
        trace, _ = run([(6, 6, 6), (5, 5, 5), (7, 7, 7), (9, 9, 9)], n_max=3)
        critiques = [r.critique for r in trace.rounds]
        for i, round_ in enumerate(trace.rounds):
            assert round_.decision is planner_policy(critiques[:i + 1], 8)

    def test_bad_critique_payload_raises(self):
        entries = [
            ScenarioEntry(role=f"{KIND.value}.designer", step=0, round=0,
                          content=designer_content(KIND)),
            ScenarioEntry(role=f"{KIND.value}.critic", step=0, round=0,
                          content={"correctness": 5, "feedback": "x",
                                   "suggestions": []}),
        ]
        backend = ScriptedBackend(Scenario(entries))
        with pytest.raises(CritiqueFailure):
            run_trio(KIND, "", "q", TrioConfig(), backend, REGISTRY)


class TestPlannerToolbox:
    def _toolbox(self, backend):
        return PlannerToolbox(KIND, "ctx", "q", backend, REGISTRY)

    def test_critique_before_design_rejected(self):
        toolbox = self._toolbox(trio_scenario(KIND, [(9, 9, 9)]))
        with pytest.raises(ToolOrderViolation):
            toolbox.request_critique()

    def test_change_before_critique_rejected(self):
        toolbox = self._toolbox(trio_scenario(KIND, [(9, 9, 9)]))
        toolbox.request_initial_design()
        with pytest.raises(ToolOrderViolation):
            toolbox.request_design_change("fix it")

    def test_double_initial_design_rejected(self):
        toolbox = self._toolbox(trio_scenario(KIND, [(9, 9, 9)] * 2))
        toolbox.request_initial_design()
        with pytest.raises(ToolOrderViolation):
            toolbox.request_initial_design()

    def test_reset_without_checkpoint_rejected(self):
        toolbox = self._toolbox(trio_scenario(KIND, [(9, 9, 9)]))
        with pytest.raises(ToolOrderViolation):
            toolbox.reset_to_previous_checkpoint()


def state_change_backend(content, scores=(9, 9, 9)):
    entries = [
        ScenarioEntry(role="state_change.designer", step=0, round=0,
                      content=content),
        ScenarioEntry(role="state_change.critic", step=0, round=0,
                      content=critique_content(ComponentKind.STATE_CHANGE,
                                               scores)),
    ]
    return ScriptedBackend(Scenario(entries))


class TestRunStateChange:
    def test_new_variables_and_scope(self):
        content = {
            "relevant_variables": ["screen_height"],
            "new_variables": [
                {"name": "ball_x", "value": "400.0", "value_type": "float",
                 "description": "ball x"},
                {"name": "ball_y", "value": "0.0", "value_type": "float",
                 "description": "ball y"},
                {"name": "ball_vy", "value": "4.0", "value_type": "float",
                 "description": "ball fall speed"},
            ],
        }
        session = new_initial_session()
        scope, new_vars, trace = run_state_change(
            session, "add a falling ball", TrioConfig(),
            state_change_backend(content), REGISTRY)
        assert {v.name for v in new_vars} == {"ball_x", "ball_y", "ball_vy"}
        assert scope.variable_names == {"screen_height", "ball_x", "ball_y",
                                        "ball_vy"}
        assert trace.accepted

    def test_unknown_relevant_variable_rejected(self):
        content = {"relevant_variables": ["gravityy"], "new_variables": []}
        with pytest.raises(InvalidArtifact, match="gravityy"):
            run_state_change(new_initial_session(), "q", TrioConfig(),
                             state_change_backend(content), REGISTRY)

    def test_pure_reuse_step_is_valid(self):
        content = {"relevant_variables": ["score"], "new_variables": []}
        scope, new_vars, _ = run_state_change(
            new_initial_session(), "q", TrioConfig(),
            state_change_backend(content), REGISTRY)
        assert new_vars == ()
        assert scope.variable_names == {"score"}

    def test_empty_both_lists_rejected(self):
        content = {"relevant_variables": [], "new_variables": []}
        with pytest.raises(InvalidArtifact):
            run_state_change(new_initial_session(), "q", TrioConfig(),
                             state_change_backend(content), REGISTRY)

    def test_colliding_new_variable_rejected(self):
        content = {"relevant_variables": [],
                   "new_variables": [{"name": "score", "value": "0",
                                      "value_type": "int"}]}
        with pytest.raises(InvalidArtifact, match="collides"):
            run_state_change(new_initial_session(), "q", TrioConfig(),
                             state_change_backend(content), REGISTRY)

    def test_overlapping_functions_enter_scope(self):
        from conftest import make_function
        session = new_initial_session().with_function(
            make_function("tick_score", relevant_state=("score",)))
        content = {"relevant_variables": ["score"], "new_variables": []}
        scope, _, _ = run_state_change(session, "q", TrioConfig(),
                                       state_change_backend(content), REGISTRY)
        assert scope.function_names == {"tick_score"}


class TestStepDecomposition:
    def test_all_empty_rejected(self):
        with pytest.raises(ValueError):
            StepDecomposition()

    def test_single_slot_is_enough(self):
        decomposition = StepDecomposition(
            ui_rendering=SubFunctionSpec("draw", "draw it"))
        assert decomposition.input_logic is None
